#include "adaudit/models/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "adaudit/error.hpp"
#include "adaudit/models/logreg.hpp"

namespace adaudit::models {
namespace {

// Four partial sums; fixed order keeps results reproducible.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void expect_size(const std::vector<double>& v, std::size_t n, const char* what) {
  if (v.size() != n) {
    std::ostringstream os;
    os << "cnn " << what << " has " << v.size() << " values, expected " << n;
    throw DimensionMismatch(os.str());
  }
}

void glorot(std::vector<double>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& x : w) x = rng.uniform(-limit, limit);
}

void accumulate_backward(const CnnModel& model, const CnnCache& cache, Label label, CnnModel& grad) {
  const auto& cfg = model.config;
  const std::size_t F = cfg.filters_per_width;
  const std::size_t P = cfg.pooled_len();
  const std::size_t H = cfg.hidden;
  const std::size_t d = cfg.embed_dim;

  const double dlogit = cache.probability - as_target(label);
  grad.out_b[0] += dlogit;
  std::vector<double> dhidden(H);
  for (std::size_t h = 0; h < H; ++h) {
    grad.out_w[h] += dlogit * cache.hidden[h];
    dhidden[h] = cache.hidden_pre[h] > 0.0 ? dlogit * model.out_w[h] * cache.hidden_mask[h] : 0.0;
  }

  std::vector<double> dpooled(P, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    const double g = dhidden[h];
    grad.dense_b[h] += g;
    if (g == 0.0) continue;
    double* gw = grad.dense_w.data() + h * P;
    const double* w = model.dense_w.data() + h * P;
    for (std::size_t j = 0; j < P; ++j) {
      gw[j] += g * cache.pooled[j];
      dpooled[j] += g * w[j];
    }
  }

  const std::size_t n = cache.input.rows;
  for (std::size_t b = 0; b < model.conv.size(); ++b) {
    const std::size_t w = model.conv[b].width;
    const std::size_t steps = n - w + 1;
    const std::span<const double> seg(dpooled.data() + b * F, F);
    const auto dact = max_pool_backward(cache.argmax[b], seg, steps, F);
    auto& gbank = grad.conv[b];
    const auto& act = cache.conv[b];
    for (std::size_t f = 0; f < F; ++f) {
      const std::size_t t = cache.argmax[b][f];
      const std::size_t at = t * F + f;
      if (act[at] <= 0.0 || dact[at] == 0.0) continue;
      const double dz = dact[at];
      gbank.bias[f] += dz;
      double* gw = gbank.weights.data() + f * w * d;
      const double* x = cache.input.data.data() + t * d;
      for (std::size_t k = 0; k < w * d; ++k) gw[k] += dz * x[k];
    }
  }
}

}  // namespace

std::size_t CnnConfig::max_width() const {
  return filter_widths.empty() ? 0 : *std::max_element(filter_widths.begin(), filter_widths.end());
}

void CnnConfig::validate() const {
  if (embed_dim == 0) throw std::invalid_argument("cnn embed_dim must be >= 1");
  if (filter_widths.empty()) throw std::invalid_argument("cnn needs at least one filter width");
  for (const auto w : filter_widths)
    if (w == 0) throw std::invalid_argument("cnn filter width must be >= 1");
  if (filters_per_width == 0) throw std::invalid_argument("cnn filters_per_width must be >= 1");
  if (hidden == 0) throw std::invalid_argument("cnn hidden must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("cnn dropout must be in [0, 1)");
}

CnnModel CnnModel::zeros(const CnnConfig& config) {
  config.validate();
  CnnModel m;
  m.config = config;
  for (const auto w : config.filter_widths) {
    ConvBank bank;
    bank.width = w;
    bank.weights.assign(config.filters_per_width * w * config.embed_dim, 0.0);
    bank.bias.assign(config.filters_per_width, 0.0);
    m.conv.push_back(std::move(bank));
  }
  m.dense_w.assign(config.hidden * config.pooled_len(), 0.0);
  m.dense_b.assign(config.hidden, 0.0);
  m.out_w.assign(config.hidden, 0.0);
  m.out_b.assign(1, 0.0);
  return m;
}

CnnModel CnnModel::init(const CnnConfig& config, std::uint64_t seed) {
  CnnModel m = zeros(config);
  Rng rng(seed);
  for (auto& bank : m.conv)
    glorot(bank.weights, bank.width * config.embed_dim, bank.width * config.filters_per_width, rng);
  glorot(m.dense_w, config.pooled_len(), config.hidden, rng);
  glorot(m.out_w, config.hidden, 1, rng);
  return m;
}

std::vector<std::span<double>> CnnModel::parameters() {
  std::vector<std::span<double>> out;
  for (auto& bank : conv) {
    out.emplace_back(bank.weights);
    out.emplace_back(bank.bias);
  }
  out.emplace_back(dense_w);
  out.emplace_back(dense_b);
  out.emplace_back(out_w);
  out.emplace_back(out_b);
  return out;
}

std::vector<std::span<const double>> CnnModel::parameters() const {
  std::vector<std::span<const double>> out;
  for (const auto& bank : conv) {
    out.emplace_back(bank.weights);
    out.emplace_back(bank.bias);
  }
  out.emplace_back(dense_w);
  out.emplace_back(dense_b);
  out.emplace_back(out_w);
  out.emplace_back(out_b);
  return out;
}

void CnnModel::validate() const {
  config.validate();
  if (conv.size() != config.filter_widths.size()) throw DimensionMismatch("cnn conv bank count mismatch");
  for (std::size_t b = 0; b < conv.size(); ++b) {
    if (conv[b].width != config.filter_widths[b]) throw DimensionMismatch("cnn conv width mismatch");
    expect_size(conv[b].weights, config.filters_per_width * conv[b].width * config.embed_dim, "conv weights");
    expect_size(conv[b].bias, config.filters_per_width, "conv bias");
  }
  expect_size(dense_w, config.hidden * config.pooled_len(), "dense weights");
  expect_size(dense_b, config.hidden, "dense bias");
  expect_size(out_w, config.hidden, "output weights");
  expect_size(out_b, 1, "output bias");
}

PoolResult global_max_pool(std::span<const double> activations, std::size_t steps, std::size_t filters) {
  if (steps == 0) throw std::invalid_argument("max pool over zero steps");
  PoolResult r;
  r.values.assign(activations.begin(), activations.begin() + static_cast<std::ptrdiff_t>(filters));
  r.argmax.assign(filters, 0);
  for (std::size_t t = 1; t < steps; ++t) {
    const double* row = activations.data() + t * filters;
    for (std::size_t f = 0; f < filters; ++f) {
      if (row[f] > r.values[f]) {
        r.values[f] = row[f];
        r.argmax[f] = t;
      }
    }
  }
  return r;
}

std::vector<double> max_pool_backward(std::span<const std::size_t> argmax, std::span<const double> grad,
                                      std::size_t steps, std::size_t filters) {
  std::vector<double> out(steps * filters, 0.0);
  for (std::size_t f = 0; f < filters; ++f) out[argmax[f] * filters + f] += grad[f];
  return out;
}

double bce_from_logit(double logit, Label label) {
  const double y = as_target(label);
  const double softplus = logit > 0.0 ? logit + std::log1p(std::exp(-logit)) : std::log1p(std::exp(logit));
  return softplus - y * logit;
}

CnnForward cnn_forward(const CnnModel& model, const text::TokenMatrix& input, Mode mode, Rng* rng) {
  const auto& cfg = model.config;
  if (input.dim != cfg.embed_dim)
    throw DimensionMismatch("input dim " + std::to_string(input.dim) + " != embed dim " +
                            std::to_string(cfg.embed_dim));
  if (input.rows == 0) throw DataError("empty sequence");
  if (mode == Mode::train && rng == nullptr) throw std::invalid_argument("train-mode forward needs an rng");
  const bool drop = mode == Mode::train && cfg.dropout > 0.0;
  const double keep_scale = 1.0 / (1.0 - cfg.dropout);

  CnnForward out;
  CnnCache& c = out.cache;
  const std::size_t d = cfg.embed_dim;
  const std::size_t n = std::max(input.rows, cfg.max_width());
  c.input = text::TokenMatrix(n, d);
  std::copy(input.data.begin(), input.data.end(), c.input.data.begin());
  if (drop)
    for (auto& x : c.input.data) x = rng->bernoulli(cfg.dropout) ? 0.0 : x * keep_scale;

  const std::size_t F = cfg.filters_per_width;
  c.pooled.assign(cfg.pooled_len(), 0.0);
  c.conv.resize(model.conv.size());
  c.argmax.resize(model.conv.size());
  for (std::size_t b = 0; b < model.conv.size(); ++b) {
    const auto& bank = model.conv[b];
    const std::size_t w = bank.width;
    const std::size_t steps = n - w + 1;
    auto& act = c.conv[b];
    act.resize(steps * F);
    for (std::size_t t = 0; t < steps; ++t) {
      const double* x = c.input.data.data() + t * d;
      for (std::size_t f = 0; f < F; ++f) {
        const double z = bank.bias[f] + dot(bank.weights.data() + f * w * d, x, w * d);
        act[t * F + f] = z > 0.0 ? z : 0.0;
      }
    }
    auto pooled = global_max_pool(act, steps, F);
    std::copy(pooled.values.begin(), pooled.values.end(), c.pooled.begin() + static_cast<std::ptrdiff_t>(b * F));
    c.argmax[b] = std::move(pooled.argmax);
  }

  const std::size_t H = cfg.hidden;
  const std::size_t P = cfg.pooled_len();
  c.hidden_pre.resize(H);
  c.hidden.resize(H);
  c.hidden_mask.assign(H, 1.0);
  for (std::size_t h = 0; h < H; ++h) {
    c.hidden_pre[h] = model.dense_b[h] + dot(model.dense_w.data() + h * P, c.pooled.data(), P);
    if (drop) c.hidden_mask[h] = rng->bernoulli(cfg.dropout) ? 0.0 : keep_scale;
    c.hidden[h] = (c.hidden_pre[h] > 0.0 ? c.hidden_pre[h] : 0.0) * c.hidden_mask[h];
  }
  c.logit = model.out_b[0] + dot(model.out_w.data(), c.hidden.data(), H);
  c.probability = sigmoid(c.logit);
  out.probability = c.probability;
  return out;
}

CnnModel cnn_backward(const CnnModel& model, const CnnCache& cache, Label label) {
  CnnModel grad = CnnModel::zeros(model.config);
  accumulate_backward(model, cache, label, grad);
  return grad;
}

CnnModel cnn_train(std::span<const CnnExample> dataset, const TrainConfig& cfg, CnnModel model, RmsPropState& opt,
                   std::vector<double>* epoch_losses) {
  cfg.validate();
  model.validate();
  bool pos = false;
  bool neg = false;
  for (const auto& ex : dataset) (ex.label == Label::political ? pos : neg) = true;
  if (!pos || !neg) throw DegenerateTrainingSet();

  Rng order_rng(cfg.seed);
  Rng dropout_rng(Rng::mix(cfg.seed, 1));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CnnModel grad = CnnModel::zeros(model.config);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      for (auto p : grad.parameters()) std::fill(p.begin(), p.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& ex = dataset[order[i]];
        const auto fwd = cnn_forward(model, ex.input, Mode::train, &dropout_rng);
        batch_loss += bce_from_logit(fwd.cache.logit, ex.label);
        accumulate_backward(model, fwd.cache, ex.label, grad);
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << " batch " << batch_no;
        throw TrainingDiverged(os.str());
      }
      epoch_loss += batch_loss;
      const double scale = 1.0 / static_cast<double>(stop - start);
      auto grads = grad.parameters();
      std::vector<std::span<const double>> const_grads;
      const_grads.reserve(grads.size());
      for (auto g : grads) {
        for (auto& x : g) x *= scale;
        const_grads.emplace_back(g);
      }
      const auto params = model.parameters();
      opt.step(params, const_grads);
    }
    if (epoch_losses) epoch_losses->push_back(epoch_loss / static_cast<double>(dataset.size()));
  }
  return model;
}

}  // namespace adaudit::models
