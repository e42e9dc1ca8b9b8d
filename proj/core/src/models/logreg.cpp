#include "adaudit/models/logreg.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "adaudit/error.hpp"
#include "adaudit/random.hpp"

namespace adaudit::models {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_inputs(DenseRows features, std::span<const Label> labels) {
  if (features.size() != labels.size()) throw std::invalid_argument("features and labels differ in length");
  if (features.empty()) throw DegenerateTrainingSet();
  const std::size_t dim = features.front().size();
  bool pos = false;
  bool neg = false;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != dim) throw DimensionMismatch("feature rows have different lengths");
    for (const double x : features[i])
      if (!std::isfinite(x)) throw DataError("non-finite feature in row " + std::to_string(i));
    (labels[i] == Label::political ? pos : neg) = true;
  }
  if (!pos || !neg) throw DegenerateTrainingSet();
}

std::string describe(double lr, double l2) {
  std::ostringstream os;
  os << "logistic regression diverged (lr=" << lr << ", l2=" << l2 << ")";
  return os.str();
}

LogRegModel fit(DenseRows features, std::span<const Label> labels, std::size_t epochs, double lr, double l2,
                std::vector<double>* trace) {
  LogRegModel m;
  m.weights.assign(features.front().size(), 0.0);
  m.lr = lr;
  m.l2 = l2;
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto g = logreg_loss_and_grad(m, features, labels, l2);
    if (!std::isfinite(g.loss)) throw TrainingDiverged(describe(lr, l2));
    if (trace) trace->push_back(g.loss);
    for (std::size_t k = 0; k < m.weights.size(); ++k) m.weights[k] -= lr * g.weights[k];
    m.bias -= lr * g.bias;
  }
  const auto final_loss = logreg_loss_and_grad(m, features, labels, l2).loss;
  if (!std::isfinite(final_loss)) throw TrainingDiverged(describe(lr, l2));
  if (trace) trace->push_back(final_loss);
  return m;
}

}  // namespace

double predict_proba_logreg(const LogRegModel& model, std::span<const double> x) {
  if (x.size() != model.weights.size())
    throw DimensionMismatch("feature dim " + std::to_string(x.size()) + " != model dim " +
                            std::to_string(model.weights.size()));
  return sigmoid(dot(model.weights, x) + model.bias);
}

LogRegGradient logreg_loss_and_grad(const LogRegModel& model, DenseRows features, std::span<const Label> labels,
                                    double l2) {
  LogRegGradient g;
  g.weights.assign(model.weights.size(), 0.0);
  const double n = static_cast<double>(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double z = dot(model.weights, features[i]) + model.bias;
    const double y = as_target(labels[i]);
    g.loss += softplus(z) - y * z;
    const double r = sigmoid(z) - y;
    for (std::size_t k = 0; k < g.weights.size(); ++k) g.weights[k] += r * features[i][k];
    g.bias += r;
  }
  g.loss /= n;
  g.bias /= n;
  double sq = 0.0;
  for (std::size_t k = 0; k < g.weights.size(); ++k) {
    g.weights[k] = g.weights[k] / n + l2 * model.weights[k];
    sq += model.weights[k] * model.weights[k];
  }
  g.loss += 0.5 * l2 * sq;
  return g;
}

LogRegModel train_logreg(DenseRows features, std::span<const Label> labels, const TrainConfig& cfg,
                         std::vector<double>* loss_trace) {
  cfg.validate();
  check_inputs(features, labels);
  if (!cfg.grid) return fit(features, labels, cfg.epochs, cfg.lr, cfg.l2, loss_trace);

  // Stratified 80/20 split so both halves see both classes.
  Rng rng(cfg.seed);
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == Label::political ? pos : neg).push_back(i);
  rng.shuffle(pos);
  rng.shuffle(neg);
  std::vector<std::vector<double>> train_x;
  std::vector<Label> train_y;
  std::vector<std::size_t> val;
  for (const auto* cls : {&pos, &neg}) {
    const std::size_t cut = std::max<std::size_t>(1, cls->size() * 4 / 5);
    for (std::size_t j = 0; j < cls->size(); ++j) {
      const std::size_t i = (*cls)[j];
      if (j < cut) {
        train_x.push_back(features[i]);
        train_y.push_back(labels[i]);
      } else {
        val.push_back(i);
      }
    }
  }

  double best_acc = -1.0;
  double best_lr = cfg.lr;
  double best_l2 = cfg.l2;
  for (const double lr : cfg.grid->lr) {
    for (const double l2 : cfg.grid->l2) {
      LogRegModel m;
      try {
        m = fit(train_x, train_y, cfg.epochs, lr, l2, nullptr);
      } catch (const TrainingDiverged&) {
        continue;
      }
      std::size_t correct = 0;
      for (const std::size_t i : val)
        correct += (predict_proba_logreg(m, features[i]) >= 0.5) == (labels[i] == Label::political);
      const double acc = val.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(val.size());
      if (acc > best_acc) {
        best_acc = acc;
        best_lr = lr;
        best_l2 = l2;
      }
    }
  }
  if (best_acc < 0.0) throw TrainingDiverged("every grid point diverged");
  return fit(features, labels, cfg.epochs, best_lr, best_l2, loss_trace);
}

}  // namespace adaudit::models
