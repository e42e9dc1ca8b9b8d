#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "adaudit/error.hpp"
#include "adaudit/models/classifier.hpp"
#include "adaudit/models/cnn.hpp"
#include "adaudit/models/logreg.hpp"
#include "adaudit/models/mnb.hpp"
#include "adaudit/models/model_io.hpp"
#include "adaudit/models/rmsprop.hpp"
#include "gen.hpp"
#include "oracles.hpp"

using namespace adaudit;
using namespace adaudit::models;
using text::SparseVector;

namespace {

SparseVector dense_to_sparse(const std::vector<int>& counts) {
  SparseVector v(counts.size());
  for (std::size_t j = 0; j < counts.size(); ++j)
    if (counts[j] > 0) v.add(j, counts[j]);
  return v;
}

std::vector<int> random_counts(Rng& rng, std::size_t dims, int max_count = 3) {
  std::vector<int> c(dims);
  for (auto& x : c) x = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_count) + 1));
  return c;
}

CnnConfig tiny_config() {
  CnnConfig c;
  c.embed_dim = 4;
  c.filter_widths = {2, 3};
  c.filters_per_width = 3;
  c.hidden = 5;
  c.dropout = 0.25;
  return c;
}

text::TokenMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t dim) {
  text::TokenMatrix m(rows, dim);
  for (auto& x : m.data) x = rng.normal();
  return m;
}

std::vector<double> flatten(const CnnModel& m) {
  std::vector<double> out;
  for (auto p : m.parameters()) out.insert(out.end(), p.begin(), p.end());
  return out;
}

void unflatten(CnnModel& m, const std::vector<double>& flat) {
  std::size_t k = 0;
  for (auto p : m.parameters())
    for (auto& x : p) x = flat[k++];
}

}  // namespace

TEST_CASE("naive Bayes posterior matches direct products on a 4-slot vocabulary") {
  Rng rng(31);
  for (int round = 0; round < 50; ++round) {
    const std::size_t n = 2 + rng.below(12);
    const auto labels = gen::labels(rng, n);
    std::vector<std::vector<int>> counts;
    std::vector<SparseVector> feats;
    for (std::size_t i = 0; i < n; ++i) {
      counts.push_back(random_counts(rng, 4));
      feats.push_back(dense_to_sparse(counts.back()));
    }
    const double alpha = rng.bernoulli(0.5) ? 1.0 : rng.uniform(0.1, 2.0);
    const auto model = train_mnb(feats, labels, alpha);
    for (int q = 0; q < 10; ++q) {
      const auto query = random_counts(rng, 4);
      const double expected = oracle::nb_posterior(counts, gen::as_ints(labels), query, alpha);
      CHECK(std::abs(predict_proba_mnb(model, dense_to_sparse(query)) - expected) <= 1e-9);
    }
  }
}

TEST_CASE("naive Bayes probabilities are normalized and the empty vector gives the prior") {
  Rng rng(2);
  const auto labels = gen::labels(rng, 30, 0.3);
  std::vector<SparseVector> feats;
  for (std::size_t i = 0; i < labels.size(); ++i) feats.push_back(dense_to_sparse(random_counts(rng, 16)));
  const auto model = train_mnb(feats, labels);
  for (std::size_t c = 0; c < 2; ++c) {
    double total = 0;
    for (double ll : model.log_likelihood[c]) total += std::exp(ll);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), Label::political));
  CHECK(predict_proba_mnb(model, SparseVector(16)) == doctest::Approx(pos / 30.0).epsilon(1e-12));
}

TEST_CASE("naive Bayes input errors") {
  std::vector<SparseVector> feats{dense_to_sparse({1, 0}), dense_to_sparse({0, 1})};
  const std::vector<Label> same{Label::political, Label::political};
  CHECK_THROWS_AS(train_mnb(feats, same), DegenerateTrainingSet);
  CHECK_THROWS_AS(train_mnb({}, {}), DegenerateTrainingSet);
  const std::vector<Label> both{Label::political, Label::non_political};
  const auto model = train_mnb(feats, both);
  CHECK_THROWS_AS(predict_proba_mnb(model, SparseVector(3)), DimensionMismatch);
  std::vector<SparseVector> mixed{SparseVector(2), SparseVector(3)};
  CHECK_THROWS_AS(train_mnb(mixed, both), DimensionMismatch);
}

TEST_CASE("naive Bayes training ignores example order") {
  Rng rng(17);
  for (int round = 0; round < 20; ++round) {
    const auto labels = gen::labels(rng, 10 + rng.below(10));
    std::vector<SparseVector> feats;
    for (std::size_t i = 0; i < labels.size(); ++i) feats.push_back(dense_to_sparse(random_counts(rng, 8)));
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<SparseVector> f2;
    std::vector<Label> l2;
    for (auto i : order) {
      f2.push_back(feats[i]);
      l2.push_back(labels[i]);
    }
    const auto a = train_mnb(feats, labels);
    const auto b = train_mnb(f2, l2);
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(a.log_prior[c] == doctest::Approx(b.log_prior[c]).epsilon(1e-12));
      for (std::size_t j = 0; j < 8; ++j)
        CHECK(a.log_likelihood[c][j] == doctest::Approx(b.log_likelihood[c][j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("sigmoid") {
  CHECK(sigmoid(0.0) == 0.5);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double z = rng.uniform(-40, 40);
    CHECK(sigmoid(z) + sigmoid(-z) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(sigmoid(-1000.0) >= 0.0);
  CHECK(sigmoid(1000.0) <= 1.0);
  CHECK(std::isfinite(sigmoid(-1000.0)));
}

TEST_CASE("logistic regression gradient matches central differences") {
  Rng rng(9);
  for (int round = 0; round < 10; ++round) {
    const std::size_t n = 5 + rng.below(10);
    const std::size_t d = 2 + rng.below(5);
    const auto labels = gen::labels(rng, n);
    std::vector<std::vector<double>> x(n, std::vector<double>(d));
    for (auto& row : x)
      for (auto& v : row) v = rng.normal();
    LogRegModel m;
    m.weights.resize(d);
    for (auto& w : m.weights) w = rng.normal() * 0.5;
    m.bias = rng.normal() * 0.5;
    const double l2 = rng.bernoulli(0.5) ? 0.0 : 0.01;

    const auto g = logreg_loss_and_grad(m, x, labels, l2);
    std::vector<double> theta = m.weights;
    theta.push_back(m.bias);
    const auto f = [&](const std::vector<double>& t) {
      LogRegModel p;
      p.weights.assign(t.begin(), t.end() - 1);
      p.bias = t.back();
      return logreg_loss_and_grad(p, x, labels, l2).loss;
    };
    const auto num = oracle::numeric_gradient(f, theta, 1e-5);
    for (std::size_t k = 0; k < d; ++k) CHECK(oracle::rel_error(g.weights[k], num[k]) < 1e-6);
    CHECK(oracle::rel_error(g.bias, num[d]) < 1e-6);
  }
}

TEST_CASE("logistic regression training") {
  const std::vector<std::vector<double>> x{{0, 0}, {0, 1}, {1, 0}, {1, 1}, {3, 3}, {3, 4}, {4, 3}, {4, 4}};
  std::vector<Label> y(8, Label::non_political);
  for (int i = 4; i < 8; ++i) y[i] = Label::political;
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.lr = 0.1;

  SUBCASE("separable toy set is fit exactly") {
    const auto m = train_logreg(x, y, cfg);
    for (std::size_t i = 0; i < 8; ++i) CHECK((predict_proba_logreg(m, x[i]) >= 0.5) == (y[i] == Label::political));
  }
  SUBCASE("zero model predicts one half") {
    LogRegModel z;
    z.weights.assign(2, 0.0);
    CHECK(predict_proba_logreg(z, x[5]) == 0.5);
  }
  SUBCASE("loss never increases at a small step") {
    std::vector<double> trace;
    cfg.lr = 0.05;
    train_logreg(x, y, cfg, &trace);
    REQUIRE(trace.size() == cfg.epochs + 1);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
  }
  SUBCASE("grid search is deterministic") {
    cfg.grid = HyperGrid{};
    cfg.seed = 5;
    CHECK(train_logreg(x, y, cfg) == train_logreg(x, y, cfg));
  }
  SUBCASE("divergence is reported") {
    const std::vector<std::vector<double>> big{{1e200}, {-1e200}};
    const std::vector<Label> yy{Label::political, Label::non_political};
    cfg.lr = 1e200;
    cfg.epochs = 5;
    CHECK_THROWS_AS(train_logreg(big, yy, cfg), TrainingDiverged);
  }
  SUBCASE("input errors") {
    const std::vector<Label> one(8, Label::political);
    CHECK_THROWS_AS(train_logreg(x, one, cfg), DegenerateTrainingSet);
    LogRegModel m;
    m.weights.assign(3, 0.0);
    CHECK_THROWS_AS(predict_proba_logreg(m, x[0]), DimensionMismatch);
  }
}

TEST_CASE("cnn shapes for a 7-token input") {
  CnnConfig cfg;
  cfg.embed_dim = 10;
  const auto model = CnnModel::init(cfg, 3);
  Rng rng(1);
  const auto fwd = cnn_forward(model, random_matrix(rng, 7, 10), Mode::eval);
  REQUIRE(fwd.cache.conv.size() == 3);
  CHECK(fwd.cache.conv[0].size() == 5 * 120);
  CHECK(fwd.cache.conv[1].size() == 4 * 120);
  CHECK(fwd.cache.conv[2].size() == 3 * 120);
  CHECK(fwd.cache.pooled.size() == 360);
  CHECK(cfg.pooled_len() == 360);
  CHECK(fwd.cache.hidden.size() == 128);
}

TEST_CASE("cnn forward basics") {
  const auto cfg = tiny_config();
  const auto model = CnnModel::init(cfg, 11);
  Rng rng(4);

  SUBCASE("all-zero input with zero biases gives sigmoid of the output bias") {
    auto m = model;
    m.out_b[0] = 0.7;
    const auto fwd = cnn_forward(m, text::TokenMatrix(6, 4), Mode::eval);
    CHECK(fwd.probability == doctest::Approx(sigmoid(0.7)).epsilon(1e-15));
  }
  SUBCASE("eval mode is deterministic") {
    const auto x = random_matrix(rng, 6, 4);
    CHECK(cnn_forward(model, x, Mode::eval).probability == cnn_forward(model, x, Mode::eval).probability);
  }
  SUBCASE("short inputs are padded and empty inputs rejected") {
    CHECK_NOTHROW(cnn_forward(model, random_matrix(rng, 1, 4), Mode::eval));
    CHECK_THROWS_AS(cnn_forward(model, text::TokenMatrix(0, 4), Mode::eval), DataError);
    CHECK_THROWS_AS(cnn_forward(model, random_matrix(rng, 5, 3), Mode::eval), DimensionMismatch);
  }
  SUBCASE("probability stays inside (0, 1)") {
    for (int i = 0; i < 50; ++i) {
      const double p = cnn_forward(model, random_matrix(rng, 1 + rng.below(10), 4), Mode::eval).probability;
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
  }
}

TEST_CASE("cnn dropout preserves expectations over 10,000 masks") {
  const auto cfg = tiny_config();
  const auto model = CnnModel::init(cfg, 2);
  Rng rng(8);
  const auto x = random_matrix(rng, 5, 4);
  std::vector<double> input_sum(x.data.size(), 0.0);
  double mask_sum = 0.0;
  constexpr int kRuns = 10000;
  Rng drop(99);
  for (int r = 0; r < kRuns; ++r) {
    const auto fwd = cnn_forward(model, x, Mode::train, &drop);
    for (std::size_t k = 0; k < x.data.size(); ++k) input_sum[k] += fwd.cache.input.data[k];
    for (double m : fwd.cache.hidden_mask) mask_sum += m;
  }
  double total_in = 0.0;
  double total_abs = 0.0;
  for (std::size_t k = 0; k < x.data.size(); ++k) {
    total_in += std::abs(input_sum[k] / kRuns - x.data[k]);
    total_abs += std::abs(x.data[k]);
  }
  CHECK(total_in / total_abs < 0.02);
  CHECK(mask_sum / (kRuns * cfg.hidden) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("global max pool") {
  // 3 steps x 2 filters
  const std::vector<double> a{1, 5, 3, 5, 3, 2};
  const auto r = global_max_pool(a, 3, 2);
  CHECK(r.values == std::vector<double>{3, 5});
  CHECK(r.argmax == std::vector<std::size_t>{1, 0});

  Rng rng(6);
  for (int round = 0; round < 50; ++round) {
    const std::size_t steps = 1 + rng.below(6);
    const std::size_t filters = 1 + rng.below(4);
    std::vector<double> act(steps * filters);
    for (auto& v : act) v = static_cast<double>(rng.below(5));
    const auto p = global_max_pool(act, steps, filters);
    std::vector<double> grad(filters);
    for (auto& g : grad) g = rng.normal();
    const auto back = max_pool_backward(p.argmax, grad, steps, filters);
    for (std::size_t f = 0; f < filters; ++f) {
      double col = 0.0;
      for (std::size_t t = 0; t < steps; ++t) {
        CHECK(act[t * filters + f] <= p.values[f]);
        col += back[t * filters + f];
        if (t != p.argmax[f]) CHECK(back[t * filters + f] == 0.0);
      }
      CHECK(col == grad[f]);
    }
  }
}

TEST_CASE("cnn gradient matches central differences on a tiny network") {
  auto cfg = tiny_config();
  Rng rng(12);
  for (int round = 0; round < 5; ++round) {
    auto model = CnnModel::init(cfg, 100 + round);
    for (auto p : model.parameters())
      for (auto& v : p) v += rng.normal() * 0.05;
    const auto x = random_matrix(rng, 3 + rng.below(4), cfg.embed_dim);
    const Label y = round % 2 ? Label::political : Label::non_political;

    const auto fwd = cnn_forward(model, x, Mode::eval);
    const auto grad = flatten(cnn_backward(model, fwd.cache, y));
    const auto f = [&](const std::vector<double>& theta) {
      auto m = model;
      unflatten(m, theta);
      return bce_from_logit(cnn_forward(m, x, Mode::eval).cache.logit, y);
    };
    const auto num = oracle::numeric_gradient(f, flatten(model), 1e-6);
    double worst = 0.0;
    for (std::size_t k = 0; k < grad.size(); ++k) worst = std::max(worst, oracle::rel_error(grad[k], num[k], 1e-6));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("rmsprop update") {
  RmsPropState opt(0.01, 0.9, 1e-8);
  std::vector<double> theta{1.0, -2.0};
  const std::vector<double> g{0.5, -0.1};
  std::vector<std::span<double>> params{theta};
  std::vector<std::span<const double>> grads{g};
  opt.step(params, grads);
  const double a0 = 0.1 * 0.25;
  const double a1 = 0.1 * 0.01;
  CHECK(opt.accumulators()[0][0] == doctest::Approx(a0).epsilon(1e-15));
  CHECK(theta[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (std::sqrt(a0) + 1e-8)).epsilon(1e-15));
  CHECK(theta[1] == doctest::Approx(-2.0 + 0.01 * 0.1 / (std::sqrt(a1) + 1e-8)).epsilon(1e-15));
  opt.step(params, grads);
  CHECK(opt.accumulators()[0][0] == doctest::Approx(0.9 * a0 + 0.1 * 0.25).epsilon(1e-15));

  std::vector<double> other(3);
  std::vector<std::span<double>> bad{other};
  std::vector<double> og(3);
  std::vector<std::span<const double>> bad_g{og};
  CHECK_THROWS(opt.step(bad, bad_g));
}

TEST_CASE("cnn training") {
  auto cfg = tiny_config();
  Rng rng(21);
  std::vector<CnnExample> data{{random_matrix(rng, 5, 4), Label::political},
                               {random_matrix(rng, 5, 4), Label::non_political}};
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 2;
  tc.lr = 1e-2;
  tc.seed = 3;

  SUBCASE("overfits two examples") {
    RmsPropState opt(tc.lr);
    const auto m = cnn_train(data, tc, CnnModel::init(cfg, 1), opt);
    CHECK(cnn_forward(m, data[0].input, Mode::eval).probability > 0.9);
    CHECK(cnn_forward(m, data[1].input, Mode::eval).probability < 0.1);
  }
  SUBCASE("same seed gives bit-identical weights") {
    tc.epochs = 20;
    RmsPropState o1(tc.lr);
    RmsPropState o2(tc.lr);
    CHECK(cnn_train(data, tc, CnnModel::init(cfg, 1), o1) == cnn_train(data, tc, CnnModel::init(cfg, 1), o2));
  }
  SUBCASE("one class only") {
    data[1].label = Label::political;
    RmsPropState opt(tc.lr);
    CHECK_THROWS_AS(cnn_train(data, tc, CnnModel::init(cfg, 1), opt), DegenerateTrainingSet);
  }
}

TEST_CASE("model container") {
  Rng rng(5);

  SUBCASE("mnb round trip") {
    std::vector<SparseVector> feats{dense_to_sparse({1, 2, 0}), dense_to_sparse({0, 1, 3})};
    ModelBundle b{train_mnb(feats, std::vector<Label>{Label::political, Label::non_political}), 0, "m1"};
    std::stringstream buf;
    save_model(b, buf);
    const auto back = load_model(buf);
    CHECK(back.kind() == ModelKind::mnb);
    CHECK(std::get<MnbModel>(back.model) == std::get<MnbModel>(b.model));
    CHECK(back.model_id == "m1");
  }
  SUBCASE("logreg and cnn round trip bit-exactly") {
    LogRegModel lr;
    lr.weights = {0.1, -0.2, 1e-300};
    lr.bias = -3.5;
    ModelBundle a{lr, 42, "lr"};
    std::stringstream b1;
    save_model(a, b1);
    CHECK(load_logreg(b1) == lr);

    const auto cnn = CnnModel::init(tiny_config(), 8);
    ModelBundle c{cnn, 7, "cnn"};
    std::stringstream b2;
    save_model(c, b2);
    const auto back = load_model(b2);
    CHECK(std::get<CnnModel>(back.model) == cnn);
    CHECK(back.embedding_fingerprint == 7);
  }
  SUBCASE("typed loader rejects another kind") {
    LogRegModel lr;
    lr.weights = {1.0};
    std::stringstream buf;
    save_model(ModelBundle{lr, 0, "x"}, buf);
    CHECK_THROWS_AS(load_cnn(buf), KindMismatch);
  }
  SUBCASE("every strict prefix is truncated") {
    LogRegModel lr;
    lr.weights = {1.0, 2.0};
    std::stringstream buf;
    save_model(ModelBundle{lr, 0, "abc"}, buf);
    const auto bytes = buf.str();
    for (std::size_t n = 0; n < bytes.size(); ++n) {
      std::istringstream cut(bytes.substr(0, n));
      CHECK_THROWS_AS(load_model(cut), ContainerError);
    }
    std::istringstream cut(bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_AS(load_model(cut), TruncatedContainer);
  }
  SUBCASE("stored shapes must agree") {
    MnbModel m;
    m.dims = 3;
    m.log_likelihood = {std::vector<double>(3), std::vector<double>(2)};
    std::stringstream buf;
    save_model(ModelBundle{m, 0, "bad"}, buf);
    CHECK_THROWS_AS(load_model(buf), ShapeMismatch);
  }
  SUBCASE("bad magic") {
    std::istringstream in("NOPE\x01\x01");
    CHECK_THROWS_AS(load_model(in), ContainerError);
  }
}

TEST_CASE("classifier wraps text scoring for every kind") {
  auto table = std::make_shared<text::EmbeddingTable>(4);
  Rng rng(10);
  const std::vector<std::string> pol{"vote", "candidato", "eleições", "deputado"};
  const std::vector<std::string> com{"loja", "frete", "promoção", "desconto"};
  for (const auto& w : pol) table->insert(w, {1.0 + rng.normal() * 0.1, 0.0, 0.5, rng.normal() * 0.1});
  for (const auto& w : com) table->insert(w, {-1.0 + rng.normal() * 0.1, 0.5, 0.0, rng.normal() * 0.1});

  LabeledDataset data;
  for (int i = 0; i < 40; ++i) {
    const bool p = i % 2 == 0;
    const auto& v = p ? pol : com;
    LabeledAd ad;
    ad.ad.id = "a" + std::to_string(i);
    for (int k = 0; k < 4; ++k) ad.ad.text += v[rng.below(v.size())] + " ";
    ad.label = p ? Label::political : Label::non_political;
    data.push_back(ad);
  }
  for (auto kind : {ModelKind::mnb, ModelKind::logreg, ModelKind::cnn}) {
    CAPTURE(to_string(kind));
    auto settings = default_settings(kind);
    settings.train.seed = 4;
    settings.cnn.embed_dim = 4;
    settings.cnn.filters_per_width = 4;
    settings.cnn.hidden = 8;
    settings.train.epochs = kind == ModelKind::cnn ? 30 : settings.train.epochs;
    settings.train.lr = kind == ModelKind::cnn ? 1e-2 : settings.train.lr;
    settings.hash_dims = 1024;
    const auto clf = train_classifier(kind, data, settings, table);
    CHECK(clf.kind() == kind);
    CHECK_FALSE(clf.model_id().empty());
    CHECK(clf.score("vote candidato deputado") > 0.5);
    CHECK(clf.score("loja frete desconto") < 0.5);
    const double oov = clf.score("nothing known here");
    CHECK(oov >= 0.0);
    CHECK(oov <= 1.0);

    gen::TempDir dir;
    const auto path = dir.file("m.bin");
    save_model_file(clf.bundle(), path);
    const auto back = load_classifier(path, table);
    CHECK(back.score("vote agora") == clf.score("vote agora"));
    CHECK(back.model_id() == clf.model_id());

    if (kind != ModelKind::mnb) {
      auto other = std::make_shared<text::EmbeddingTable>(*table);
      other->insert("extra", {0, 0, 0, 0});
      CHECK_THROWS_AS(load_classifier(path, other), DimensionMismatch);
      CHECK_THROWS_AS(load_classifier(path, nullptr), DimensionMismatch);
    }
  }
}
