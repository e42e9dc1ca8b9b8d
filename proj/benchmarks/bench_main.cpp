#include <benchmark/benchmark.h>

#include "adaudit/audit.hpp"
#include "adaudit/models/classifier.hpp"
#include "adaudit/models/cnn.hpp"
#include "adaudit/synthetic.hpp"
#include "adaudit/textproc.hpp"

using namespace adaudit;

namespace {

const synthetic::SyntheticData& data() {
  static const synthetic::SyntheticData d = [] {
    synthetic::GeneratorConfig cfg;
    cfg.labeled = 1000;
    cfg.corpus = 5000;
    cfg.declared = 300;
    return synthetic::generate(cfg);
  }();
  return d;
}

const std::string& sample_text() { return data().corpus.records().front().text; }

void bm_tokenize(benchmark::State& state) {
  const auto& text = sample_text();
  for (auto _ : state) benchmark::DoNotOptimize(text::tokenize(text));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(bm_tokenize);

void bm_hash_vectorize(benchmark::State& state) {
  const auto tokens = text::tokenize(sample_text());
  for (auto _ : state) benchmark::DoNotOptimize(text::hash_vectorize(tokens));
}
BENCHMARK(bm_hash_vectorize);

void bm_classifier_score(benchmark::State& state) {
  const auto kind = static_cast<models::ModelKind>(state.range(0));
  auto settings = models::default_settings(kind);
  settings.train.epochs = std::min<std::size_t>(settings.train.epochs, 2);
  const auto emb = std::make_shared<const text::EmbeddingTable>(data().embeddings);
  const auto clf = models::train_classifier(kind, data().labeled, settings, emb);
  const auto& text = sample_text();
  for (auto _ : state) benchmark::DoNotOptimize(clf.score(text));
  state.SetLabel(std::string(models::to_string(kind)));
}
BENCHMARK(bm_classifier_score)
    ->Arg(static_cast<int>(models::ModelKind::mnb))
    ->Arg(static_cast<int>(models::ModelKind::logreg))
    ->Arg(static_cast<int>(models::ModelKind::cnn));

void bm_cnn_forward(benchmark::State& state) {
  models::CnnConfig cfg;
  const auto model = models::CnnModel::init(cfg, 1);
  text::TokenMatrix x(static_cast<std::size_t>(state.range(0)), cfg.embed_dim);
  Rng rng(3);
  for (auto& v : x.data) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(models::cnn_forward(model, x, models::Mode::eval).cache.logit);
}
BENCHMARK(bm_cnn_forward)->Arg(10)->Arg(40);

void bm_calibrate(benchmark::State& state) {
  Rng rng(4);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> scores(n);
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = rng.bernoulli(0.5) ? Label::political : Label::non_political;
    scores[i] = rng.uniform(0.0, 1.0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(audit::calibrate_threshold(scores, labels, 0.01));
}
BENCHMARK(bm_calibrate)->Arg(2000)->Arg(100000);

void bm_score_corpus(benchmark::State& state) {
  const auto clf = models::train_classifier(models::ModelKind::mnb, data().labeled,
                                            models::default_settings(models::ModelKind::mnb), nullptr);
  for (auto _ : state) benchmark::DoNotOptimize(audit::score_corpus(clf, data().corpus, 0.5));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * data().corpus.size()));
}
BENCHMARK(bm_score_corpus);

}  // namespace
BENCHMARK_MAIN();
