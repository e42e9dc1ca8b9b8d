#include "adaudit/models/classifier.hpp"

#include <cstdio>
#include <sstream>

namespace adaudit::models {

TrainSettings default_settings(ModelKind kind) {
  TrainSettings s;
  switch (kind) {
    case ModelKind::mnb:
      break;
    case ModelKind::logreg:
      s.train.epochs = 300;
      s.train.lr = 1e-1;
      s.train.grid = HyperGrid{};
      break;
    case ModelKind::cnn:
      s.train.epochs = 10;
      s.train.batch_size = 32;
      s.train.lr = 1e-3;
      break;
  }
  return s;
}

namespace {

std::string derive_model_id(const ModelBundle& b) {
  std::ostringstream bytes;
  ModelBundle copy = b;
  copy.model_id.clear();
  save_model(copy, bytes);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(text::fnv1a64(bytes.str())));
  return std::string(to_string(b.kind())) + "-" + hex;
}

}  // namespace

Classifier::Classifier(ModelBundle bundle, std::shared_ptr<const text::EmbeddingTable> embeddings)
    : bundle_(std::move(bundle)), embeddings_(std::move(embeddings)) {
  if (bundle_.kind() == ModelKind::mnb) return;
  if (!embeddings_) throw DimensionMismatch("model/feature mismatch: this model needs an embedding table");
  const std::size_t dim = bundle_.kind() == ModelKind::logreg
                              ? std::get<LogRegModel>(bundle_.model).weights.size()
                              : std::get<CnnModel>(bundle_.model).config.embed_dim;
  if (dim != embeddings_->dim())
    throw DimensionMismatch("model/feature mismatch: model expects dim " + std::to_string(dim) +
                            ", embeddings have dim " + std::to_string(embeddings_->dim()));
  if (bundle_.embedding_fingerprint != 0 && bundle_.embedding_fingerprint != embeddings_->fingerprint())
    throw DimensionMismatch("model/feature mismatch: embedding table differs from the one used in training");
  if (bundle_.kind() == ModelKind::cnn) std::get<CnnModel>(bundle_.model).validate();
}

text::TokenMatrix cnn_input(const text::TokenSeq& tokens, const text::EmbeddingTable& table) {
  auto m = text::embed_sequence(tokens, table);
  if (m.rows == 0) m = text::TokenMatrix(1, table.dim());
  return m;
}

double Classifier::score_tokens(const text::TokenSeq& tokens) const {
  switch (bundle_.kind()) {
    case ModelKind::mnb: {
      const auto& m = std::get<MnbModel>(bundle_.model);
      return predict_proba_mnb(m, text::hash_vectorize(tokens, m.dims));
    }
    case ModelKind::logreg:
      return predict_proba_logreg(std::get<LogRegModel>(bundle_.model), text::mean_embedding(tokens, *embeddings_));
    case ModelKind::cnn:
      return cnn_forward(std::get<CnnModel>(bundle_.model), cnn_input(tokens, *embeddings_), Mode::eval).probability;
  }
  return 0.0;
}

double Classifier::score(std::string_view text) const { return score_tokens(text::tokenize(text)); }

Classifier train_classifier(ModelKind kind, std::span<const LabeledAd> data, const TrainSettings& settings,
                            std::shared_ptr<const text::EmbeddingTable> embeddings) {
  std::vector<Label> labels;
  std::vector<text::TokenSeq> tokens;
  labels.reserve(data.size());
  tokens.reserve(data.size());
  for (const auto& item : data) {
    labels.push_back(item.label);
    tokens.push_back(text::tokenize(item.ad.text));
  }
  if (kind != ModelKind::mnb && !embeddings)
    throw DimensionMismatch("model/feature mismatch: " + std::string(to_string(kind)) + " needs embeddings");

  ModelBundle bundle{MnbModel{}, 0, {}};
  switch (kind) {
    case ModelKind::mnb: {
      std::vector<text::SparseVector> x;
      x.reserve(tokens.size());
      for (const auto& t : tokens) x.push_back(text::hash_vectorize(t, settings.hash_dims));
      bundle.model = train_mnb(x, labels, settings.alpha);
      break;
    }
    case ModelKind::logreg: {
      std::vector<std::vector<double>> x;
      x.reserve(tokens.size());
      for (const auto& t : tokens) x.push_back(text::mean_embedding(t, *embeddings));
      bundle.model = train_logreg(x, labels, settings.train);
      bundle.embedding_fingerprint = embeddings->fingerprint();
      break;
    }
    case ModelKind::cnn: {
      std::vector<CnnExample> x;
      x.reserve(tokens.size());
      for (std::size_t i = 0; i < tokens.size(); ++i) x.push_back({cnn_input(tokens[i], *embeddings), labels[i]});
      CnnConfig cfg = settings.cnn;
      cfg.embed_dim = embeddings->dim();
      RmsPropState opt(settings.train.lr);
      bundle.model = cnn_train(x, settings.train, CnnModel::init(cfg, Rng::mix(settings.train.seed, 2)), opt);
      bundle.embedding_fingerprint = embeddings->fingerprint();
      break;
    }
  }
  bundle.model_id = derive_model_id(bundle);
  return Classifier(std::move(bundle), std::move(embeddings));
}

Classifier load_classifier(const std::string& model_path, std::shared_ptr<const text::EmbeddingTable> embeddings) {
  return Classifier(load_model_file(model_path), std::move(embeddings));
}

}  // namespace adaudit::models
