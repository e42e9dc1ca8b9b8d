#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adaudit/label.hpp"
#include "adaudit/models/model_io.hpp"
#include "adaudit/textproc.hpp"

namespace adaudit::models {

struct TrainSettings {
  TrainConfig train;
  std::size_t hash_dims = text::kDefaultHashDims;
  double alpha = 1.0;
  CnnConfig cnn;
};

// Defaults per kind: MNB ignores the optimiser fields, logistic regression
// runs 300 full-batch steps over the default grid, the CNN uses 10 epochs of
// batch 32 at lr 1e-3.
TrainSettings default_settings(ModelKind kind);

// Text in, probability of "political" out. Owns the model and shares the
// (frozen) embedding table with whoever loaded it.
class Classifier {
 public:
  Classifier(ModelBundle bundle, std::shared_ptr<const text::EmbeddingTable> embeddings);

  [[nodiscard]] ModelKind kind() const { return bundle_.kind(); }
  [[nodiscard]] const ModelBundle& bundle() const { return bundle_; }
  [[nodiscard]] const std::string& model_id() const { return bundle_.model_id; }

  [[nodiscard]] double score(std::string_view text) const;
  [[nodiscard]] double score_tokens(const text::TokenSeq& tokens) const;

 private:
  ModelBundle bundle_;
  std::shared_ptr<const text::EmbeddingTable> embeddings_;
};

// Input matrix the CNN sees for a token sequence. All-OOV sequences become
// a single zero row (which the forward pass pads).
text::TokenMatrix cnn_input(const text::TokenSeq& tokens, const text::EmbeddingTable& table);

Classifier train_classifier(ModelKind kind, std::span<const LabeledAd> data, const TrainSettings& settings,
                            std::shared_ptr<const text::EmbeddingTable> embeddings);

Classifier load_classifier(const std::string& model_path,
                           std::shared_ptr<const text::EmbeddingTable> embeddings);

}  // namespace adaudit::models
