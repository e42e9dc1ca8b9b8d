#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "adaudit/label.hpp"
#include "adaudit/models/rmsprop.hpp"
#include "adaudit/models/train_config.hpp"
#include "adaudit/random.hpp"
#include "adaudit/textproc.hpp"

namespace adaudit::models {

struct CnnConfig {
  std::size_t embed_dim = 300;
  std::vector<std::size_t> filter_widths{3, 4, 5};
  std::size_t filters_per_width = 120;
  std::size_t hidden = 128;
  double dropout = 0.25;

  bool operator==(const CnnConfig&) const = default;

  [[nodiscard]] std::size_t pooled_len() const { return filters_per_width * filter_widths.size(); }
  [[nodiscard]] std::size_t max_width() const;
  void validate() const;
};

struct ConvBank {
  std::size_t width = 0;
  std::vector<double> weights;  // filters x width x embed_dim
  std::vector<double> bias;     // filters

  bool operator==(const ConvBank&) const = default;
};

// Embedding dropout -> conv(3,4,5) + ReLU -> global max pool -> dense + ReLU
// -> dropout -> single sigmoid unit. The same struct holds gradients.
struct CnnModel {
  CnnConfig config;
  std::vector<ConvBank> conv;
  std::vector<double> dense_w;  // hidden x pooled_len
  std::vector<double> dense_b;  // hidden
  std::vector<double> out_w;    // hidden
  std::vector<double> out_b;    // 1

  bool operator==(const CnnModel&) const = default;

  static CnnModel zeros(const CnnConfig& config);
  // Glorot-uniform weights, zero biases.
  static CnnModel init(const CnnConfig& config, std::uint64_t seed);

  // Fixed order: per width (weights, bias), dense_w, dense_b, out_w, out_b.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

  // Throws ShapeMismatch-style DimensionMismatch when shapes disagree.
  void validate() const;
};

enum class Mode { train, eval };

struct CnnCache {
  text::TokenMatrix input;                   // padded, after input dropout
  std::vector<std::vector<double>> conv;     // per width: (n - w + 1) x filters, post-ReLU
  std::vector<std::vector<std::size_t>> argmax;  // per width: time index per filter
  std::vector<double> pooled;
  std::vector<double> hidden_pre;
  std::vector<double> hidden_mask;           // 0 or 1/(1-p); all 1 in eval mode
  std::vector<double> hidden;                // post-ReLU, post-dropout
  double logit = 0.0;
  double probability = 0.0;
};

struct CnnForward {
  double probability = 0.0;
  CnnCache cache;
};

// Pads shorter inputs with zero rows to the widest filter. Zero rows throw
// DataError("empty sequence"). Train mode needs `rng` for dropout masks.
CnnForward cnn_forward(const CnnModel& model, const text::TokenMatrix& input, Mode mode,
                       Rng* rng = nullptr);

// Gradient of the binary cross-entropy for one example, given its forward
// cache. Returned model has the same shapes as `model`.
CnnModel cnn_backward(const CnnModel& model, const CnnCache& cache, Label label);

double bce_from_logit(double logit, Label label);

// Max over time for a row-major (steps x filters) block; ties go to the
// first index.
struct PoolResult {
  std::vector<double> values;
  std::vector<std::size_t> argmax;
};
PoolResult global_max_pool(std::span<const double> activations, std::size_t steps, std::size_t filters);

// Routes each filter's incoming gradient to its argmax step only.
std::vector<double> max_pool_backward(std::span<const std::size_t> argmax, std::span<const double> grad,
                                      std::size_t steps, std::size_t filters);

struct CnnExample {
  text::TokenMatrix input;
  Label label = Label::non_political;
};

// Minibatch RMSProp training with a seeded shuffle per epoch. `epoch_losses`
// receives the mean training loss of each epoch as seen during the pass.
CnnModel cnn_train(std::span<const CnnExample> dataset, const TrainConfig& cfg, CnnModel model,
                   RmsPropState& opt, std::vector<double>* epoch_losses = nullptr);

}  // namespace adaudit::models
