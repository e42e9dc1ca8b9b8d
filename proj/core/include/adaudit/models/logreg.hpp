#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "adaudit/label.hpp"
#include "adaudit/models/train_config.hpp"

namespace adaudit::models {

struct LogRegModel {
  std::vector<double> weights;
  double bias = 0.0;
  double l2 = 0.0;
  double lr = 0.0;

  bool operator==(const LogRegModel&) const = default;
};

using DenseRows = std::span<const std::vector<double>>;

double sigmoid(double z);

double predict_proba_logreg(const LogRegModel& model, std::span<const double> x);

struct LogRegGradient {
  double loss = 0.0;
  std::vector<double> weights;
  double bias = 0.0;
};

// Mean binary cross-entropy plus (l2 / 2) * |w|^2 and its gradient.
LogRegGradient logreg_loss_and_grad(const LogRegModel& model, DenseRows features,
                                    std::span<const Label> labels, double l2);

// Full-batch gradient descent from zero weights for cfg.epochs steps. With
// cfg.grid set, (lr, l2) is picked by accuracy on a seeded 80/20 split and
// the winner is refit on everything. `loss_trace`, when given, receives
// the training loss before each step plus the final one.
LogRegModel train_logreg(DenseRows features, std::span<const Label> labels, const TrainConfig& cfg,
                         std::vector<double>* loss_trace = nullptr);

}  // namespace adaudit::models
