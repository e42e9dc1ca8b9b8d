#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace adaudit::models {

// a <- rho * a + (1 - rho) * g^2 ;  theta <- theta - lr * g / (sqrt(a) + eps)
class RmsPropState {
 public:
  explicit RmsPropState(double lr = 1e-3, double rho = 0.9, double epsilon = 1e-8);

  // Accumulators are created lazily on the first step and must keep the
  // same shapes afterwards.
  void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads);

  [[nodiscard]] double lr() const { return lr_; }
  [[nodiscard]] double rho() const { return rho_; }
  [[nodiscard]] double epsilon() const { return epsilon_; }
  [[nodiscard]] const std::vector<std::vector<double>>& accumulators() const { return accum_; }

 private:
  double lr_;
  double rho_;
  double epsilon_;
  std::vector<std::vector<double>> accum_;
};

}  // namespace adaudit::models
