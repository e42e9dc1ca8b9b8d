#include "adaudit/models/rmsprop.hpp"

#include <cmath>
#include <stdexcept>

namespace adaudit::models {

RmsPropState::RmsPropState(double lr, double rho, double epsilon) : lr_(lr), rho_(rho), epsilon_(epsilon) {
  if (!(lr > 0.0)) throw std::invalid_argument("RMSProp lr must be > 0");
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("RMSProp rho must be in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("RMSProp epsilon must be > 0");
}

void RmsPropState::step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("RMSProp: params/grads count mismatch");
  if (accum_.empty()) {
    accum_.reserve(params.size());
    for (const auto& p : params) accum_.emplace_back(p.size(), 0.0);
  }
  if (accum_.size() != params.size()) throw std::invalid_argument("RMSProp: parameter set changed");
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& a = accum_[t];
    const auto p = params[t];
    const auto g = grads[t];
    if (p.size() != a.size() || g.size() != a.size()) throw std::invalid_argument("RMSProp: shape changed");
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = rho_ * a[i] + (1.0 - rho_) * g[i] * g[i];
      p[i] -= lr_ * g[i] / (std::sqrt(a[i]) + epsilon_);
    }
  }
}

}  // namespace adaudit::models
