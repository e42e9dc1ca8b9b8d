#include "adaudit/models/mnb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "adaudit/error.hpp"

namespace adaudit::models {

MnbModel train_mnb(std::span<const text::SparseVector> features, std::span<const Label> labels, double alpha) {
  if (features.size() != labels.size()) throw std::invalid_argument("features and labels differ in length");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
  if (features.empty()) throw DegenerateTrainingSet();
  const std::size_t dims = features.front().dims();

  MnbModel m;
  m.dims = dims;
  m.alpha = alpha;
  std::array<std::size_t, 2> docs{};
  std::array<std::vector<double>, 2> counts{std::vector<double>(dims, 0.0), std::vector<double>(dims, 0.0)};
  std::array<double, 2> totals{};
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].dims() != dims) throw DimensionMismatch("feature vectors have different dims");
    const auto c = static_cast<std::size_t>(labels[i]);
    ++docs[c];
    for (const auto& [idx, cnt] : features[i].entries()) {
      counts[c][idx] += cnt;
      totals[c] += cnt;
    }
  }
  if (docs[0] == 0 || docs[1] == 0) throw DegenerateTrainingSet();

  const double n = static_cast<double>(features.size());
  for (std::size_t c = 0; c < 2; ++c) {
    m.log_prior[c] = std::log(static_cast<double>(docs[c]) / n);
    const double denom = std::log(totals[c] + alpha * static_cast<double>(dims));
    auto& ll = m.log_likelihood[c];
    ll.resize(dims);
    for (std::size_t j = 0; j < dims; ++j) ll[j] = std::log(counts[c][j] + alpha) - denom;
  }
  return m;
}

std::array<double, 2> joint_log_likelihood(const MnbModel& model, const text::SparseVector& x) {
  if (x.dims() != model.dims)
    throw DimensionMismatch("feature dims " + std::to_string(x.dims()) + " != model dims " +
                            std::to_string(model.dims));
  std::array<double, 2> jll = model.log_prior;
  for (const auto& [idx, cnt] : x.entries())
    for (std::size_t c = 0; c < 2; ++c) jll[c] += cnt * model.log_likelihood[c][idx];
  return jll;
}

double predict_proba_mnb(const MnbModel& model, const text::SparseVector& x) {
  const auto jll = joint_log_likelihood(model, x);
  const double hi = std::max(jll[0], jll[1]);
  const double e0 = std::exp(jll[0] - hi);
  const double e1 = std::exp(jll[1] - hi);
  return e1 / (e0 + e1);
}

}  // namespace adaudit::models
