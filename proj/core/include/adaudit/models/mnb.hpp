#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "adaudit/label.hpp"
#include "adaudit/textproc.hpp"

namespace adaudit::models {

// Two-class multinomial naive Bayes over hashed counts. Index 0 is
// non_political, 1 is political.
struct MnbModel {
  std::size_t dims = 0;
  double alpha = 1.0;
  std::array<double, 2> log_prior{};
  std::array<std::vector<double>, 2> log_likelihood;

  bool operator==(const MnbModel&) const = default;
};

MnbModel train_mnb(std::span<const text::SparseVector> features, std::span<const Label> labels,
                   double alpha = 1.0);

// Class log-posteriors up to the shared evidence term.
std::array<double, 2> joint_log_likelihood(const MnbModel& model, const text::SparseVector& x);

double predict_proba_mnb(const MnbModel& model, const text::SparseVector& x);

}  // namespace adaudit::models
