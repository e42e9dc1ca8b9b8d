#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace adaudit::models {

struct HyperGrid {
  std::vector<double> lr{1e-1, 1e-2, 1e-3};
  std::vector<double> l2{0.0, 1e-4, 1e-2};
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double l2 = 0.0;
  std::optional<HyperGrid> grid;

  // Throws std::invalid_argument on epochs == 0 or batch_size == 0.
  void validate() const;
};

}  // namespace adaudit::models
