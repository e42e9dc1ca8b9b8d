#include "adaudit/models/train_config.hpp"

#include <stdexcept>

namespace adaudit::models {

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (!(l2 >= 0.0)) throw std::invalid_argument("l2 must be >= 0");
}

}  // namespace adaudit::models
