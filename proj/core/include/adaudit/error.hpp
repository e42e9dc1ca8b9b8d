#pragma once

#include <stdexcept>
#include <string>

namespace adaudit {

// Base for everything the library throws on bad input data. The CLI maps
// these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateTrainingSet : public DataError {
 public:
  DegenerateTrainingSet() : DataError("degenerate training set") {}
};

class DimensionMismatch : public DataError {
 public:
  using DataError::DataError;
};

class TrainingDiverged : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace adaudit
