#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>

#include "adaudit/error.hpp"
#include "adaudit/models/cnn.hpp"
#include "adaudit/models/logreg.hpp"
#include "adaudit/models/mnb.hpp"

namespace adaudit::models {

enum class ModelKind : std::uint8_t { mnb = 1, logreg = 2, cnn = 3 };

std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);

class ContainerError : public DataError {
 public:
  using DataError::DataError;
};
class TruncatedContainer : public ContainerError {
 public:
  TruncatedContainer() : ContainerError("truncated container") {}
};
class KindMismatch : public ContainerError {
 public:
  using ContainerError::ContainerError;
};
class ShapeMismatch : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

using AnyModel = std::variant<MnbModel, LogRegModel, CnnModel>;

ModelKind kind_of(const AnyModel& m);

struct ModelBundle {
  AnyModel model;
  // Digest of the embedding table the model was trained against; 0 for
  // hashed-feature models.
  std::uint64_t embedding_fingerprint = 0;
  std::string model_id;

  [[nodiscard]] ModelKind kind() const { return kind_of(model); }
};

// Layout (little-endian):
//   "ADMC" | version u8 | kind u8 | payload | fingerprint u64 | model_id
// Arrays are u64 length + IEEE-754 doubles; strings are u64 length + bytes.
inline constexpr std::uint8_t kContainerVersion = 1;

void save_model(const ModelBundle& bundle, std::ostream& out);
ModelBundle load_model(std::istream& in);

void save_model_file(const ModelBundle& bundle, const std::string& path);
ModelBundle load_model_file(const std::string& path);

// Typed loaders throw KindMismatch if the container holds another kind.
MnbModel load_mnb(std::istream& in);
LogRegModel load_logreg(std::istream& in);
CnnModel load_cnn(std::istream& in);

}  // namespace adaudit::models
