#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace adaudit::text {

using TokenSeq = std::vector<std::string>;

// Lowercased word tokens in source order. Hashtags keep their '#', URLs
// collapse to "<url>", punctuation is dropped.
TokenSeq tokenize(std::string_view utf8);

inline constexpr std::string_view kUrlToken = "<url>";

// FNV-1a 64-bit. The seed is the FNV offset basis.
inline constexpr std::uint64_t kHashSeed = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kHashPrime = 0x100000001b3ULL;
inline constexpr std::size_t kDefaultHashDims = std::size_t{1} << 18;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = kHashSeed);

// Sparse nonnegative count vector. Entries are kept sorted by index.
class SparseVector {
 public:
  explicit SparseVector(std::size_t dims);

  void add(std::size_t index, double count);

  [[nodiscard]] std::size_t dims() const { return dims_; }
  [[nodiscard]] const std::map<std::size_t, double>& entries() const { return entries_; }
  [[nodiscard]] double get(std::size_t index) const;
  [[nodiscard]] double total() const;
  [[nodiscard]] std::size_t nnz() const { return entries_.size(); }

  bool operator==(const SparseVector&) const = default;

 private:
  std::size_t dims_;
  std::map<std::size_t, double> entries_;
};

SparseVector hash_vectorize(const TokenSeq& tokens, std::size_t dims = kDefaultHashDims);

class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim);

  void insert(std::string token, std::vector<double> vec);

  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] std::size_t size() const { return order_.size(); }
  // nullptr when the token is absent.
  [[nodiscard]] const std::vector<double>* lookup(std::string_view token) const;
  [[nodiscard]] const std::vector<std::string>& tokens() const { return order_; }

  // Order-sensitive digest of every token and vector; models record it so
  // a mismatched table is caught at load time.
  [[nodiscard]] std::uint64_t fingerprint() const;

 private:
  std::size_t dim_;
  std::unordered_map<std::string, std::vector<double>> vectors_;
  std::vector<std::string> order_;
};

struct EmbeddingLoad {
  EmbeddingTable table;
  std::size_t skipped = 0;
};

// word2vec text format: optional "vocab_size dim" header, then
// "token v1 ... v_dim" per line.
EmbeddingLoad load_embeddings(std::istream& in);
EmbeddingLoad load_embeddings_file(const std::string& path);
void save_embeddings(const EmbeddingTable& table, std::ostream& out);

// Row-major n x dim matrix.
struct TokenMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  TokenMatrix() = default;
  TokenMatrix(std::size_t rows, std::size_t dim) : rows(rows), dim(dim), data(rows * dim, 0.0) {}

  std::span<const double> row(std::size_t r) const { return {data.data() + r * dim, dim}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * dim, dim}; }
  double& at(std::size_t r, std::size_t c) { return data[r * dim + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * dim + c]; }
};

// One row per in-vocabulary token; out-of-vocabulary tokens are dropped.
TokenMatrix embed_sequence(const TokenSeq& tokens, const EmbeddingTable& table);

std::vector<double> mean_embedding(const TokenSeq& tokens, const EmbeddingTable& table);

}  // namespace adaudit::text
