#include "adaudit/textproc.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>

#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "adaudit/error.hpp"
#include "adaudit/unicode.hpp"

namespace adaudit::text {
namespace {

bool is_word_char(UChar32 c) {
  if (u_isalnum(c)) return true;
  const auto type = u_charType(c);
  return type == U_NON_SPACING_MARK || type == U_COMBINING_SPACING_MARK;
}

std::string utf8(const icu::UnicodeString& s, int32_t start, int32_t end) {
  std::string out;
  s.tempSubStringBetween(start, end).toUTF8String(out);
  return out;
}

int32_t find_url(const icu::UnicodeString& s, int32_t begin, int32_t end) {
  int32_t best = -1;
  for (const char* prefix : {"http://", "https://", "www."}) {
    const int32_t at = s.indexOf(icu::UnicodeString(prefix, -1, US_INV), begin, end - begin);
    if (at >= 0 && (best < 0 || at < best)) best = at;
  }
  return best;
}

void word_tokens(const icu::UnicodeString& s, int32_t begin, int32_t end, TokenSeq& out) {
  int32_t i = begin;
  while (i < end) {
    const UChar32 c = s.char32At(i);
    const int32_t len = U16_LENGTH(c);
    const bool hashtag = c == '#' && i + len < end && is_word_char(s.char32At(i + len));
    if (!hashtag && !is_word_char(c)) {
      i += len;
      continue;
    }
    const int32_t start = i;
    i += len;
    while (i < end) {
      const UChar32 d = s.char32At(i);
      if (!(is_word_char(d) || (hashtag && d == '_'))) break;
      i += U16_LENGTH(d);
    }
    out.push_back(utf8(s, start, i));
  }
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  const auto s = icu::UnicodeString::fromUTF8(unicode::nfkc_lower(text));
  int32_t i = 0;
  const int32_t n = s.length();
  while (i < n) {
    while (i < n && u_isUWhiteSpace(s.char32At(i))) i += U16_LENGTH(s.char32At(i));
    const int32_t chunk_begin = i;
    while (i < n && !u_isUWhiteSpace(s.char32At(i))) i += U16_LENGTH(s.char32At(i));
    const int32_t chunk_end = i;
    if (chunk_begin == chunk_end) continue;
    const int32_t url = find_url(s, chunk_begin, chunk_end);
    if (url < 0) {
      word_tokens(s, chunk_begin, chunk_end, out);
    } else {
      word_tokens(s, chunk_begin, url, out);
      out.emplace_back(kUrlToken);
    }
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (const char ch : bytes) {
    h ^= static_cast<std::uint8_t>(ch);
    h *= kHashPrime;
  }
  return h;
}

SparseVector::SparseVector(std::size_t dims) : dims_(dims) {
  if (dims == 0) throw std::invalid_argument("SparseVector dims must be >= 1");
}

void SparseVector::add(std::size_t index, double count) {
  if (index >= dims_) throw std::out_of_range("SparseVector index out of range");
  if (!(count >= 0.0)) throw std::invalid_argument("SparseVector counts must be nonnegative");
  if (count == 0.0) return;
  entries_[index] += count;
}

double SparseVector::get(std::size_t index) const {
  auto it = entries_.find(index);
  return it == entries_.end() ? 0.0 : it->second;
}

double SparseVector::total() const {
  double t = 0.0;
  for (const auto& [i, c] : entries_) t += c;
  return t;
}

SparseVector hash_vectorize(const TokenSeq& tokens, std::size_t dims) {
  SparseVector v(dims);
  for (const auto& t : tokens) v.add(static_cast<std::size_t>(fnv1a64(t) % dims), 1.0);
  return v;
}

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw std::invalid_argument("embedding dim must be >= 1");
}

void EmbeddingTable::insert(std::string token, std::vector<double> vec) {
  if (vec.size() != dim_) throw DimensionMismatch("embedding for '" + token + "' has wrong length");
  auto [it, inserted] = vectors_.insert_or_assign(token, std::move(vec));
  if (inserted) order_.push_back(std::move(token));
}

const std::vector<double>* EmbeddingTable::lookup(std::string_view token) const {
  auto it = vectors_.find(std::string(token));
  return it == vectors_.end() ? nullptr : &it->second;
}

std::uint64_t EmbeddingTable::fingerprint() const {
  std::uint64_t h = fnv1a64(std::to_string(dim_));
  for (const auto& tok : order_) {
    h = fnv1a64(tok, h);
    for (const double x : vectors_.at(tok)) {
      char buf[sizeof(double)];
      std::memcpy(buf, &x, sizeof x);
      h = fnv1a64(std::string_view(buf, sizeof buf), h);
    }
  }
  return h;
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
}

bool parse_size(std::string_view s, std::size_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace

EmbeddingLoad load_embeddings(std::istream& in) {
  if (!in) throw DataError("unreadable embedding stream");
  std::string line;
  std::optional<EmbeddingTable> table;
  std::size_t skipped = 0;
  bool first = true;
  bool have_header = false;
  while (std::getline(in, line)) {
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (first) {
      first = false;
      std::size_t count = 0;
      std::size_t dim = 0;
      if (fields.size() == 2 && parse_size(fields[0], count) && parse_size(fields[1], dim)) {
        if (dim == 0) throw DataError("embedding header declares dim 0");
        table.emplace(dim);
        have_header = true;
        continue;
      }
    }
    if (fields.size() < 2) {
      ++skipped;
      continue;
    }
    const std::size_t arity = fields.size() - 1;
    if (!table) table.emplace(arity);
    if (arity != table->dim()) {
      if (!have_header)
        throw DataError("inconsistent embedding dim: expected " + std::to_string(table->dim()) + ", got " +
                        std::to_string(arity));
      ++skipped;
      continue;
    }
    std::vector<double> vec(arity);
    bool ok = true;
    for (std::size_t k = 0; k < arity && ok; ++k) ok = parse_double(fields[k + 1], vec[k]);
    if (!ok) {
      ++skipped;
      continue;
    }
    table->insert(std::string(fields[0]), std::move(vec));
  }
  if (in.bad()) throw DataError("read error on embedding stream");
  if (!table || (table->size() == 0 && !have_header)) throw DataError("empty embedding stream");
  return {std::move(*table), skipped};
}

EmbeddingLoad load_embeddings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return load_embeddings(in);
}

void save_embeddings(const EmbeddingTable& table, std::ostream& out) {
  out << table.size() << ' ' << table.dim() << '\n';
  std::ostringstream buf;
  buf << std::setprecision(6) << std::fixed;
  for (const auto& tok : table.tokens()) {
    buf.str({});
    buf << tok;
    for (const double x : *table.lookup(tok)) buf << ' ' << x;
    out << buf.str() << '\n';
  }
}

TokenMatrix embed_sequence(const TokenSeq& tokens, const EmbeddingTable& table) {
  std::vector<const std::vector<double>*> rows;
  rows.reserve(tokens.size());
  for (const auto& t : tokens)
    if (const auto* v = table.lookup(t)) rows.push_back(v);
  TokenMatrix m(rows.size(), table.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r]->begin(), rows[r]->end(), m.row(r).begin());
  return m;
}

std::vector<double> mean_embedding(const TokenSeq& tokens, const EmbeddingTable& table) {
  std::vector<double> mean(table.dim(), 0.0);
  std::size_t n = 0;
  for (const auto& t : tokens) {
    if (const auto* v = table.lookup(t)) {
      for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += (*v)[k];
      ++n;
    }
  }
  if (n > 0)
    for (auto& x : mean) x /= static_cast<double>(n);
  return mean;
}

}  // namespace adaudit::text
