#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace adaudit::corpus {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::year_month_day;

enum class Source { collector, ad_library };

std::string_view to_string(Source s);
Source parse_source(std::string_view s);

struct AdRecord {
  std::string id;
  std::string advertiser_id;
  std::string advertiser_name;
  std::string text;
  std::optional<std::string> disclaimer;
  std::optional<std::string> landing_url;
  Timestamp first_seen{};
  Timestamp last_seen{};
  std::optional<std::string> language;
  Source source = Source::collector;
  bool declared_political = false;
  std::vector<std::string> media_refs;

  bool operator==(const AdRecord&) const = default;
};

// Throws DataError when a record breaks the AdRecord invariants.
void validate(const AdRecord& ad);

// RFC 3339 helpers. Parsing accepts "Z" or numeric offsets and fractional
// seconds (truncated); output is always "YYYY-MM-DDTHH:MM:SSZ".
Timestamp parse_timestamp(std::string_view s);
std::string format_timestamp(Timestamp t);
Date parse_date(std::string_view s);
std::string format_date(Date d);

void to_json(nlohmann::json& j, const AdRecord& ad);
void from_json(const nlohmann::json& j, AdRecord& ad);

struct Provenance {
  std::string file;
  std::size_t rows = 0;
  std::size_t skipped = 0;
  std::string ingested_at;
};

// Insertion-ordered collection of ads keyed by id. Immutable once built;
// the filters below return new stores.
class AdStore {
 public:
  AdStore() = default;

  // Inserts or replaces (last write wins; the replaced record keeps its
  // original position).
  void upsert(AdRecord ad);

  [[nodiscard]] std::size_t size() const { return records_.size(); }
  [[nodiscard]] bool empty() const { return records_.empty(); }
  [[nodiscard]] const std::vector<AdRecord>& records() const { return records_; }
  [[nodiscard]] const AdRecord* find(std::string_view id) const;

  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

  Provenance provenance;

 private:
  std::vector<AdRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct MalformedLine {
  std::size_t line_no = 0;
  std::string reason;
};

struct IngestResult {
  AdStore store;
  std::size_t skipped = 0;
  std::vector<MalformedLine> errors;
};

// Reads newline-delimited JSON ads. Malformed lines are skipped and
// recorded; a stream in a failed state throws DataError.
IngestResult ingest(std::istream& in, std::string_view origin = "<stream>");
IngestResult ingest_file(const std::string& path);

void serialize(const AdStore& store, std::ostream& out);
void write_file(const AdStore& store, const std::string& path);

AdStore dedup_by_caption(const AdStore& store);

enum class Language { pt, en, es, unknown };
std::string_view to_string(Language l);

// Stopword vote over the distinct tokens of `text`: the language with the
// most distinct hits wins if it has at least two and no tie.
Language detect_language(std::string_view text);

AdStore filter_language(const AdStore& store, std::string_view lang);

struct PeriodFilter {
  Date start;
  Date end;

  PeriodFilter(Date start, Date end);
  [[nodiscard]] bool contains(Timestamp t) const;
};

AdStore filter_period(const AdStore& store, const PeriodFilter& period);

// Electoral period in which electoral advertising was legal.
PeriodFilter electoral_period_2018();

}  // namespace adaudit::corpus
