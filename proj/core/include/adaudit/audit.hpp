#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "adaudit/corpus.hpp"
#include "adaudit/label.hpp"
#include "adaudit/models/classifier.hpp"

namespace adaudit::audit {

struct CalibratedThreshold {
  double threshold = 1.0;
  double achieved_fpr = 0.0;
  double achieved_tpr = 0.0;
  double target_fpr = 0.0;
  std::size_t calibration_size = 0;
};

// Smallest candidate threshold (observed scores plus a flag-nothing
// sentinel) whose negative pass rate, score >= threshold, is <= target.
CalibratedThreshold calibrate_threshold(std::span<const double> scores, std::span<const Label> labels,
                                        double target_fpr);

// Calibrates a deployed model on labeled ads it was not trained on.
CalibratedThreshold calibrate_model(const models::Classifier& model, std::span<const LabeledAd> holdout,
                                    double target_fpr);

enum class Verdict { unreviewed, political, non_political, unsure };
std::string_view to_string(Verdict v);
Verdict parse_verdict(std::string_view s);

struct Flag {
  std::string ad_id;
  double score = 0.0;
  std::string model_id;
  Verdict verdict = Verdict::unreviewed;
  std::optional<std::string> reviewer;
  std::optional<std::string> reviewed_at;

  bool operator==(const Flag&) const = default;
};

// Ads with score >= threshold, sorted by descending score (id ascending on
// ties).
std::vector<Flag> score_corpus(const models::Classifier& model, const corpus::AdStore& store,
                               double threshold);

// Same selection over precomputed scores (aligned with store order).
std::vector<Flag> flags_from_scores(const corpus::AdStore& store, std::span<const double> scores,
                                    double threshold, std::string_view model_id);

std::string normalize_text(std::string_view s);

struct DeclaredMatch {
  std::string flag_id;
  std::string declared_id;

  bool operator==(const DeclaredMatch&) const = default;
};

// Exact match on normalized text; each flag matches at most one declared
// ad, the earliest first_seen (then smallest id).
std::vector<DeclaredMatch> match_declared(std::span<const Flag> flags, const corpus::AdStore& flagged_source,
                                          const corpus::AdStore& declared);

struct ComplianceInfo {
  bool has_electoral_keyword = false;
  std::optional<std::string> cpf;
  std::optional<std::string> cnpj;
  bool compliant = false;
};

struct DisclaimerOptions {
  // Require the 4-digit CNPJ branch field.
  bool strict_cnpj = false;
};

ComplianceInfo detect_disclaimer(const corpus::AdRecord& ad, const DisclaimerOptions& opts = {});
ComplianceInfo detect_disclaimer_text(std::string_view text, const DisclaimerOptions& opts = {});

struct CrawlSnapshot {
  std::string taken_at;
  std::set<std::string> ids;
};

struct CoverageStats {
  std::vector<std::size_t> cumulative;  // |union of snapshots 0..i|
  std::vector<double> growth;           // one per snapshot after the first
  double mean_growth = 0.0;
};

CoverageStats coverage_stats(std::span<const CrawlSnapshot> snapshots);

struct ProbeEstimate {
  std::size_t base_size = 0;
  std::size_t new_ids = 0;
  double total_fraction = 0.0;
  double per_probe_fraction = 0.0;
};

ProbeEstimate probe_estimate(const std::set<std::string>& base, std::span<const std::set<std::string>> probes);

struct AdvertiserRollup {
  std::string advertiser_id;
  std::string advertiser_name;
  std::size_t flagged = 0;
  std::size_t matched_declared = 0;
  std::size_t compliant = 0;
};

struct ComplianceSummary {
  std::size_t with_keyword = 0;
  std::size_t with_tax_id = 0;
  std::size_t compliant = 0;
  std::size_t compliant_advertisers = 0;
};

struct AuditCounts {
  std::size_t input = 0;
  std::size_t after_period = 0;
  std::size_t after_language = 0;
  std::size_t after_dedup = 0;
};

struct AuditReport {
  std::string model_id;
  double threshold = 0.0;
  AuditCounts counts;
  std::size_t corpus_size = 0;  // after all filters
  std::size_t flagged_count = 0;
  std::vector<Flag> flags;
  std::vector<DeclaredMatch> matched_declared;
  ComplianceSummary compliance;
  std::vector<std::string> compliant_ids;
  std::vector<AdvertiserRollup> advertisers;  // by flagged desc, id asc
};

struct AuditOptions {
  std::optional<corpus::PeriodFilter> period;
  std::string language = "pt";  // empty keeps every language
  double threshold = 0.5;
  DisclaimerOptions disclaimer;
};

// period -> language -> caption dedup -> score -> declared match ->
// disclaimer compliance over the flagged ads.
AuditReport run_audit(const models::Classifier& model, const corpus::AdStore& collected,
                      const corpus::AdStore& declared, const AuditOptions& opts);

void to_json(nlohmann::json& j, const CalibratedThreshold& t);
void to_json(nlohmann::json& j, const Flag& f);
void from_json(const nlohmann::json& j, Flag& f);
void to_json(nlohmann::json& j, const ComplianceInfo& c);
void to_json(nlohmann::json& j, const AuditReport& r);
void to_json(nlohmann::json& j, const CoverageStats& c);
void to_json(nlohmann::json& j, const ProbeEstimate& p);

// Append-only JSONL journal of flag events:
//   {"event":"flag_created","ad_id":...,"score":...,"model_id":...}
//   {"event":"verdict_set","ad_id":...,"verdict":...,"reviewer":...,"reviewed_at":...}
// Every append is flushed before returning. Thread-safe.
class FlagJournal {
 public:
  // Opens (creating if needed) and replays an existing journal.
  explicit FlagJournal(std::string path);

  void create(const Flag& flag);
  // Throws DataError for unknown ids or verdict == unreviewed.
  Flag set_verdict(std::string_view ad_id, Verdict verdict, std::string reviewer, std::string reviewed_at);

  // Current state, descending score.
  [[nodiscard]] std::vector<Flag> flags() const;
  [[nodiscard]] std::optional<Flag> find(std::string_view ad_id) const;
  [[nodiscard]] std::size_t event_count() const;
  [[nodiscard]] const std::string& path() const { return path_; }

 private:
  void append(const nlohmann::json& event);
  void apply(const nlohmann::json& event);

  std::string path_;
  mutable std::mutex mu_;
  std::vector<Flag> flags_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::size_t events_ = 0;
};

void write_flag_journal(std::span<const Flag> flags, const std::string& path);

}  // namespace adaudit::audit
