#include "adaudit/audit.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "adaudit/error.hpp"
#include "adaudit/eval.hpp"
#include "adaudit/unicode.hpp"

namespace adaudit::audit {

using nlohmann::json;

CalibratedThreshold calibrate_threshold(std::span<const double> scores, std::span<const Label> labels,
                                        double target_fpr) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) throw std::invalid_argument("target fpr must be in (0, 1)");
  std::vector<double> neg;
  std::vector<double> pos;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] == Label::political ? pos : neg).push_back(scores[i]);
  if (pos.empty() || neg.empty()) throw DataError("calibration needs both classes");
  std::sort(neg.begin(), neg.end());
  std::sort(pos.begin(), pos.end());

  std::vector<double> candidates(scores.begin(), scores.end());
  candidates.push_back(eval::sentinel_threshold(scores));
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  auto at_or_above = [](const std::vector<double>& sorted, double t) {
    return static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
  };
  const double nneg = static_cast<double>(neg.size());
  // The negative pass rate only falls as the threshold rises, so the first
  // feasible candidate is the minimal one.
  for (const double t : candidates) {
    const double fpr = static_cast<double>(at_or_above(neg, t)) / nneg;
    if (fpr <= target_fpr) {
      CalibratedThreshold out;
      out.threshold = t;
      out.achieved_fpr = fpr;
      out.achieved_tpr = static_cast<double>(at_or_above(pos, t)) / static_cast<double>(pos.size());
      out.target_fpr = target_fpr;
      out.calibration_size = scores.size();
      return out;
    }
  }
  throw std::logic_error("sentinel threshold was infeasible");
}

CalibratedThreshold calibrate_model(const models::Classifier& model, std::span<const LabeledAd> holdout,
                                    double target_fpr) {
  std::vector<double> scores;
  std::vector<Label> labels;
  scores.reserve(holdout.size());
  labels.reserve(holdout.size());
  for (const auto& ex : holdout) {
    scores.push_back(model.score(ex.ad.text));
    labels.push_back(ex.label);
  }
  return calibrate_threshold(scores, labels, target_fpr);
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::unreviewed: return "unreviewed";
    case Verdict::political: return "political";
    case Verdict::non_political: return "non_political";
    case Verdict::unsure: return "unsure";
  }
  return "unreviewed";
}

Verdict parse_verdict(std::string_view s) {
  if (s == "unreviewed") return Verdict::unreviewed;
  if (s == "political") return Verdict::political;
  if (s == "non_political") return Verdict::non_political;
  if (s == "unsure") return Verdict::unsure;
  throw DataError("unknown verdict '" + std::string(s) + "'");
}

namespace {

void sort_flags(std::vector<Flag>& flags) {
  std::sort(flags.begin(), flags.end(), [](const Flag& a, const Flag& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.ad_id < b.ad_id;
  });
}

}  // namespace

std::vector<Flag> flags_from_scores(const corpus::AdStore& store, std::span<const double> scores, double threshold,
                                    std::string_view model_id) {
  if (scores.size() != store.size()) throw std::invalid_argument("scores not aligned with store");
  std::vector<Flag> flags;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= threshold) flags.push_back({store.records()[i].id, scores[i], std::string(model_id), Verdict::unreviewed, std::nullopt, std::nullopt});
  }
  sort_flags(flags);
  return flags;
}

std::vector<Flag> score_corpus(const models::Classifier& model, const corpus::AdStore& store, double threshold) {
  std::vector<double> scores;
  scores.reserve(store.size());
  for (const auto& ad : store) scores.push_back(model.score(ad.text));
  return flags_from_scores(store, scores, threshold, model.model_id());
}

std::string normalize_text(std::string_view s) { return unicode::normalize_text(s); }

std::vector<DeclaredMatch> match_declared(std::span<const Flag> flags, const corpus::AdStore& flagged_source,
                                          const corpus::AdStore& declared) {
  std::unordered_map<std::string, const corpus::AdRecord*> by_text;
  for (const auto& ad : declared) {
    auto [it, inserted] = by_text.try_emplace(normalize_text(ad.text), &ad);
    if (inserted) continue;
    const auto* cur = it->second;
    if (ad.first_seen < cur->first_seen || (ad.first_seen == cur->first_seen && ad.id < cur->id)) it->second = &ad;
  }
  std::vector<DeclaredMatch> out;
  for (const auto& f : flags) {
    const auto* ad = flagged_source.find(f.ad_id);
    if (ad == nullptr) continue;
    if (auto it = by_text.find(normalize_text(ad->text)); it != by_text.end())
      out.push_back({f.ad_id, it->second->id});
  }
  return out;
}

namespace {

std::string digits_only(const std::string& s) {
  std::string out;
  for (const char c : s)
    if (c >= '0' && c <= '9') out.push_back(c);
  return out;
}

// Returns the first tax id matched by `re` (group 1) and blanks it in `text`.
std::optional<std::string> take_tax_id(std::string& text, const std::regex& re) {
  std::smatch m;
  if (!std::regex_search(text, m, re)) return std::nullopt;
  const auto pos = static_cast<std::size_t>(m.position(1));
  const auto len = static_cast<std::size_t>(m.length(1));
  auto id = digits_only(m.str(1));
  text.replace(pos, len, std::string(len, ' '));
  return id;
}

}  // namespace

ComplianceInfo detect_disclaimer_text(std::string_view text, const DisclaimerOptions& opts) {
  static const std::regex keyword(R"(propaganda\s+(eleitoral|electoral|politica))");
  static const std::regex cnpj_relaxed(R"((?:^|[^0-9])([0-9]{2}\.?[0-9]{3}\.?[0-9]{3}/?[0-9]{3,4}-?[0-9]{2})(?![0-9]))");
  static const std::regex cnpj_strict(R"((?:^|[^0-9])([0-9]{2}\.?[0-9]{3}\.?[0-9]{3}/?[0-9]{4}-?[0-9]{2})(?![0-9]))");
  static const std::regex cpf(R"((?:^|[^0-9])([0-9]{3}\.?[0-9]{3}\.?[0-9]{3}-?[0-9]{2})(?![0-9]))");

  std::string folded = unicode::fold_accents(text);
  ComplianceInfo info;
  info.has_electoral_keyword = std::regex_search(folded, keyword);
  info.cnpj = take_tax_id(folded, opts.strict_cnpj ? cnpj_strict : cnpj_relaxed);
  info.cpf = take_tax_id(folded, cpf);
  info.compliant = info.has_electoral_keyword && (info.cpf.has_value() || info.cnpj.has_value());
  return info;
}

ComplianceInfo detect_disclaimer(const corpus::AdRecord& ad, const DisclaimerOptions& opts) {
  std::string combined = ad.text;
  if (ad.disclaimer) {
    combined += '\n';
    combined += *ad.disclaimer;
  }
  return detect_disclaimer_text(combined, opts);
}

CoverageStats coverage_stats(std::span<const CrawlSnapshot> snapshots) {
  if (snapshots.size() < 2) throw std::invalid_argument("coverage needs at least two snapshots");
  if (snapshots.front().ids.empty()) throw DataError("first crawl snapshot is empty");
  CoverageStats out;
  std::unordered_set<std::string> seen;
  for (const auto& snap : snapshots) {
    seen.insert(snap.ids.begin(), snap.ids.end());
    out.cumulative.push_back(seen.size());
  }
  for (std::size_t i = 1; i < out.cumulative.size(); ++i)
    out.growth.push_back(static_cast<double>(out.cumulative[i]) / static_cast<double>(out.cumulative[i - 1]) - 1.0);
  double sum = 0.0;
  for (const double g : out.growth) sum += g;
  out.mean_growth = sum / static_cast<double>(out.growth.size());
  return out;
}

ProbeEstimate probe_estimate(const std::set<std::string>& base, std::span<const std::set<std::string>> probes) {
  if (base.empty()) throw DataError("probe estimate needs a non-empty base set");
  if (probes.empty()) throw std::invalid_argument("probe estimate needs at least one probe");
  std::set<std::string> fresh;
  for (const auto& p : probes)
    for (const auto& id : p)
      if (!base.count(id)) fresh.insert(id);
  ProbeEstimate e;
  e.base_size = base.size();
  e.new_ids = fresh.size();
  e.total_fraction = static_cast<double>(fresh.size()) / static_cast<double>(base.size());
  e.per_probe_fraction = e.total_fraction / static_cast<double>(probes.size());
  return e;
}

AuditReport run_audit(const models::Classifier& model, const corpus::AdStore& collected,
                      const corpus::AdStore& declared, const AuditOptions& opts) {
  AuditReport r;
  r.model_id = model.model_id();
  r.threshold = opts.threshold;
  r.counts.input = collected.size();
  corpus::AdStore store = opts.period ? corpus::filter_period(collected, *opts.period) : collected;
  r.counts.after_period = store.size();
  if (!opts.language.empty()) store = corpus::filter_language(store, opts.language);
  r.counts.after_language = store.size();
  store = corpus::dedup_by_caption(store);
  r.counts.after_dedup = store.size();
  r.corpus_size = store.size();

  r.flags = score_corpus(model, store, opts.threshold);
  r.flagged_count = r.flags.size();
  r.matched_declared = match_declared(r.flags, store, declared);

  std::map<std::string, AdvertiserRollup> rollups;
  std::set<std::string> compliant_advertisers;
  for (const auto& f : r.flags) {
    const auto* ad = store.find(f.ad_id);
    auto& roll = rollups[ad->advertiser_id];
    roll.advertiser_id = ad->advertiser_id;
    roll.advertiser_name = ad->advertiser_name;
    ++roll.flagged;
    const auto info = detect_disclaimer(*ad, opts.disclaimer);
    r.compliance.with_keyword += info.has_electoral_keyword;
    r.compliance.with_tax_id += info.cpf.has_value() || info.cnpj.has_value();
    if (info.compliant) {
      ++r.compliance.compliant;
      ++roll.compliant;
      compliant_advertisers.insert(ad->advertiser_id);
      r.compliant_ids.push_back(f.ad_id);
    }
  }
  for (const auto& m : r.matched_declared) ++rollups[store.find(m.flag_id)->advertiser_id].matched_declared;
  r.compliance.compliant_advertisers = compliant_advertisers.size();
  std::sort(r.compliant_ids.begin(), r.compliant_ids.end());
  for (auto& [id, roll] : rollups) r.advertisers.push_back(std::move(roll));
  std::stable_sort(r.advertisers.begin(), r.advertisers.end(),
                   [](const AdvertiserRollup& a, const AdvertiserRollup& b) { return a.flagged > b.flagged; });
  return r;
}

void to_json(json& j, const CalibratedThreshold& t) {
  j = json{{"threshold", t.threshold},
           {"achieved_fpr", t.achieved_fpr},
           {"achieved_tpr", t.achieved_tpr},
           {"target_fpr", t.target_fpr},
           {"calibration_size", t.calibration_size}};
}

void to_json(json& j, const Flag& f) {
  j = json{{"ad_id", f.ad_id},
           {"score", f.score},
           {"model_id", f.model_id},
           {"verdict", to_string(f.verdict)},
           {"reviewer", f.reviewer ? json(*f.reviewer) : json(nullptr)},
           {"reviewed_at", f.reviewed_at ? json(*f.reviewed_at) : json(nullptr)}};
}

void from_json(const json& j, Flag& f) {
  f.ad_id = j.at("ad_id").get<std::string>();
  f.score = j.at("score").get<double>();
  f.model_id = j.value("model_id", std::string{});
  f.verdict = parse_verdict(j.value("verdict", std::string("unreviewed")));
  f.reviewer.reset();
  f.reviewed_at.reset();
  if (auto it = j.find("reviewer"); it != j.end() && it->is_string()) f.reviewer = it->get<std::string>();
  if (auto it = j.find("reviewed_at"); it != j.end() && it->is_string()) f.reviewed_at = it->get<std::string>();
}

void to_json(json& j, const ComplianceInfo& c) {
  j = json{{"has_electoral_keyword", c.has_electoral_keyword},
           {"cpf", c.cpf ? json(*c.cpf) : json(nullptr)},
           {"cnpj", c.cnpj ? json(*c.cnpj) : json(nullptr)},
           {"compliant", c.compliant}};
}

void to_json(json& j, const AuditReport& r) {
  json matches = json::array();
  for (const auto& m : r.matched_declared) matches.push_back({{"flag_id", m.flag_id}, {"declared_id", m.declared_id}});
  json advertisers = json::array();
  for (const auto& a : r.advertisers)
    advertisers.push_back({{"advertiser_id", a.advertiser_id},
                           {"advertiser_name", a.advertiser_name},
                           {"flagged", a.flagged},
                           {"matched_declared", a.matched_declared},
                           {"compliant", a.compliant}});
  j = json{{"model_id", r.model_id},
           {"threshold", r.threshold},
           {"counts",
            {{"input", r.counts.input},
             {"after_period", r.counts.after_period},
             {"after_language", r.counts.after_language},
             {"after_dedup", r.counts.after_dedup}}},
           {"corpus_size", r.corpus_size},
           {"flagged_count", r.flagged_count},
           {"flags", r.flags},
           {"matched_declared", matches},
           {"matched_count", r.matched_declared.size()},
           {"compliance",
            {{"with_keyword", r.compliance.with_keyword},
             {"with_tax_id", r.compliance.with_tax_id},
             {"compliant", r.compliance.compliant},
             {"compliant_advertisers", r.compliance.compliant_advertisers},
             {"compliant_ids", r.compliant_ids}}},
           {"advertisers", advertisers}};
}

void to_json(json& j, const CoverageStats& c) {
  j = json{{"cumulative", c.cumulative}, {"growth", c.growth}, {"mean_growth", c.mean_growth}};
}

void to_json(json& j, const ProbeEstimate& p) {
  j = json{{"base_size", p.base_size},
           {"new_ids", p.new_ids},
           {"total_fraction", p.total_fraction},
           {"per_probe_fraction", p.per_probe_fraction}};
}

FlagJournal::FlagJournal(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) {
    std::ofstream create(path_, std::ios::app);
    if (!create) throw DataError("cannot open flag journal " + path_);
    return;
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      apply(json::parse(line));
    } catch (const std::exception& e) {
      throw DataError("flag journal " + path_ + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void FlagJournal::append(const json& event) {
  std::ofstream out(path_, std::ios::app);
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw DataError("failed to append to flag journal " + path_);
}

void FlagJournal::apply(const json& event) {
  const auto kind = event.at("event").get<std::string>();
  const auto id = event.at("ad_id").get<std::string>();
  if (kind == "flag_created") {
    Flag f;
    f.ad_id = id;
    f.score = event.at("score").get<double>();
    f.model_id = event.value("model_id", std::string{});
    if (auto it = index_.find(id); it != index_.end()) {
      flags_[it->second] = f;
    } else {
      index_.emplace(id, flags_.size());
      flags_.push_back(std::move(f));
    }
  } else if (kind == "verdict_set") {
    auto it = index_.find(id);
    if (it == index_.end()) throw DataError("verdict for unknown flag " + id);
    Flag& f = flags_[it->second];
    f.verdict = parse_verdict(event.at("verdict").get<std::string>());
    f.reviewer = event.at("reviewer").get<std::string>();
    f.reviewed_at = event.at("reviewed_at").get<std::string>();
  } else {
    throw DataError("unknown journal event '" + kind + "'");
  }
  ++events_;
}

void FlagJournal::create(const Flag& flag) {
  const json ev{{"event", "flag_created"}, {"ad_id", flag.ad_id}, {"score", flag.score}, {"model_id", flag.model_id}};
  std::lock_guard lock(mu_);
  append(ev);
  apply(ev);
}

Flag FlagJournal::set_verdict(std::string_view ad_id, Verdict verdict, std::string reviewer, std::string reviewed_at) {
  if (verdict == Verdict::unreviewed) throw DataError("cannot set a verdict back to unreviewed");
  if (reviewer.empty()) throw DataError("reviewer is required");
  const json ev{{"event", "verdict_set"},
                {"ad_id", ad_id},
                {"verdict", to_string(verdict)},
                {"reviewer", reviewer},
                {"reviewed_at", reviewed_at}};
  std::lock_guard lock(mu_);
  auto it = index_.find(ad_id);
  if (it == index_.end()) throw DataError("no flag for ad " + std::string(ad_id));
  append(ev);
  apply(ev);
  return flags_[it->second];
}

std::vector<Flag> FlagJournal::flags() const {
  std::lock_guard lock(mu_);
  auto out = flags_;
  sort_flags(out);
  return out;
}

std::optional<Flag> FlagJournal::find(std::string_view ad_id) const {
  std::lock_guard lock(mu_);
  auto it = index_.find(ad_id);
  if (it == index_.end()) return std::nullopt;
  return flags_[it->second];
}

std::size_t FlagJournal::event_count() const {
  std::lock_guard lock(mu_);
  return events_;
}

void write_flag_journal(std::span<const Flag> flags, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write flag journal " + path);
  for (const auto& f : flags)
    out << json{{"event", "flag_created"}, {"ad_id", f.ad_id}, {"score", f.score}, {"model_id", f.model_id}}.dump()
        << '\n';
  if (!out) throw DataError("failed writing flag journal " + path);
}

}  // namespace adaudit::audit
