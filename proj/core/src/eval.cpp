#include "adaudit/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "adaudit/error.hpp"
#include "adaudit/random.hpp"

namespace adaudit::eval {

using nlohmann::json;

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (const auto f : assignments) ++sizes[f];
  return sizes;
}

std::vector<std::size_t> FoldPlan::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == fold) out.push_back(i);
  return out;
}

FoldPlan kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k must be >= 2");
  if (n < k) throw DataError("cannot split " + std::to_string(n) + " examples into " + std::to_string(k) + " folds");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(perm);
  FoldPlan plan{k, seed, std::vector<std::size_t>(n)};
  for (std::size_t i = 0; i < n; ++i) plan.assignments[perm[i]] = i % k;
  return plan;
}

FoldPlan stratified_kfold(std::span<const Label> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k must be >= 2");
  if (labels.size() < k)
    throw DataError("cannot split " + std::to_string(labels.size()) + " examples into " + std::to_string(k) +
                    " folds");
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == Label::political ? pos : neg).push_back(i);
  Rng rng(seed);
  rng.shuffle(pos);
  rng.shuffle(neg);
  FoldPlan plan{k, seed, std::vector<std::size_t>(labels.size())};
  std::size_t next = 0;
  for (const auto* cls : {&pos, &neg})
    for (const auto i : *cls) plan.assignments[i] = next++ % k;
  return plan;
}

HoldoutSplit stratified_holdout(std::span<const Label> labels, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("holdout fraction must be in (0,1)");
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == Label::political ? pos : neg).push_back(i);
  if (pos.size() < 2 || neg.size() < 2) throw DataError("holdout split needs two examples of each class");
  Rng rng(seed);
  HoldoutSplit split;
  for (auto* cls : {&pos, &neg}) {
    rng.shuffle(*cls);
    const auto n = cls->size();
    auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    take = std::clamp<std::size_t>(take, 1, n - 1);
    split.holdout.insert(split.holdout.end(), cls->begin(), cls->begin() + static_cast<std::ptrdiff_t>(take));
    split.train.insert(split.train.end(), cls->begin() + static_cast<std::ptrdiff_t>(take), cls->end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.holdout.begin(), split.holdout.end());
  return split;
}

namespace {

void check_lengths(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const Label> labels) {
  std::size_t pos = 0;
  for (const auto l : labels) pos += l == Label::political;
  return {pos, labels.size() - pos};
}

ClassMetrics prf(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassMetrics m;
  m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

}  // namespace

double auc_rank(std::span<const double> scores, std::span<const Label> labels) {
  check_lengths(scores, labels);
  const auto [npos, nneg] = class_counts(labels);
  if (npos == 0 || nneg == 0) throw DataError("AUC undefined: labels contain a single class");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t pos_in_block = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      pos_in_block += labels[order[j]] == Label::political;
      ++j;
    }
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    pos_rank_sum += avg_rank * static_cast<double>(pos_in_block);
    i = j;
  }
  const double p = static_cast<double>(npos);
  const double u = pos_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(nneg));
}

Metrics compute_metrics(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  check_lengths(scores, labels);
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) throw DataError("score outside [0, 1]");
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] == Label::political;
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
  }
  Metrics m;
  m.auc = auc_rank(scores, labels);
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(scores.size());
  m.political = prf(tp, fp, fn);
  m.non_political = prf(tn, fn, fp);
  m.macro_f1 = (m.political.f1 + m.non_political.f1) / 2.0;
  return m;
}

double sentinel_threshold(std::span<const double> scores) {
  double hi = 1.0;
  for (const double s : scores) hi = std::max(hi, s);
  return std::nextafter(hi, std::numeric_limits<double>::infinity());
}

RocCurve roc_curve(std::span<const double> scores, std::span<const Label> labels) {
  check_lengths(scores, labels);
  const auto [npos, nneg] = class_counts(labels);
  if (npos == 0 || nneg == 0) throw DataError("ROC undefined: labels contain a single class");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  RocCurve curve;
  curve.points.push_back({0.0, 0.0, sentinel_threshold(scores)});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == Label::political ? tp : fp) += 1;
      ++i;
    }
    curve.points.push_back(
        {static_cast<double>(fp) / static_cast<double>(nneg), static_cast<double>(tp) / static_cast<double>(npos), s});
  }
  return curve;
}

double trapezoid_area(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return area;
}

OperatingPoint tpr_at_fpr(const RocCurve& curve, double target_fpr) {
  if (!(target_fpr >= 0.0 && target_fpr <= 1.0)) throw std::invalid_argument("target fpr must be in [0, 1]");
  if (curve.points.empty()) throw std::invalid_argument("empty ROC curve");
  OperatingPoint best{curve.points.front().tpr, curve.points.front().threshold, curve.points.front().fpr};
  for (const auto& p : curve.points) {
    if (p.fpr > target_fpr) continue;
    if (p.fpr > best.fpr || (p.fpr == best.fpr && p.tpr > best.tpr)) best = {p.tpr, p.threshold, p.fpr};
  }
  return best;
}

void write_roc_csv(const RocCurve& curve, std::ostream& out) {
  out << "fpr,tpr,threshold\n";
  std::ostringstream row;
  row << std::setprecision(17);
  for (const auto& p : curve.points) {
    row.str({});
    row << p.fpr << ',' << p.tpr << ',' << p.threshold << '\n';
    out << row.str();
  }
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return s;
  double ss = 0.0;
  for (const double v : values) ss += (v - s.mean) * (v - s.mean);
  s.half_width = kZ90 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return s;
}

std::vector<std::string> metric_names() {
  return {"accuracy",           "macro_f1",         "auc",
          "precision_political", "recall_political", "f1_political",
          "precision_non_political", "recall_non_political", "f1_non_political"};
}

std::vector<double> metric_values(const Metrics& m) {
  return {m.accuracy,           m.macro_f1,         m.auc,
          m.political.precision, m.political.recall, m.political.f1,
          m.non_political.precision, m.non_political.recall, m.non_political.f1};
}

std::vector<std::pair<std::string, Summary>> aggregate(std::span<const Metrics> folds) {
  const auto names = metric_names();
  std::vector<std::vector<double>> columns(names.size());
  for (const auto& m : folds) {
    const auto v = metric_values(m);
    for (std::size_t c = 0; c < v.size(); ++c) columns[c].push_back(v[c]);
  }
  std::vector<std::pair<std::string, Summary>> out;
  for (std::size_t c = 0; c < names.size(); ++c) out.emplace_back(names[c], summarize(columns[c]));
  return out;
}

const Summary& CvReport::metric(std::string_view name) const {
  for (const auto& [n, s] : summary)
    if (n == name) return s;
  throw std::out_of_range("no metric named " + std::string(name));
}

CvResult cross_validate(std::span<const LabeledAd> data, models::ModelKind kind, const models::TrainSettings& settings,
                        std::shared_ptr<const text::EmbeddingTable> embeddings, std::size_t k, std::uint64_t seed) {
  std::vector<Label> labels;
  labels.reserve(data.size());
  for (const auto& d : data) labels.push_back(d.label);
  const FoldPlan plan = stratified_kfold(labels, k, seed);

  std::vector<std::vector<std::size_t>> test_idx(k);
  for (std::size_t i = 0; i < data.size(); ++i) test_idx[plan.assignments[i]].push_back(i);
  for (std::size_t f = 0; f < k; ++f) {
    bool pos = false, neg = false;
    for (const auto i : test_idx[f]) (labels[i] == Label::political ? pos : neg) = true;
    if (!pos || !neg) throw DataError("fold " + std::to_string(f) + " is missing a class");
  }

  CvResult result;
  result.oof_scores.assign(data.size(), 0.0);
  std::vector<Metrics> fold_metrics(k);
  std::vector<std::exception_ptr> errors(k);

  auto run_fold = [&](std::size_t f) {
    try {
      std::vector<LabeledAd> train;
      train.reserve(data.size() - test_idx[f].size());
      for (std::size_t i = 0; i < data.size(); ++i)
        if (plan.assignments[i] != f) train.push_back(data[i]);
      auto fold_settings = settings;
      fold_settings.train.seed = Rng::mix(seed, f);
      const auto clf = models::train_classifier(kind, train, fold_settings, embeddings);
      std::vector<double> scores;
      std::vector<Label> y;
      for (const auto i : test_idx[f]) {
        scores.push_back(clf.score(data[i].ad.text));
        y.push_back(labels[i]);
        result.oof_scores[i] = scores.back();
      }
      fold_metrics[f] = compute_metrics(scores, y);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(k, std::thread::hardware_concurrency()));
  if (workers == 1) {
    for (std::size_t f = 0; f < k; ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t f = next++; f < k; f = next++) run_fold(f);
      });
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  result.report.model_kind = std::string(models::to_string(kind));
  result.report.k = k;
  result.report.seed = seed;
  result.report.folds = fold_metrics;
  result.report.summary = aggregate(fold_metrics);
  result.roc = roc_curve(result.oof_scores, labels);
  result.report.tpr_at = {tpr_at_fpr(result.roc, 0.01), tpr_at_fpr(result.roc, 0.03)};
  return result;
}

std::string landis_koch(double kappa) {
  if (!(kappa >= -1.0 && kappa <= 1.0)) throw std::invalid_argument("kappa outside [-1, 1]");
  if (kappa < 0.0) return "Poor";
  if (kappa <= 0.20) return "Slight";
  if (kappa <= 0.40) return "Fair";
  if (kappa <= 0.60) return "Moderate";
  if (kappa <= 0.80) return "Substantial";
  return "Almost Perfect";
}

AgreementReport cohen_kappa(std::span<const Label> a, std::span<const Label> b) {
  if (a.size() != b.size()) throw std::invalid_argument("annotation vectors differ in length");
  if (a.empty()) throw std::invalid_argument("no items to compare");
  AgreementReport r;
  r.items = a.size();
  auto idx = [](Label l) { return l == Label::political ? 0u : 1u; };
  for (std::size_t i = 0; i < a.size(); ++i) ++r.contingency[idx(a[i])][idx(b[i])];
  const double n = static_cast<double>(a.size());
  r.observed = static_cast<double>(r.contingency[0][0] + r.contingency[1][1]) / n;
  double pe = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    const double ma = static_cast<double>(r.contingency[c][0] + r.contingency[c][1]) / n;
    const double mb = static_cast<double>(r.contingency[0][c] + r.contingency[1][c]) / n;
    pe += ma * mb;
  }
  r.chance = pe;
  if (pe == 1.0)
    r.kappa = r.observed == 1.0 ? 1.0 : 0.0;
  else
    r.kappa = (r.observed - pe) / (1.0 - pe);
  r.agreement_pct = 100.0 * r.observed;
  r.band = landis_koch(r.kappa);
  return r;
}

void to_json(json& j, const Metrics& m) {
  auto cls = [](const ClassMetrics& c) { return json{{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}}; };
  j = json{{"accuracy", m.accuracy},
           {"macro_f1", m.macro_f1},
           {"auc", m.auc},
           {"political", cls(m.political)},
           {"non_political", cls(m.non_political)}};
}

void to_json(json& j, const CvReport& r) {
  json summary = json::object();
  for (const auto& [name, s] : r.summary) summary[name] = {{"mean", s.mean}, {"ci90", s.half_width}};
  json ops = json::array();
  const double targets[2] = {0.01, 0.03};
  for (std::size_t i = 0; i < 2; ++i)
    ops.push_back({{"target_fpr", targets[i]},
                   {"tpr", r.tpr_at[i].tpr},
                   {"fpr", r.tpr_at[i].fpr},
                   {"threshold", r.tpr_at[i].threshold}});
  j = json{{"model_kind", r.model_kind}, {"k", r.k},           {"seed", r.seed},
           {"folds", r.folds},          {"summary", summary}, {"tpr_at_fpr", ops}};
}

void to_json(json& j, const AgreementReport& r) {
  j = json{{"kappa", r.kappa},
           {"agreement_pct", r.agreement_pct},
           {"observed", r.observed},
           {"chance", r.chance},
           {"items", r.items},
           {"band", r.band},
           {"contingency",
            {{"political_political", r.contingency[0][0]},
             {"political_non_political", r.contingency[0][1]},
             {"non_political_political", r.contingency[1][0]},
             {"non_political_non_political", r.contingency[1][1]}}}};
}

void to_json(json& j, const RocPoint& p) { j = json{{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", p.threshold}}; }

}  // namespace adaudit::eval
