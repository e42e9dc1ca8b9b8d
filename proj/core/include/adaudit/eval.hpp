#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "adaudit/label.hpp"
#include "adaudit/models/classifier.hpp"

namespace adaudit::eval {

struct FoldPlan {
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::vector<std::size_t> assignments;  // example -> fold

  [[nodiscard]] std::vector<std::size_t> fold_sizes() const;
  [[nodiscard]] std::vector<std::size_t> members(std::size_t fold) const;
};

// Seeded shuffle, then round-robin. Requires n >= k >= 2.
FoldPlan kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

// Shuffles each class separately and deals political examples first, then
// non-political, round-robin, so every fold gets both classes whenever
// each class has at least k members.
FoldPlan stratified_kfold(std::span<const Label> labels, std::size_t k, std::uint64_t seed);

struct HoldoutSplit {
  std::vector<std::size_t> train;    // ascending
  std::vector<std::size_t> holdout;  // ascending
};

// Per class, round(fraction * n) seeded picks go to the holdout, at least
// one of each class; the rest stay in train (at least one of each class).
HoldoutSplit stratified_holdout(std::span<const Label> labels, double fraction, std::uint64_t seed);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct Metrics {
  double accuracy = 0.0;
  ClassMetrics political;
  ClassMetrics non_political;
  double macro_f1 = 0.0;
  double auc = 0.0;
};

// Mann-Whitney AUC; tied positive/negative pairs count one half.
double auc_rank(std::span<const double> scores, std::span<const Label> labels);

Metrics compute_metrics(std::span<const double> scores, std::span<const Label> labels,
                        double threshold = 0.5);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
};

// Score strictly above every observed score and >= 1; "flag nothing".
double sentinel_threshold(std::span<const double> scores);

RocCurve roc_curve(std::span<const double> scores, std::span<const Label> labels);
double trapezoid_area(const RocCurve& curve);

struct OperatingPoint {
  double tpr = 0.0;
  double threshold = 0.0;
  double fpr = 0.0;
};

// Point with the greatest fpr <= target (highest tpr among equals). No
// interpolation.
OperatingPoint tpr_at_fpr(const RocCurve& curve, double target_fpr);

void write_roc_csv(const RocCurve& curve, std::ostream& out);

struct Summary {
  double mean = 0.0;
  double half_width = 0.0;  // 90% normal-approximation CI
};

inline constexpr double kZ90 = 1.645;

Summary summarize(std::span<const double> values);

struct CvReport {
  std::string model_kind;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<Metrics> folds;
  std::vector<std::pair<std::string, Summary>> summary;  // metric name -> mean/CI, fixed order
  std::array<OperatingPoint, 2> tpr_at{};                // pooled out-of-fold ROC at 1% and 3% FPR

  [[nodiscard]] const Summary& metric(std::string_view name) const;
};

// Named metric columns, in report order.
std::vector<std::string> metric_names();
std::vector<double> metric_values(const Metrics& m);

// Aggregates per-fold metrics into means and 90% half-widths.
std::vector<std::pair<std::string, Summary>> aggregate(std::span<const Metrics> folds);

struct CvResult {
  CvReport report;
  std::vector<double> oof_scores;  // out-of-fold score per example
  RocCurve roc;                    // over the pooled out-of-fold scores
};

// Stratified k-fold. Fold f trains on the other folds with seed
// mix(seed, f). Errors before any training if a fold lacks a class.
CvResult cross_validate(std::span<const LabeledAd> data, models::ModelKind kind,
                        const models::TrainSettings& settings,
                        std::shared_ptr<const text::EmbeddingTable> embeddings, std::size_t k,
                        std::uint64_t seed);

struct AgreementReport {
  double kappa = 0.0;
  double agreement_pct = 0.0;
  double observed = 0.0;  // p_o
  double chance = 0.0;    // p_e
  // [a][b] with index 0 = political, 1 = non_political.
  std::array<std::array<std::size_t, 2>, 2> contingency{};
  std::string band;
  std::size_t items = 0;
};

AgreementReport cohen_kappa(std::span<const Label> a, std::span<const Label> b);

// Landis & Koch: <0 Poor, [0, .20] Slight, (.20, .40] Fair, (.40, .60]
// Moderate, (.60, .80] Substantial, (.80, 1] Almost Perfect.
std::string landis_koch(double kappa);

void to_json(nlohmann::json& j, const Metrics& m);
void to_json(nlohmann::json& j, const CvReport& r);
void to_json(nlohmann::json& j, const AgreementReport& r);
void to_json(nlohmann::json& j, const RocPoint& p);

}  // namespace adaudit::eval
