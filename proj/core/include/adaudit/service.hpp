#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adaudit/eval.hpp"
#include "adaudit/models/classifier.hpp"

namespace adaudit::service {

inline constexpr std::string_view kVersion = "0.3.0";

enum class AnnotationLabel { political, non_political, unsure };
std::string_view to_string(AnnotationLabel l);
AnnotationLabel parse_annotation(std::string_view s);

struct LabelEvent {
  std::string ad_id;
  std::string annotator;
  AnnotationLabel label = AnnotationLabel::unsure;
  std::string timestamp;
};

// Append-only JSONL; the latest event per (ad, annotator) wins.
class LabelJournal {
 public:
  explicit LabelJournal(std::optional<std::string> path);

  void record(LabelEvent ev);
  [[nodiscard]] std::vector<LabelEvent> latest(std::optional<std::string_view> annotator) const;
  // Pairs of political/non-political labels on ads both annotators labeled;
  // "unsure" items are left out.
  [[nodiscard]] eval::AgreementReport agreement(std::string_view a, std::string_view b) const;

 private:
  void apply(LabelEvent ev);

  std::optional<std::string> path_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, LabelEvent> latest_;  // (annotator, ad)
};

// JSON body shared by POST /score and `adaudit score --text`:
// {"flagged":bool,"model_id":str,"probability":p,"threshold":t}
std::string score_body(const models::Classifier& model, double threshold, std::string_view text);

// Body of GET /agreement and `adaudit kappa --journal`.
std::string agreement_body(const LabelJournal& journal, std::string_view a, std::string_view b);

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::string> collector_path;
  std::optional<std::string> declared_path;
  std::optional<std::string> model_path;
  std::optional<std::string> embeddings_path;
  std::optional<double> threshold;
  std::optional<std::string> calibration_path;  // CalibratedThreshold JSON
  std::optional<std::string> flags_path;
  std::optional<std::string> labels_path;
  std::optional<std::string> report_path;       // CvReport JSON
  std::optional<std::string> roc_path;          // ROC CSV
};

class Service {
 public:
  // Loads everything named in the config; unreadable data throws.
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Blocks until stop().
  void listen();
  // Binds an ephemeral port on config.host and returns it; then call
  // listen_after_bind() (typically from another thread).
  int bind_ephemeral();
  void listen_after_bind();
  void stop();
  void wait_until_ready() const;

  // Model swap is atomic for readers.
  void set_model(const std::string& model_path);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace adaudit::service
