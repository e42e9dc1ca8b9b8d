#include "adaudit/service.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "adaudit/audit.hpp"
#include "adaudit/corpus.hpp"
#include "adaudit/error.hpp"
#include "adaudit/unicode.hpp"

namespace adaudit::service {

using nlohmann::json;

std::string_view to_string(AnnotationLabel l) {
  switch (l) {
    case AnnotationLabel::political: return "political";
    case AnnotationLabel::non_political: return "non_political";
    case AnnotationLabel::unsure: return "unsure";
  }
  return "unsure";
}

AnnotationLabel parse_annotation(std::string_view s) {
  if (s == "political") return AnnotationLabel::political;
  if (s == "non_political") return AnnotationLabel::non_political;
  if (s == "unsure") return AnnotationLabel::unsure;
  throw DataError("unknown label '" + std::string(s) + "'");
}

namespace {

json event_json(const LabelEvent& ev) {
  return json{{"ad_id", ev.ad_id}, {"annotator", ev.annotator}, {"label", to_string(ev.label)}, {"timestamp", ev.timestamp}};
}

LabelEvent event_from_json(const json& j) {
  return {j.at("ad_id").get<std::string>(), j.at("annotator").get<std::string>(),
          parse_annotation(j.at("label").get<std::string>()), j.value("timestamp", std::string{})};
}

std::string now_utc() {
  return corpus::format_timestamp(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

}  // namespace

LabelJournal::LabelJournal(std::optional<std::string> path) : path_(std::move(path)) {
  if (!path_) return;
  std::ifstream in(*path_);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      apply(event_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError("label journal line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void LabelJournal::apply(LabelEvent ev) {
  auto key = std::make_pair(ev.annotator, ev.ad_id);
  latest_.insert_or_assign(std::move(key), std::move(ev));
}

void LabelJournal::record(LabelEvent ev) {
  if (ev.ad_id.empty() || ev.annotator.empty()) throw DataError("label needs ad_id and annotator");
  std::lock_guard lock(mu_);
  if (path_) {
    std::ofstream out(*path_, std::ios::app);
    out << event_json(ev).dump() << '\n';
    out.flush();
    if (!out) throw DataError("failed to append to label journal " + *path_);
  }
  apply(std::move(ev));
}

std::vector<LabelEvent> LabelJournal::latest(std::optional<std::string_view> annotator) const {
  std::lock_guard lock(mu_);
  std::vector<LabelEvent> out;
  for (const auto& [key, ev] : latest_)
    if (!annotator || key.first == *annotator) out.push_back(ev);
  return out;
}

eval::AgreementReport LabelJournal::agreement(std::string_view a, std::string_view b) const {
  std::vector<Label> la;
  std::vector<Label> lb;
  {
    std::lock_guard lock(mu_);
    for (const auto& [key, ev] : latest_) {
      if (key.first != a || ev.label == AnnotationLabel::unsure) continue;
      auto other = latest_.find({std::string(b), key.second});
      if (other == latest_.end() || other->second.label == AnnotationLabel::unsure) continue;
      la.push_back(ev.label == AnnotationLabel::political ? Label::political : Label::non_political);
      lb.push_back(other->second.label == AnnotationLabel::political ? Label::political : Label::non_political);
    }
  }
  if (la.empty()) throw DataError("annotators share no labeled items");
  return eval::cohen_kappa(la, lb);
}

std::string score_body(const models::Classifier& model, double threshold, std::string_view text) {
  const double p = model.score(text);
  return json{{"probability", p}, {"flagged", p >= threshold}, {"threshold", threshold}, {"model_id", model.model_id()}}
      .dump();
}

std::string agreement_body(const LabelJournal& journal, std::string_view a, std::string_view b) {
  json body = journal.agreement(a, b);
  body["annotators"] = {a, b};
  return body.dump();
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view message) {
  send_json(res, status, json{{"error", message}});
}

std::size_t param_size(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  const auto v = req.get_param_value(key);
  std::size_t out = 0;
  std::istringstream is(v);
  if (!(is >> out) || !is.eof()) throw std::invalid_argument(std::string("bad ") + key);
  return out;
}

constexpr std::size_t kDefaultLimit = 50;

}  // namespace

struct Service::Impl {
  ServiceConfig config;
  httplib::Server server;

  std::optional<corpus::AdStore> collector;
  std::optional<corpus::AdStore> declared;
  std::shared_ptr<const text::EmbeddingTable> embeddings;
  mutable std::mutex model_mu;
  std::shared_ptr<const models::Classifier> model;
  double threshold = 0.5;
  std::unique_ptr<audit::FlagJournal> flags;
  LabelJournal labels;
  std::optional<std::string> report_body;
  std::optional<std::string> roc_body;

  mutable std::mutex ready_mu;
  mutable std::condition_variable ready_cv;

  explicit Impl(ServiceConfig cfg) : config(std::move(cfg)), labels(config.labels_path) {
    if (config.collector_path) collector = corpus::ingest_file(*config.collector_path).store;
    if (config.declared_path) declared = corpus::ingest_file(*config.declared_path).store;
    if (config.embeddings_path)
      embeddings = std::make_shared<const text::EmbeddingTable>(text::load_embeddings_file(*config.embeddings_path).table);
    if (config.model_path) load_model(*config.model_path);
    if (config.calibration_path) threshold = json::parse(read_file(*config.calibration_path)).at("threshold").get<double>();
    if (config.threshold) threshold = *config.threshold;
    if (config.flags_path) flags = std::make_unique<audit::FlagJournal>(*config.flags_path);
    if (config.report_path) report_body = read_file(*config.report_path);
    if (config.roc_path) roc_body = read_file(*config.roc_path);
    routes();
  }

  void load_model(const std::string& path) {
    auto next = std::make_shared<const models::Classifier>(models::load_classifier(path, embeddings));
    std::lock_guard lock(model_mu);
    model = std::move(next);
  }

  std::shared_ptr<const models::Classifier> current_model() const {
    std::lock_guard lock(model_mu);
    return model;
  }

  std::vector<const corpus::AdStore*> stores_for(const httplib::Request& req, httplib::Response& res) const {
    std::vector<const corpus::AdStore*> out;
    const std::string source = req.has_param("source") ? req.get_param_value("source") : "";
    if (source.empty() || source == "collector") {
      if (collector) out.push_back(&*collector);
      else if (!source.empty()) return send_error(res, 503, "collector corpus not loaded"), out;
    }
    if (source.empty() || source == "ad_library") {
      if (declared) out.push_back(&*declared);
      else if (!source.empty()) return send_error(res, 503, "declared corpus not loaded"), out;
    }
    if (!source.empty() && source != "collector" && source != "ad_library") {
      send_error(res, 400, "unknown source");
      return {};
    }
    if (out.empty() && res.status == -1) send_error(res, 503, "no corpus loaded");
    return out;
  }

  void routes() {
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const DataError& e) {
        send_error(res, 400, e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, e.what());
      } catch (const std::invalid_argument& e) {
        send_error(res, 400, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    });

    server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      const auto m = current_model();
      send_json(res, 200,
                json{{"status", "ok"},
                     {"version", kVersion},
                     {"collector", collector ? json(collector->size()) : json(nullptr)},
                     {"declared", declared ? json(declared->size()) : json(nullptr)},
                     {"model", m ? json(m->model_id()) : json(nullptr)},
                     {"threshold", threshold},
                     {"flags", flags ? json(flags->flags().size()) : json(nullptr)}});
    });

    server.Get("/ads", [this](const httplib::Request& req, httplib::Response& res) {
      const auto stores = stores_for(req, res);
      if (stores.empty()) return;
      const std::string query = req.has_param("query") ? unicode::normalize_text(req.get_param_value("query")) : "";
      std::optional<corpus::Date> from;
      std::optional<corpus::Date> to;
      if (req.has_param("from")) from = corpus::parse_date(req.get_param_value("from"));
      if (req.has_param("to")) to = corpus::parse_date(req.get_param_value("to"));
      const auto limit = param_size(req, "limit", kDefaultLimit);
      const auto offset = param_size(req, "offset", 0);
      json items = json::array();
      std::size_t total = 0;
      for (const auto* store : stores) {
        for (const auto& ad : *store) {
          const auto day = std::chrono::floor<std::chrono::days>(ad.first_seen);
          if (from && day < std::chrono::sys_days{*from}) continue;
          if (to && day > std::chrono::sys_days{*to}) continue;
          if (!query.empty() && unicode::normalize_text(ad.text).find(query) == std::string::npos) continue;
          if (total >= offset && items.size() < limit) items.push_back(ad);
          ++total;
        }
      }
      send_json(res, 200, json{{"total", total}, {"offset", offset}, {"limit", limit}, {"items", items}});
    });

    server.Get(R"(/ads/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      if (!collector && !declared) return send_error(res, 503, "no corpus loaded");
      const std::string id = req.matches[1];
      for (const auto* store : {collector ? &*collector : nullptr, declared ? &*declared : nullptr}) {
        if (!store) continue;
        if (const auto* ad = store->find(id)) return send_json(res, 200, json(*ad));
      }
      send_error(res, 404, "no ad " + id);
    });

    server.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
      const auto m = current_model();
      if (!m) return send_error(res, 409, "no model loaded");
      const auto body = json::parse(req.body);
      res.status = 200;
      res.set_content(score_body(*m, threshold, body.at("text").get<std::string>()), "application/json");
    });

    server.Get("/flags", [this](const httplib::Request& req, httplib::Response& res) {
      if (!flags) return send_error(res, 503, "no flag journal loaded");
      std::optional<audit::Verdict> want;
      if (req.has_param("verdict")) want = audit::parse_verdict(req.get_param_value("verdict"));
      const auto limit = param_size(req, "limit", kDefaultLimit);
      const auto offset = param_size(req, "offset", 0);
      json items = json::array();
      std::size_t total = 0;
      std::map<std::string, std::size_t> counts{{"unreviewed", 0}, {"political", 0}, {"non_political", 0}, {"unsure", 0}};
      for (const auto& f : flags->flags()) {
        ++counts[std::string(audit::to_string(f.verdict))];
        if (want && f.verdict != *want) continue;
        if (total >= offset && items.size() < limit) items.push_back(f);
        ++total;
      }
      send_json(res, 200,
                json{{"total", total}, {"offset", offset}, {"limit", limit}, {"counts", counts}, {"items", items}});
    });

    server.Post(R"(/flags/([^/]+)/verdict)", [this](const httplib::Request& req, httplib::Response& res) {
      if (!flags) return send_error(res, 503, "no flag journal loaded");
      const std::string id = req.matches[1];
      const auto body = json::parse(req.body);
      const auto verdict = audit::parse_verdict(body.at("verdict").get<std::string>());
      const auto reviewer = body.at("reviewer").get<std::string>();
      if (!flags->find(id)) return send_error(res, 404, "no flag for ad " + id);
      send_json(res, 200, json(flags->set_verdict(id, verdict, reviewer, now_utc())));
    });

    server.Post("/labels", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body);
      LabelEvent ev{body.at("ad_id").get<std::string>(), body.at("annotator").get<std::string>(),
                    parse_annotation(body.at("label").get<std::string>()), now_utc()};
      labels.record(ev);
      send_json(res, 201, event_json(ev));
    });

    server.Get("/labels", [this](const httplib::Request& req, httplib::Response& res) {
      std::optional<std::string> who;
      if (req.has_param("annotator")) who = req.get_param_value("annotator");
      json items = json::array();
      for (const auto& ev : labels.latest(who ? std::optional<std::string_view>(*who) : std::nullopt))
        items.push_back(event_json(ev));
      send_json(res, 200, json{{"items", items}});
    });

    server.Get("/agreement", [this](const httplib::Request& req, httplib::Response& res) {
      const auto raw = req.has_param("annotators") ? req.get_param_value("annotators") : "";
      const auto comma = raw.find(',');
      if (comma == std::string::npos || raw.find(',', comma + 1) != std::string::npos)
        return send_error(res, 400, "annotators must be 'a,b'");
      const auto a = raw.substr(0, comma);
      const auto b = raw.substr(comma + 1);
      if (a.empty() || b.empty()) return send_error(res, 400, "annotators must be 'a,b'");
      try {
        res.set_content(agreement_body(labels, a, b), "application/json");
        res.status = 200;
      } catch (const DataError& e) {
        send_error(res, 422, e.what());
      }
    });

    server.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
      if (!report_body) return send_error(res, 404, "no evaluation report loaded");
      res.status = 200;
      res.set_content(*report_body, "application/json");
    });

    server.Get("/roc", [this](const httplib::Request&, httplib::Response& res) {
      if (!roc_body) return send_error(res, 404, "no ROC curve loaded");
      res.status = 200;
      res.set_content(*roc_body, "text/csv");
    });
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() { stop(); }

void Service::listen() {
  if (!impl_->server.listen(impl_->config.host, impl_->config.port))
    throw DataError("cannot listen on " + impl_->config.host + ":" + std::to_string(impl_->config.port));
}

int Service::bind_ephemeral() {
  const int port = impl_->server.bind_to_any_port(impl_->config.host);
  if (port < 0) throw DataError("cannot bind " + impl_->config.host);
  return port;
}

void Service::listen_after_bind() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_) impl_->server.stop();
}

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

void Service::set_model(const std::string& model_path) { impl_->load_model(model_path); }

}  // namespace adaudit::service
