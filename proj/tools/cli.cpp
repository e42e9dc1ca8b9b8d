#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "adaudit/audit.hpp"
#include "adaudit/corpus.hpp"
#include "adaudit/error.hpp"
#include "adaudit/eval.hpp"
#include "adaudit/label.hpp"
#include "adaudit/models/classifier.hpp"
#include "adaudit/service.hpp"
#include "adaudit/synthetic.hpp"

namespace adaudit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  bool json_out = false;
  std::string data_dir;
};

std::string resolve(const Globals& g, const std::string& path) {
  if (g.data_dir.empty() || path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(g.data_dir) / path).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& body) {
  auto out = open_out(path);
  out << body;
  if (!out.flush()) throw DataError("cannot write " + path);
}

void table(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& rows) {
  std::size_t w = 0;
  for (const auto& [k, v] : rows) w = std::max(w, k.size());
  for (const auto& [k, v] : rows) out << std::left << std::setw(static_cast<int>(w) + 2) << k << v << '\n';
}

template <class T>
std::string str(const T& v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

std::shared_ptr<const text::EmbeddingTable> maybe_embeddings(const Globals& g, const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_shared<const text::EmbeddingTable>(text::load_embeddings_file(resolve(g, path)).table);
}

// Options shared by train / evaluate / calibrate.
struct TrainOpts {
  std::string data;
  std::string kind = "mnb";
  std::string embeddings;
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch;
  std::optional<double> lr;
  std::optional<double> l2;
  std::optional<std::size_t> hash_dims;
  std::optional<double> alpha;
  std::optional<std::size_t> filters;
  std::optional<std::size_t> hidden;
  bool no_grid = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--data", data, "Labeled ads (JSONL)")->required();
    cmd->add_option("--model", kind, "Model kind: mnb, logreg or cnn")->capture_default_str();
    cmd->add_option("--embeddings", embeddings, "word2vec text embeddings (logreg, cnn)");
    cmd->add_option("--seed", seed, "Seed for every randomized step")->required();
    cmd->add_option("--epochs", epochs, "Training epochs (logreg: gradient steps)");
    cmd->add_option("--batch-size", batch, "CNN minibatch size");
    cmd->add_option("--lr", lr, "Learning rate");
    cmd->add_option("--l2", l2, "L2 penalty (logreg)");
    cmd->add_option("--hash-dims", hash_dims, "Hashed feature dimensions (mnb)");
    cmd->add_option("--alpha", alpha, "Additive smoothing (mnb)");
    cmd->add_option("--filters", filters, "CNN filters per width");
    cmd->add_option("--hidden", hidden, "CNN hidden units");
    cmd->add_flag("--no-grid", no_grid, "Skip the logreg learning-rate/L2 grid search");
  }

  [[nodiscard]] models::ModelKind model_kind() const {
    try {
      return models::parse_model_kind(kind);
    } catch (const std::exception&) {
      throw UsageError("unknown model kind '" + kind + "'");
    }
  }

  [[nodiscard]] models::TrainSettings settings() const {
    auto s = models::default_settings(model_kind());
    s.train.seed = seed;
    if (epochs) s.train.epochs = *epochs;
    if (batch) s.train.batch_size = *batch;
    if (lr) s.train.lr = *lr;
    if (l2) s.train.l2 = *l2;
    if (no_grid || lr || l2) s.train.grid.reset();
    if (hash_dims) s.hash_dims = *hash_dims;
    if (alpha) s.alpha = *alpha;
    if (filters) s.cnn.filters_per_width = *filters;
    if (hidden) s.cnn.hidden = *hidden;
    return s;
  }

  [[nodiscard]] std::shared_ptr<const text::EmbeddingTable> table(const Globals& g) const {
    if (model_kind() != models::ModelKind::mnb && embeddings.empty())
      throw UsageError("--embeddings is required for " + kind);
    return maybe_embeddings(g, embeddings);
  }
};

double threshold_from(const Globals& g, const std::optional<double>& threshold, const std::string& calibration) {
  if (threshold && !calibration.empty()) throw UsageError("use either --threshold or --calibration");
  if (threshold) return *threshold;
  if (!calibration.empty()) return json::parse(read_text(resolve(g, calibration))).at("threshold").get<double>();
  return 0.5;
}

void print_ingest(std::ostream& out, const Globals& g, const corpus::IngestResult& r, std::size_t written) {
  if (g.json_out) {
    json errors = json::array();
    for (const auto& e : r.errors) errors.push_back({{"line", e.line_no}, {"reason", e.reason}});
    out << json{{"records", written}, {"skipped", r.skipped}, {"errors", errors}}.dump() << '\n';
    return;
  }
  table(out, {{"records", str(written)}, {"skipped", str(r.skipped)}});
  for (const auto& e : r.errors) out << "  line " << e.line_no << ": " << e.reason << '\n';
}

std::vector<audit::CrawlSnapshot> read_snapshots(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<audit::CrawlSnapshot> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = json::parse(line);
    audit::CrawlSnapshot s;
    s.taken_at = j.value("taken_at", std::string{});
    for (const auto& id : j.at("ids")) {
      if (!s.ids.insert(id.get<std::string>()).second)
        throw DataError("duplicate id " + id.get<std::string>() + " in snapshot " + s.taken_at);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Globals g;
  CLI::App app{"Political ad auditing toolkit: ingest, classify, evaluate and audit ad corpora.", "adaudit"};
  app.set_version_flag("--version", std::string(service::kVersion));
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--json", g.json_out, "Machine-readable JSON on stdout");
  app.add_option("--data-dir", g.data_dir, "Base directory for relative paths")->envname("ADAUDIT_DATA_DIR");
  app.footer("Exit codes: 0 ok, 1 usage error, 2 data error.\n"
             "Relative paths resolve against --data-dir / $ADAUDIT_DATA_DIR when set.");

  std::function<void()> action;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse JSONL ads, skipping malformed lines, and write a clean store");
  std::vector<std::string> ingest_in;
  std::string ingest_out;
  ingest->add_option("--input", ingest_in, "Input JSONL (repeatable; later files win on id)")->required();
  ingest->add_option("--output", ingest_out, "Clean JSONL store");
  ingest->callback([&] {
    action = [&] {
      corpus::IngestResult all;
      for (const auto& p : ingest_in) {
        auto r = corpus::ingest_file(resolve(g, p));
        for (const auto& ad : r.store) all.store.upsert(ad);
        all.skipped += r.skipped;
        all.errors.insert(all.errors.end(), r.errors.begin(), r.errors.end());
      }
      if (!ingest_out.empty()) corpus::write_file(all.store, resolve(g, ingest_out));
      print_ingest(out, g, all, all.store.size());
    };
  });

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "Write a seeded synthetic dataset with ground truth");
  synthetic::GeneratorConfig gen_cfg;
  std::string gen_out;
  gen->add_option("--output", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_cfg.seed, "Generator seed")->required();
  gen->add_option("--labeled", gen_cfg.labeled, "Labeled ads")->capture_default_str();
  gen->add_option("--corpus", gen_cfg.corpus, "Unlabeled corpus rows")->capture_default_str();
  gen->add_option("--political-rate", gen_cfg.political_rate, "Planted political rate")->capture_default_str();
  gen->add_option("--declared", gen_cfg.declared, "Ad Library rows")->capture_default_str();
  gen->add_option("--embed-dim", gen_cfg.embed_dim, "Embedding dimension")->capture_default_str();
  gen->add_option("--hard-rate", gen_cfg.hard_rate, "Share of captions mixing both topic vocabularies")
      ->capture_default_str();
  gen->callback([&] {
    action = [&] {
      const auto data = synthetic::generate(gen_cfg);
      synthetic::write_dataset(data, resolve(g, gen_out));
      if (g.json_out) {
        out << json(data.summary).dump() << '\n';
      } else {
        table(out, {{"labeled", str(data.labeled.size())},
                    {"corpus rows", str(data.summary.rows)},
                    {"caption groups", str(data.summary.groups)},
                    {"in-scope groups", str(data.summary.in_scope_groups)},
                    {"in-scope political groups", str(data.summary.in_scope_political_groups)},
                    {"declared", str(data.declared.size())}});
      }
    };
  });

  // dedup
  auto* dedup = app.add_subcommand("dedup", "Keep one ad per normalized caption (earliest first_seen)");
  std::string dedup_in;
  std::string dedup_out;
  dedup->add_option("--input", dedup_in, "Input JSONL")->required();
  dedup->add_option("--output", dedup_out, "Deduplicated JSONL");
  dedup->callback([&] {
    action = [&] {
      const auto r = corpus::ingest_file(resolve(g, dedup_in));
      const auto kept = corpus::dedup_by_caption(r.store);
      if (!dedup_out.empty()) corpus::write_file(kept, resolve(g, dedup_out));
      if (g.json_out)
        out << json{{"input", r.store.size()}, {"survivors", kept.size()}, {"skipped", r.skipped}}.dump() << '\n';
      else
        table(out, {{"input", str(r.store.size())}, {"survivors", str(kept.size())}, {"skipped", str(r.skipped)}});
    };
  });

  // filter
  auto* filter = app.add_subcommand("filter", "Filter a store by language and first_seen date");
  std::string filter_in;
  std::string filter_out;
  std::string filter_lang;
  std::string filter_from;
  std::string filter_to;
  bool filter_electoral = false;
  filter->add_option("--input", filter_in, "Input JSONL")->required();
  filter->add_option("--output", filter_out, "Filtered JSONL");
  filter->add_option("--language", filter_lang, "Keep this language (pt, en, es)");
  filter->add_option("--from", filter_from, "First day, YYYY-MM-DD");
  filter->add_option("--to", filter_to, "Last day, YYYY-MM-DD");
  filter->add_flag("--electoral-2018", filter_electoral, "Use the 2018 Brazilian electoral period");
  filter->callback([&] {
    action = [&] {
      if (filter_electoral && (!filter_from.empty() || !filter_to.empty()))
        throw UsageError("--electoral-2018 excludes --from/--to");
      if (filter_from.empty() != filter_to.empty()) throw UsageError("--from and --to go together");
      const auto r = corpus::ingest_file(resolve(g, filter_in));
      auto store = r.store;
      if (filter_electoral) store = corpus::filter_period(store, corpus::electoral_period_2018());
      if (!filter_from.empty())
        store = corpus::filter_period(store, {corpus::parse_date(filter_from), corpus::parse_date(filter_to)});
      if (!filter_lang.empty()) store = corpus::filter_language(store, filter_lang);
      if (!filter_out.empty()) corpus::write_file(store, resolve(g, filter_out));
      if (g.json_out)
        out << json{{"input", r.store.size()}, {"kept", store.size()}}.dump() << '\n';
      else
        table(out, {{"input", str(r.store.size())}, {"kept", str(store.size())}});
    };
  });

  // train
  auto* train = app.add_subcommand("train", "Train a classifier on labeled ads and save it");
  TrainOpts train_opts;
  std::string train_out;
  std::optional<double> holdout;
  std::string holdout_out;
  train_opts.add(train);
  train->add_option("--output", train_out, "Model file")->required();
  train->add_option("--holdout", holdout, "Hold out this stratified fraction for calibration");
  train->add_option("--holdout-output", holdout_out, "Where the held-out labeled ads go (JSONL)");
  train->callback([&] {
    action = [&] {
      auto data = read_labeled_file(resolve(g, train_opts.data));
      if (holdout.has_value() != !holdout_out.empty()) throw UsageError("--holdout and --holdout-output go together");
      if (holdout) {
        if (!(*holdout > 0.0 && *holdout < 1.0)) throw UsageError("--holdout must be in (0,1)");
        std::vector<Label> labels;
        for (const auto& d : data) labels.push_back(d.label);
        const auto split = eval::stratified_holdout(labels, *holdout, train_opts.seed);
        LabeledDataset kept;
        LabeledDataset held;
        for (const auto i : split.train) kept.push_back(data[i]);
        for (const auto i : split.holdout) held.push_back(data[i]);
        auto f = open_out(resolve(g, holdout_out));
        write_labeled(held, f);
        data = std::move(kept);
      }
      const auto table_ = train_opts.table(g);
      const auto clf = models::train_classifier(train_opts.model_kind(), data, train_opts.settings(), table_);
      models::save_model_file(clf.bundle(), resolve(g, train_out));
      if (g.json_out)
        out << json{{"model_id", clf.model_id()}, {"kind", models::to_string(clf.kind())}, {"examples", data.size()}}
                   .dump()
            << '\n';
      else
        table(out, {{"model_id", clf.model_id()}, {"examples", str(data.size())}});
    };
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Stratified k-fold cross-validation; prints a CvReport");
  TrainOpts eval_opts;
  std::size_t folds = 10;
  std::string eval_out;
  std::string eval_roc;
  std::string eval_scores;
  eval_opts.add(evaluate);
  evaluate->add_option("--folds", folds, "Number of folds")->capture_default_str();
  evaluate->add_option("--output", eval_out, "Write the CvReport JSON here");
  evaluate->add_option("--roc", eval_roc, "Write the pooled out-of-fold ROC curve as CSV");
  evaluate->add_option("--scores", eval_scores, "Write out-of-fold scores as CSV (id,label,score)");
  evaluate->callback([&] {
    action = [&] {
      const auto data = read_labeled_file(resolve(g, eval_opts.data));
      const auto table_ = eval_opts.table(g);
      const auto cv = eval::cross_validate(data, eval_opts.model_kind(), eval_opts.settings(), table_, folds,
                                           eval_opts.seed);
      const auto body = json(cv.report).dump();
      if (!eval_out.empty()) write_text(resolve(g, eval_out), body);
      if (!eval_roc.empty()) {
        auto f = open_out(resolve(g, eval_roc));
        eval::write_roc_csv(cv.roc, f);
      }
      if (!eval_scores.empty()) {
        auto f = open_out(resolve(g, eval_scores));
        f << "id,label,score\n" << std::setprecision(17);
        for (std::size_t i = 0; i < data.size(); ++i)
          f << data[i].ad.id << ',' << to_string(data[i].label) << ',' << cv.oof_scores[i] << '\n';
      }
      if (g.json_out) {
        out << body << '\n';
        return;
      }
      out << cv.report.model_kind << ", " << cv.report.k << " folds, seed " << cv.report.seed << '\n';
      std::vector<std::pair<std::string, std::string>> rows;
      for (const auto& [name, s] : cv.report.summary) {
        std::ostringstream v;
        v << std::fixed << std::setprecision(4) << s.mean << " +/- " << s.half_width;
        rows.emplace_back(name, v.str());
      }
      for (const auto& p : cv.report.tpr_at) {
        std::ostringstream k;
        k << "tpr@fpr " << p.fpr;
        std::ostringstream v;
        v << std::fixed << std::setprecision(4) << p.tpr << " (threshold " << p.threshold << ")";
        rows.emplace_back(k.str(), v.str());
      }
      table(out, rows);
    };
  });

  // calibrate
  auto* calibrate = app.add_subcommand(
      "calibrate", "Pick the smallest threshold whose false positive rate is within the target");
  double target_fpr = 0.01;
  std::string cal_scores;
  std::string cal_data;
  std::string cal_kind = "mnb";
  std::string cal_embeddings;
  std::optional<std::uint64_t> cal_seed;
  std::size_t cal_folds = 10;
  std::string cal_out;
  calibrate->add_option("--target-fpr", target_fpr, "Target false positive rate in (0,1)")->capture_default_str();
  calibrate->add_option("--scores", cal_scores, "CSV of score,label rows (header optional)");
  std::string cal_model_file;
  calibrate->add_option("--data", cal_data, "Labeled ads: a holdout with --model-file, else out-of-fold scores");
  calibrate->add_option("--model-file", cal_model_file, "Deployed model to score the --data holdout with");
  calibrate->add_option("--model", cal_kind, "Model kind for out-of-fold calibration")->capture_default_str();
  calibrate->add_option("--embeddings", cal_embeddings, "Embeddings for --data with logreg/cnn");
  calibrate->add_option("--seed", cal_seed, "Cross-validation seed (required with --data)");
  calibrate->add_option("--folds", cal_folds, "Folds for --data")->capture_default_str();
  calibrate->add_option("--output", cal_out, "Write the calibration JSON here");
  calibrate->callback([&] {
    action = [&] {
      if (cal_scores.empty() == cal_data.empty()) throw UsageError("give exactly one of --scores or --data");
      if (!(target_fpr > 0.0 && target_fpr < 1.0)) throw UsageError("--target-fpr must be in (0,1)");
      std::vector<double> scores;
      std::vector<Label> labels;
      std::optional<audit::CalibratedThreshold> direct;
      if (!cal_scores.empty()) {
        std::ifstream in(resolve(g, cal_scores));
        if (!in) throw DataError("cannot open " + cal_scores);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
          ++line_no;
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (line.empty() || (line_no == 1 && line.rfind("score", 0) == 0)) continue;
          const auto comma = line.find(',');
          if (comma == std::string::npos) throw DataError("line " + str(line_no) + ": expected score,label");
          try {
            std::size_t used = 0;
            scores.push_back(std::stod(line.substr(0, comma), &used));
            if (used != comma) throw DataError("trailing characters");
          } catch (const std::exception&) {
            throw DataError("line " + str(line_no) + ": bad score");
          }
          labels.push_back(parse_label(line.substr(comma + 1)));
        }
      } else if (!cal_model_file.empty()) {
        const auto clf = models::load_classifier(resolve(g, cal_model_file), maybe_embeddings(g, cal_embeddings));
        direct = audit::calibrate_model(clf, read_labeled_file(resolve(g, cal_data)), target_fpr);
      } else {
        if (!cal_seed) throw UsageError("--seed is required with --data");
        TrainOpts t;
        t.kind = cal_kind;
        t.embeddings = cal_embeddings;
        t.seed = *cal_seed;
        const auto data = read_labeled_file(resolve(g, cal_data));
        const auto cv = eval::cross_validate(data, t.model_kind(), t.settings(), t.table(g), cal_folds, *cal_seed);
        scores = cv.oof_scores;
        for (const auto& d : data) labels.push_back(d.label);
      }
      const auto cal = direct ? *direct : audit::calibrate_threshold(scores, labels, target_fpr);
      const auto body = json(cal).dump();
      if (!cal_out.empty()) write_text(resolve(g, cal_out), body);
      if (g.json_out) {
        out << body << '\n';
        return;
      }
      table(out, {{"threshold", str(cal.threshold)},
                  {"achieved fpr", str(cal.achieved_fpr)},
                  {"achieved tpr", str(cal.achieved_tpr)},
                  {"scores", str(cal.calibration_size)}});
    };
  });

  // score
  auto* score = app.add_subcommand("score", "Score a text or every ad in a store");
  std::string score_model;
  std::string score_emb;
  std::optional<std::string> score_text;
  std::string score_in;
  std::string score_out;
  std::optional<double> score_threshold;
  std::string score_cal;
  score->add_option("--model-file", score_model, "Trained model")->required();
  score->add_option("--embeddings", score_emb, "Embeddings the model was trained with");
  score->add_option("--text", score_text, "Score one text; prints the same JSON as POST /score");
  score->add_option("--input", score_in, "Score every ad in this JSONL store");
  score->add_option("--output", score_out, "JSONL output for --input (default stdout)");
  score->add_option("--threshold", score_threshold, "Flag threshold");
  score->add_option("--calibration", score_cal, "Calibration JSON supplying the threshold");
  score->callback([&] {
    action = [&] {
      if (score_text.has_value() == !score_in.empty()) throw UsageError("give exactly one of --text or --input");
      const auto clf = models::load_classifier(resolve(g, score_model), maybe_embeddings(g, score_emb));
      const double t = threshold_from(g, score_threshold, score_cal);
      if (score_text) {
        out << service::score_body(clf, t, *score_text) << '\n';
        return;
      }
      const auto r = corpus::ingest_file(resolve(g, score_in));
      std::ofstream file;
      if (!score_out.empty()) file = open_out(resolve(g, score_out));
      std::ostream& dst = score_out.empty() ? out : file;
      for (const auto& ad : r.store) {
        const double p = clf.score(ad.text);
        dst << json{{"id", ad.id}, {"probability", p}, {"flagged", p >= t}}.dump() << '\n';
      }
    };
  });

  // audit
  auto* audit_cmd = app.add_subcommand("audit", "Flag political ads in a collected corpus and audit them");
  std::string audit_corpus;
  std::string audit_declared;
  std::string audit_model;
  std::string audit_emb;
  std::optional<double> audit_threshold;
  std::string audit_cal;
  std::string audit_period = "electoral-2018";
  std::string audit_lang = "pt";
  bool strict_cnpj = false;
  std::string audit_out;
  std::string audit_flags;
  audit_cmd->add_option("--corpus", audit_corpus, "Collected ads (JSONL)")->required();
  audit_cmd->add_option("--declared", audit_declared, "Ad Library ads (JSONL)")->required();
  audit_cmd->add_option("--model-file", audit_model, "Trained model")->required();
  audit_cmd->add_option("--embeddings", audit_emb, "Embeddings the model was trained with");
  audit_cmd->add_option("--threshold", audit_threshold, "Flag threshold");
  audit_cmd->add_option("--calibration", audit_cal, "Calibration JSON supplying the threshold");
  audit_cmd->add_option("--period", audit_period, "electoral-2018, none, or FROM:TO dates")->capture_default_str();
  audit_cmd->add_option("--language", audit_lang, "Language to keep; 'any' keeps all")->capture_default_str();
  audit_cmd->add_flag("--strict-cnpj", strict_cnpj, "Require the 4-digit CNPJ branch field");
  audit_cmd->add_option("--output", audit_out, "Write the AuditReport JSON here");
  audit_cmd->add_option("--flags-out", audit_flags, "Write a fresh flags journal (JSONL) here");
  audit_cmd->callback([&] {
    action = [&] {
      audit::AuditOptions opts;
      opts.threshold = threshold_from(g, audit_threshold, audit_cal);
      opts.language = audit_lang == "any" ? "" : audit_lang;
      opts.disclaimer.strict_cnpj = strict_cnpj;
      if (audit_period == "electoral-2018") {
        opts.period = corpus::electoral_period_2018();
      } else if (audit_period != "none") {
        const auto colon = audit_period.find(':');
        if (colon == std::string::npos) throw UsageError("--period must be electoral-2018, none or FROM:TO");
        opts.period = corpus::PeriodFilter(corpus::parse_date(audit_period.substr(0, colon)),
                                           corpus::parse_date(audit_period.substr(colon + 1)));
      }
      const auto clf = models::load_classifier(resolve(g, audit_model), maybe_embeddings(g, audit_emb));
      const auto collected = corpus::ingest_file(resolve(g, audit_corpus)).store;
      const auto declared = corpus::ingest_file(resolve(g, audit_declared)).store;
      const auto report = audit::run_audit(clf, collected, declared, opts);
      const auto body = json(report).dump();
      if (!audit_out.empty()) write_text(resolve(g, audit_out), body);
      if (!audit_flags.empty()) audit::write_flag_journal(report.flags, resolve(g, audit_flags));
      if (g.json_out) {
        out << body << '\n';
        return;
      }
      table(out, {{"model", report.model_id},
                  {"threshold", str(report.threshold)},
                  {"input ads", str(report.counts.input)},
                  {"in period", str(report.counts.after_period)},
                  {"language", str(report.counts.after_language)},
                  {"unique captions", str(report.counts.after_dedup)},
                  {"flagged", str(report.flagged_count)},
                  {"matched declared", str(report.matched_declared.size())},
                  {"with keyword", str(report.compliance.with_keyword)},
                  {"compliant", str(report.compliance.compliant)},
                  {"compliant advertisers", str(report.compliance.compliant_advertisers)},
                  {"advertisers", str(report.advertisers.size())}});
    };
  });

  // kappa
  auto* kappa = app.add_subcommand("kappa", "Cohen's kappa between two annotators");
  std::string kappa_a;
  std::string kappa_b;
  std::string kappa_journal;
  std::string kappa_pair;
  kappa->add_option("-a,--a", kappa_a, "Labeled JSONL of annotator A");
  kappa->add_option("-b,--b", kappa_b, "Labeled JSONL of annotator B");
  kappa->add_option("--journal", kappa_journal, "Label journal (JSONL events)");
  kappa->add_option("--annotators", kappa_pair, "a,b for --journal");
  kappa->callback([&] {
    action = [&] {
      std::string body;
      if (!kappa_journal.empty()) {
        const auto comma = kappa_pair.find(',');
        if (comma == std::string::npos) throw UsageError("--annotators a,b is required with --journal");
        const service::LabelJournal journal(resolve(g, kappa_journal));
        body = service::agreement_body(journal, kappa_pair.substr(0, comma), kappa_pair.substr(comma + 1));
      } else {
        if (kappa_a.empty() || kappa_b.empty()) throw UsageError("give --a and --b, or --journal");
        const auto a = read_labeled_file(resolve(g, kappa_a));
        const auto b = read_labeled_file(resolve(g, kappa_b));
        std::map<std::string, Label> by_id;
        for (const auto& x : b) by_id[x.ad.id] = x.label;
        std::vector<Label> la;
        std::vector<Label> lb;
        for (const auto& x : a) {
          const auto it = by_id.find(x.ad.id);
          if (it == by_id.end()) continue;
          la.push_back(x.label);
          lb.push_back(it->second);
        }
        if (la.empty()) throw DataError("annotators share no labeled items");
        body = json(eval::cohen_kappa(la, lb)).dump();
      }
      if (g.json_out) {
        out << body << '\n';
        return;
      }
      const auto j = json::parse(body);
      std::ostringstream k;
      k << std::fixed << std::setprecision(4) << j.at("kappa").get<double>();
      std::ostringstream pct;
      pct << std::fixed << std::setprecision(2) << j.at("agreement_pct").get<double>() << '%';
      table(out, {{"items", str(j.at("items").get<std::size_t>())},
                  {"agreement", pct.str()},
                  {"kappa", k.str()},
                  {"band", j.at("band").get<std::string>()}});
    };
  });

  // coverage
  auto* coverage = app.add_subcommand("coverage", "Crawl growth per snapshot and probe-based missed-ad estimate");
  std::string cov_snapshots;
  std::string cov_base;
  std::string cov_probes;
  coverage->add_option("--snapshots", cov_snapshots, "JSONL of {taken_at, ids} in crawl order");
  coverage->add_option("--base", cov_base, "JSON {ids} of the base collection");
  coverage->add_option("--probes", cov_probes, "JSONL of {ids} per probe search");
  coverage->callback([&] {
    action = [&] {
      if (cov_snapshots.empty() && cov_probes.empty()) throw UsageError("give --snapshots and/or --base with --probes");
      if (cov_base.empty() != cov_probes.empty()) throw UsageError("--base and --probes go together");
      json body = json::object();
      if (!cov_snapshots.empty())
        body["coverage"] = audit::coverage_stats(read_snapshots(resolve(g, cov_snapshots)));
      if (!cov_probes.empty()) {
        std::set<std::string> base;
        for (const auto& id : json::parse(read_text(resolve(g, cov_base))).at("ids")) base.insert(id.get<std::string>());
        std::vector<std::set<std::string>> probes;
        for (auto& s : read_snapshots(resolve(g, cov_probes))) probes.push_back(std::move(s.ids));
        body["probes"] = audit::probe_estimate(base, probes);
      }
      if (g.json_out) {
        out << body.dump() << '\n';
        return;
      }
      std::vector<std::pair<std::string, std::string>> rows;
      if (body.contains("coverage")) {
        const auto& c = body["coverage"];
        const auto growth = c.at("growth").get<std::vector<double>>();
        for (std::size_t i = 0; i < growth.size(); ++i) {
          std::ostringstream v;
          v << std::fixed << std::setprecision(2) << 100.0 * growth[i] << '%';
          rows.emplace_back("crawl " + str(i + 2), v.str());
        }
        std::ostringstream m;
        m << std::fixed << std::setprecision(2) << 100.0 * c.at("mean_growth").get<double>() << '%';
        rows.emplace_back("mean growth", m.str());
      }
      if (body.contains("probes")) {
        const auto& p = body["probes"];
        std::ostringstream t;
        t << std::fixed << std::setprecision(2) << 100.0 * p.at("total_fraction").get<double>() << '%';
        std::ostringstream a;
        a << std::fixed << std::setprecision(4) << 100.0 * p.at("per_probe_fraction").get<double>() << '%';
        rows.emplace_back("probe new ids", str(p.at("new_ids").get<std::size_t>()));
        rows.emplace_back("probe total", t.str());
        rows.emplace_back("per probe", a.str());
      }
      table(out, rows);
    };
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  service::ServiceConfig svc;
  std::string svc_collector;
  std::string svc_declared;
  std::string svc_model;
  std::string svc_emb;
  std::string svc_cal;
  std::string svc_flags;
  std::string svc_labels;
  std::string svc_report;
  std::string svc_roc;
  serve->add_option("--host", svc.host, "Bind address")->capture_default_str();
  serve->add_option("--port", svc.port, "Port")->capture_default_str();
  serve->add_option("--collector", svc_collector, "Collected ads (JSONL)");
  serve->add_option("--declared", svc_declared, "Ad Library ads (JSONL)");
  serve->add_option("--model-file", svc_model, "Trained model");
  serve->add_option("--embeddings", svc_emb, "Embeddings for the model");
  serve->add_option("--threshold", svc.threshold, "Flag threshold");
  serve->add_option("--calibration", svc_cal, "Calibration JSON supplying the threshold");
  serve->add_option("--flags", svc_flags, "Flags journal (JSONL)");
  serve->add_option("--labels", svc_labels, "Label journal (JSONL)");
  serve->add_option("--report", svc_report, "CvReport JSON for GET /metrics");
  serve->add_option("--roc", svc_roc, "ROC CSV for GET /roc");
  serve->callback([&] {
    action = [&] {
      auto opt = [&](const std::string& p) -> std::optional<std::string> {
        if (p.empty()) return std::nullopt;
        return resolve(g, p);
      };
      svc.collector_path = opt(svc_collector);
      svc.declared_path = opt(svc_declared);
      svc.model_path = opt(svc_model);
      svc.embeddings_path = opt(svc_emb);
      svc.calibration_path = opt(svc_cal);
      svc.flags_path = opt(svc_flags);
      svc.labels_path = opt(svc_labels);
      svc.report_path = opt(svc_report);
      svc.roc_path = opt(svc_roc);
      service::Service s(svc);
      err << "adaudit " << service::kVersion << " listening on " << svc.host << ':' << svc.port << std::endl;
      s.listen();
    };
  });

  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return ok;
  } catch (const CLI::CallForVersion&) {
    out << service::kVersion << '\n';
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return usage_error;
  }

  try {
    action();
    return ok;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return usage_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return data_error;
  }
}

}  // namespace adaudit::cli
