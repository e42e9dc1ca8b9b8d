#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "adaudit/corpus.hpp"
#include "adaudit/label.hpp"
#include "adaudit/textproc.hpp"

namespace adaudit::synthetic {

struct GeneratorConfig {
  std::uint64_t seed = 1;
  std::size_t labeled = 2000;           // ~50/50
  std::size_t corpus = 40000;           // rows, duplicates included
  double political_rate = 0.02;         // of corpus rows
  std::size_t declared = 3000;          // Ad Library rows
  double declared_twin_rate = 0.08;     // political groups re-published in the Ad Library
  double compliant_rate = 0.10;         // political groups carrying keyword + tax id
  double out_of_period_rate = 0.05;     // rows dated before the electoral period
  double foreign_group_rate = 0.03;     // non-political groups written in English
  std::size_t embed_dim = 32;
  // Share of captions mixing both topic vocabularies heavily. At 0 every
  // caption is dominated by its own class's words.
  double hard_rate = 0.0;
};

struct TruthRow {
  std::string id;
  bool is_political = false;
  std::size_t dup_group = 0;
  bool in_scope = false;  // inside the electoral period and Portuguese
  std::optional<std::string> declared_twin;
  bool compliant = false;
};

struct TruthSummary {
  std::size_t rows = 0;
  std::size_t groups = 0;                 // caption survivors over the whole corpus
  std::size_t in_scope_rows = 0;
  std::size_t in_scope_groups = 0;        // survivors after period + language + dedup
  std::size_t in_scope_political_groups = 0;
  std::size_t in_scope_twinned_groups = 0;
  std::size_t in_scope_compliant_groups = 0;
  std::size_t political_rows = 0;
};

struct SyntheticData {
  LabeledDataset labeled;
  corpus::AdStore corpus;
  corpus::AdStore declared;
  text::EmbeddingTable embeddings{1};
  std::vector<TruthRow> truth;
  TruthSummary summary;
};

// Deterministic per seed. Political and commercial vocabularies are
// disjoint and their embeddings sit on opposite sides of a random
// direction, so a Bayes-optimal classifier separates the classes.
SyntheticData generate(const GeneratorConfig& cfg);

// Writes labeled.jsonl, corpus.jsonl, declared.jsonl, truth.jsonl,
// truth_summary.json and embeddings.txt into `dir` (created if missing).
void write_dataset(const SyntheticData& data, const std::string& dir);

void to_json(nlohmann::json& j, const TruthRow& t);
void to_json(nlohmann::json& j, const TruthSummary& s);

}  // namespace adaudit::synthetic
