#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adaudit/corpus.hpp"

namespace adaudit {

enum class Label : std::uint8_t { non_political = 0, political = 1 };

std::string_view to_string(Label l);
Label parse_label(std::string_view s);

inline double as_target(Label l) { return l == Label::political ? 1.0 : 0.0; }

struct LabeledAd {
  corpus::AdRecord ad;
  Label label = Label::non_political;
  std::optional<std::string> annotator;
};

using LabeledDataset = std::vector<LabeledAd>;

// Same JSONL layout as the ad corpus plus a "label" field (and optional
// "annotator"). Malformed lines throw DataError with the line number.
LabeledDataset read_labeled(std::istream& in);
LabeledDataset read_labeled_file(const std::string& path);
void write_labeled(const LabeledDataset& data, std::ostream& out);

}  // namespace adaudit
