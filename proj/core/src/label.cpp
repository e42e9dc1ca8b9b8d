#include "adaudit/label.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "adaudit/error.hpp"

namespace adaudit {

std::string_view to_string(Label l) { return l == Label::political ? "political" : "non_political"; }

Label parse_label(std::string_view s) {
  if (s == "political" || s == "1") return Label::political;
  if (s == "non_political" || s == "0") return Label::non_political;
  throw DataError("unknown label '" + std::string(s) + "'");
}

LabeledDataset read_labeled(std::istream& in) {
  if (!in) throw DataError("unreadable labeled stream");
  LabeledDataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LabeledAd item;
      item.ad = j.get<corpus::AdRecord>();
      const auto& lab = j.at("label");
      item.label = lab.is_boolean() ? (lab.get<bool>() ? Label::political : Label::non_political)
                                    : parse_label(lab.get<std::string>());
      if (auto it = j.find("annotator"); it != j.end() && it->is_string()) item.annotator = it->get<std::string>();
      out.push_back(std::move(item));
    } catch (const std::exception& e) {
      throw DataError("labeled line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

LabeledDataset read_labeled_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_labeled(in);
}

void write_labeled(const LabeledDataset& data, std::ostream& out) {
  for (const auto& item : data) {
    nlohmann::json j = item.ad;
    j["label"] = to_string(item.label);
    if (item.annotator) j["annotator"] = *item.annotator;
    out << j.dump() << '\n';
  }
}

}  // namespace adaudit
