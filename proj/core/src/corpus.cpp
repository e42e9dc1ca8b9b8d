#include "adaudit/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "adaudit/error.hpp"
#include "adaudit/textproc.hpp"
#include "adaudit/unicode.hpp"

namespace adaudit::corpus {

using nlohmann::json;
namespace chr = std::chrono;

std::string_view to_string(Source s) { return s == Source::ad_library ? "ad_library" : "collector"; }

Source parse_source(std::string_view s) {
  if (s == "collector") return Source::collector;
  if (s == "ad_library") return Source::ad_library;
  throw DataError("unknown source '" + std::string(s) + "'");
}

void validate(const AdRecord& ad) {
  if (ad.id.empty()) throw DataError("ad id must be non-empty");
  if (ad.first_seen > ad.last_seen) throw DataError("ad " + ad.id + ": first_seen after last_seen");
  if (ad.source == Source::ad_library && !ad.declared_political)
    throw DataError("ad " + ad.id + ": ad_library records must be declared political");
}

namespace {

int digits(std::string_view s, std::size_t pos, std::size_t count) {
  if (pos + count > s.size()) throw DataError("bad timestamp '" + std::string(s) + "'");
  int v = 0;
  auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + count, v);
  if (ec != std::errc{} || p != s.data() + pos + count) throw DataError("bad timestamp '" + std::string(s) + "'");
  return v;
}

void expect(std::string_view s, std::size_t pos, char c) {
  if (pos >= s.size() || (s[pos] != c && !(c == 'T' && (s[pos] == 't' || s[pos] == ' '))))
    throw DataError("bad timestamp '" + std::string(s) + "'");
}

}  // namespace

Date parse_date(std::string_view s) {
  if (s.size() < 10) throw DataError("bad date '" + std::string(s) + "'");
  const int y = digits(s, 0, 4);
  expect(s, 4, '-');
  const int m = digits(s, 5, 2);
  expect(s, 7, '-');
  const int d = digits(s, 8, 2);
  Date date{chr::year{y}, chr::month{static_cast<unsigned>(m)}, chr::day{static_cast<unsigned>(d)}};
  if (!date.ok()) throw DataError("bad date '" + std::string(s) + "'");
  return date;
}

std::string format_date(Date d) {
  std::ostringstream os;
  os << std::setfill('0') << std::setw(4) << static_cast<int>(d.year()) << '-' << std::setw(2)
     << static_cast<unsigned>(d.month()) << '-' << std::setw(2) << static_cast<unsigned>(d.day());
  return os.str();
}

Timestamp parse_timestamp(std::string_view s) {
  const Date date = parse_date(s);
  Timestamp t = chr::sys_days{date};
  if (s.size() == 10) return t;
  expect(s, 10, 'T');
  const int hh = digits(s, 11, 2);
  expect(s, 13, ':');
  const int mm = digits(s, 14, 2);
  expect(s, 16, ':');
  const int ss = digits(s, 17, 2);
  if (hh > 23 || mm > 59 || ss > 60) throw DataError("bad timestamp '" + std::string(s) + "'");
  t += chr::hours{hh} + chr::minutes{mm} + chr::seconds{ss};
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  if (pos == s.size()) throw DataError("timestamp without offset '" + std::string(s) + "'");
  if ((s[pos] == 'Z' || s[pos] == 'z') && pos + 1 == s.size()) return t;
  if (s[pos] != '+' && s[pos] != '-') throw DataError("bad timestamp '" + std::string(s) + "'");
  const int sign = s[pos] == '+' ? 1 : -1;
  const int oh = digits(s, pos + 1, 2);
  expect(s, pos + 3, ':');
  const int om = digits(s, pos + 4, 2);
  if (pos + 6 != s.size()) throw DataError("bad timestamp '" + std::string(s) + "'");
  return t - sign * (chr::hours{oh} + chr::minutes{om});
}

std::string format_timestamp(Timestamp t) {
  const auto day = chr::floor<chr::days>(t);
  const Date date{day};
  const chr::hh_mm_ss hms{t - day};
  std::ostringstream os;
  os << format_date(date) << 'T' << std::setfill('0') << std::setw(2) << hms.hours().count() << ':'
     << std::setw(2) << hms.minutes().count() << ':' << std::setw(2) << hms.seconds().count() << 'Z';
  return os.str();
}

void to_json(json& j, const AdRecord& ad) {
  j = json{{"id", ad.id},
           {"advertiser_id", ad.advertiser_id},
           {"advertiser_name", ad.advertiser_name},
           {"text", ad.text},
           {"disclaimer", ad.disclaimer ? json(*ad.disclaimer) : json(nullptr)},
           {"landing_url", ad.landing_url ? json(*ad.landing_url) : json(nullptr)},
           {"first_seen", format_timestamp(ad.first_seen)},
           {"last_seen", format_timestamp(ad.last_seen)},
           {"language", ad.language ? json(*ad.language) : json(nullptr)},
           {"source", to_string(ad.source)},
           {"declared_political", ad.declared_political},
           {"media_refs", ad.media_refs}};
}

namespace {

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

void from_json(const json& j, AdRecord& ad) {
  if (!j.is_object()) throw DataError("ad line is not a JSON object");
  if (!j.contains("id") || !j.contains("text") || !j.contains("first_seen"))
    throw DataError("ad line missing id, text or first_seen");
  ad = AdRecord{};
  ad.id = j.at("id").get<std::string>();
  ad.advertiser_id = j.value("advertiser_id", std::string{});
  ad.advertiser_name = j.value("advertiser_name", std::string{});
  ad.text = j.at("text").get<std::string>();
  ad.disclaimer = optional_string(j, "disclaimer");
  ad.landing_url = optional_string(j, "landing_url");
  ad.first_seen = parse_timestamp(j.at("first_seen").get<std::string>());
  const auto last = optional_string(j, "last_seen");
  ad.last_seen = last ? parse_timestamp(*last) : ad.first_seen;
  ad.language = optional_string(j, "language");
  if (const auto src = optional_string(j, "source")) ad.source = parse_source(*src);
  ad.declared_political = j.value("declared_political", ad.source == Source::ad_library);
  if (auto it = j.find("media_refs"); it != j.end() && !it->is_null())
    ad.media_refs = it->get<std::vector<std::string>>();
  validate(ad);
}

void AdStore::upsert(AdRecord ad) {
  if (auto it = index_.find(ad.id); it != index_.end()) {
    records_[it->second] = std::move(ad);
    return;
  }
  index_.emplace(ad.id, records_.size());
  records_.push_back(std::move(ad));
}

const AdRecord* AdStore::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

IngestResult ingest(std::istream& in, std::string_view origin) {
  if (!in) throw DataError("unreadable stream " + std::string(origin));
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      AdRecord ad = json::parse(line).get<AdRecord>();
      result.store.upsert(std::move(ad));
      ++rows;
    } catch (const std::exception& e) {
      ++result.skipped;
      result.errors.push_back({line_no, e.what()});
    }
  }
  if (in.bad()) throw DataError("read error on " + std::string(origin));
  result.store.provenance.file = std::string(origin);
  result.store.provenance.rows = rows;
  result.store.provenance.skipped = result.skipped;
  result.store.provenance.ingested_at =
      format_timestamp(chr::floor<chr::seconds>(chr::system_clock::now()));
  return result;
}

IngestResult ingest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return ingest(in, path);
}

void serialize(const AdStore& store, std::ostream& out) {
  for (const auto& ad : store) out << json(ad).dump() << '\n';
}

void write_file(const AdStore& store, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  serialize(store, out);
  if (!out) throw DataError("write failed for " + path);
}

AdStore dedup_by_caption(const AdStore& store) {
  std::unordered_map<std::string, std::size_t> best;  // caption -> record index
  const auto& recs = store.records();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    auto [it, inserted] = best.try_emplace(unicode::normalize_text(recs[i].text), i);
    if (inserted) continue;
    const AdRecord& cur = recs[it->second];
    const AdRecord& cand = recs[i];
    if (cand.first_seen < cur.first_seen || (cand.first_seen == cur.first_seen && cand.id < cur.id))
      it->second = i;
  }
  std::vector<bool> keep(recs.size(), false);
  for (const auto& [caption, idx] : best) keep[idx] = true;
  AdStore out;
  out.provenance = store.provenance;
  for (std::size_t i = 0; i < recs.size(); ++i)
    if (keep[i]) out.upsert(recs[i]);
  return out;
}

std::string_view to_string(Language l) {
  switch (l) {
    case Language::pt: return "pt";
    case Language::en: return "en";
    case Language::es: return "es";
    case Language::unknown: break;
  }
  return "unknown";
}

namespace {

// Short function words, roughly fifty per language.
const std::unordered_set<std::string>& stopwords(Language l) {
  static const std::unordered_set<std::string> pt{
      "o", "a", "os", "as", "um", "uma", "uns", "umas", "de", "do", "da", "dos", "das", "em",
      "no", "na", "nos", "nas", "por", "pelo", "pela", "para", "com", "sem", "e", "ou", "mas",
      "que", "se", "não", "é", "são", "foi", "ser", "está", "você", "vocês", "nós", "eu", "ele",
      "ela", "eles", "seu", "sua", "nosso", "nossa", "também", "muito", "mais", "já", "ao", "à",
      "isso", "este", "esta", "quem", "como"};
  static const std::unordered_set<std::string> en{
      "the", "a", "an", "of", "to", "in", "on", "for", "with", "and", "or", "but", "is", "are",
      "was", "were", "be", "been", "it", "this", "that", "these", "those", "you", "your", "we",
      "our", "they", "their", "he", "she", "his", "her", "at", "by", "from", "as", "not", "no",
      "do", "does", "have", "has", "will", "can", "all", "more", "now", "new", "get", "just",
      "about", "what"};
  static const std::unordered_set<std::string> es{
      "el", "la", "los", "las", "un", "una", "unos", "unas", "de", "del", "al", "en", "por",
      "para", "con", "sin", "y", "o", "pero", "que", "se", "no", "es", "son", "fue", "ser",
      "está", "usted", "ustedes", "nosotros", "yo", "él", "ella", "ellos", "su", "sus",
      "nuestro", "nuestra", "también", "muy", "más", "ya", "este", "esta", "esto", "quien",
      "como", "lo", "le", "les", "hay", "porque"};
  switch (l) {
    case Language::pt: return pt;
    case Language::en: return en;
    case Language::es: return es;
    case Language::unknown: break;
  }
  static const std::unordered_set<std::string> none;
  return none;
}

}  // namespace

Language detect_language(std::string_view text) {
  const auto tokens = text::tokenize(text);
  const std::unordered_set<std::string> distinct(tokens.begin(), tokens.end());
  constexpr std::array<Language, 3> kCandidates{Language::pt, Language::en, Language::es};
  std::array<std::size_t, 3> hits{};
  for (std::size_t i = 0; i < kCandidates.size(); ++i) {
    const auto& sw = stopwords(kCandidates[i]);
    for (const auto& t : distinct) hits[i] += sw.count(t);
  }
  const auto best = static_cast<std::size_t>(std::max_element(hits.begin(), hits.end()) - hits.begin());
  if (hits[best] < 2) return Language::unknown;
  for (std::size_t i = 0; i < hits.size(); ++i)
    if (i != best && hits[i] == hits[best]) return Language::unknown;
  return kCandidates[best];
}

AdStore filter_language(const AdStore& store, std::string_view lang) {
  AdStore out;
  out.provenance = store.provenance;
  for (const auto& ad : store) {
    const bool keep = ad.language ? *ad.language == lang : to_string(detect_language(ad.text)) == lang;
    if (keep) out.upsert(ad);
  }
  return out;
}

PeriodFilter::PeriodFilter(Date start_, Date end_) : start(start_), end(end_) {
  if (!start.ok() || !end.ok() || chr::sys_days{start} > chr::sys_days{end})
    throw DataError("period start must not be after end");
}

bool PeriodFilter::contains(Timestamp t) const {
  const auto day = chr::floor<chr::days>(t);
  return day >= chr::sys_days{start} && day <= chr::sys_days{end};
}

AdStore filter_period(const AdStore& store, const PeriodFilter& period) {
  AdStore out;
  out.provenance = store.provenance;
  for (const auto& ad : store)
    if (period.contains(ad.first_seen)) out.upsert(ad);
  return out;
}

PeriodFilter electoral_period_2018() {
  using namespace std::chrono_literals;
  return PeriodFilter{2018y / chr::August / 16d, 2018y / chr::October / 28d};
}

}  // namespace adaudit::corpus
