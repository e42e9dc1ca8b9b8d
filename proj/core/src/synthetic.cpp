#include "adaudit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "adaudit/error.hpp"
#include "adaudit/random.hpp"
#include "adaudit/unicode.hpp"

namespace adaudit::synthetic {

using nlohmann::json;
namespace chr = std::chrono;

namespace {

const std::vector<std::string> kPolitical{
    "candidato", "candidata", "deputado", "deputada", "estadual", "federal", "senador", "senadora",
    "governador", "governadora", "presidente", "eleição", "eleições", "eleitor", "eleitores", "voto",
    "votar", "vote", "urna", "campanha", "partido", "político", "política", "congresso", "câmara",
    "assembleia", "prefeito", "vereador", "governo", "democracia", "reforma", "corrupção", "justiça",
    "propostas", "proposta", "mandato", "povo", "cidadania", "direitos", "ministério", "legislativo",
    "trabalhadores", "previdência", "impostos", "constituição", "parlamentar", "coligação", "turno",
    "debate", "plenário", "projeto", "lei", "emenda", "segurança", "saúde", "educação", "propaganda",
    "eleitoral", "#eleicoes2018", "#vote", "#mudança"};

const std::vector<std::string> kCommercial{
    "promoção", "desconto", "descontos", "loja", "lojas", "frete", "grátis", "compre", "comprar",
    "oferta", "ofertas", "produto", "produtos", "moda", "sapatos", "roupas", "celular", "smartphone",
    "curso", "restaurante", "pizza", "entrega", "delivery", "cupom", "preço", "preços", "parcelas",
    "cartão", "liquidação", "coleção", "beleza", "maquiagem", "perfume", "academia", "treino", "viagem",
    "hotel", "passagens", "imóveis", "apartamento", "carro", "seminovos", "financiamento", "aplicativo",
    "clique", "confira", "aproveite", "estoque", "marca", "qualidade", "garantia", "novidade",
    "lançamento", "cosméticos", "tênis", "óculos", "#promo", "#blackfriday", "#frete"};

const std::vector<std::string> kNeutral{
    "hoje", "agora", "brasil", "cidade", "dia", "vida", "todos", "melhor", "novo", "nova", "grande",
    "juntos", "família", "sempre", "mundo", "tempo", "ano", "semana", "amigos", "gente", "bairro",
    "região", "futuro", "trabalho", "história", "momento", "casa", "aqui", "veja", "saiba"};

const std::vector<std::string> kPlaces{
    "marmelópolis", "campinas", "recife", "salvador", "fortaleza", "curitiba", "manaus", "belém",
    "goiânia", "natal", "niterói", "londrina", "uberlândia", "sorocaba", "joinville", "maceió",
    "teresina", "aracaju", "cuiabá", "florianópolis"};

// Portuguese function words absent from the English and Spanish lists.
const std::vector<std::string> kPtOnly{"você", "nosso", "nossa", "não", "também", "pelo", "pela", "ao",
                                       "é", "um", "uma", "com", "os", "isso", "muito"};
const std::vector<std::string> kPtShared{"o", "a", "de", "do", "da", "para", "e", "que", "em", "no", "na"};

const std::vector<std::string> kEnglish{"the", "best", "deals", "on", "shoes", "today", "for", "you", "and",
                                        "your", "family", "with", "free", "shipping", "new", "collection",
                                        "shop", "now", "our", "store", "online", "sale", "get", "this"};
const std::vector<std::string> kEnglishStop{"the", "for", "you", "and", "your", "with", "our", "this"};

const std::string& pick(const std::vector<std::string>& v, Rng& rng) { return v[rng.below(v.size())]; }

std::string join_caption(std::vector<std::string> words, Rng& rng) {
  rng.shuffle(words);
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s += ' ';
    s += words[i];
  }
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  s += rng.bernoulli(0.5) ? "!" : ".";
  return s;
}

std::string number(Rng& rng, std::size_t lo_digits, std::size_t hi_digits) {
  const auto n = lo_digits + rng.below(hi_digits - lo_digits + 1);
  std::string s;
  s.push_back(static_cast<char>('1' + rng.below(9)));
  for (std::size_t i = 1; i < n; ++i) s.push_back(static_cast<char>('0' + rng.below(10)));
  return s;
}

std::string portuguese_caption(bool political, double hard_rate, Rng& rng) {
  std::vector<std::string> words;
  const auto& own = political ? kPolitical : kCommercial;
  const auto& other = political ? kCommercial : kPolitical;
  const auto k_topic = 3 + rng.below(4);
  if (hard_rate > 0.0 && rng.bernoulli(hard_rate)) {
    // A shoe sale "for election day", a candidate's gym visit.
    const double cross = rng.uniform(0.2, 0.45);
    for (std::size_t i = 0; i < k_topic; ++i) words.push_back(pick(rng.bernoulli(cross) ? other : own, rng));
  } else {
    for (std::size_t i = 0; i < k_topic; ++i) words.push_back(pick(own, rng));
    if (rng.bernoulli(0.10)) words.push_back(pick(other, rng));
  }
  std::vector<std::string> pt_only = kPtOnly;
  rng.shuffle(pt_only);
  const auto k_pt = 3 + rng.below(3);
  for (std::size_t i = 0; i < k_pt; ++i) words.push_back(pt_only[i]);
  const auto k_fill = 2 + rng.below(6);
  for (std::size_t i = 0; i < k_fill; ++i) words.push_back(rng.bernoulli(0.5) ? pick(kNeutral, rng) : pick(kPtShared, rng));
  if (rng.bernoulli(0.5)) words.push_back(pick(kPlaces, rng));
  words.push_back(political ? number(rng, 2, 5) : number(rng, 2, 3) + "," + number(rng, 2, 2));
  return join_caption(std::move(words), rng);
}

std::string english_caption(Rng& rng) {
  std::vector<std::string> words;
  std::vector<std::string> stop = kEnglishStop;
  rng.shuffle(stop);
  for (std::size_t i = 0; i < 3; ++i) words.push_back(stop[i]);
  const auto k = 5 + rng.below(6);
  for (std::size_t i = 0; i < k; ++i) words.push_back(pick(kEnglish, rng));
  words.push_back(number(rng, 2, 3));
  return join_caption(std::move(words), rng);
}

std::string cnpj(Rng& rng) {
  auto d = [&](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>('0' + rng.below(10)));
    return s;
  };
  return d(2) + "." + d(3) + "." + d(3) + "/" + (rng.bernoulli(0.3) ? d(3) : d(4)) + "-" + d(2);
}

std::string cpf(Rng& rng) {
  auto d = [&](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>('0' + rng.below(10)));
    return s;
  };
  return d(3) + "." + d(3) + "." + d(3) + "-" + d(2);
}

// Same caption up to case and spacing.
std::string respace(const std::string& s, Rng& rng) {
  std::string out;
  for (const char c : s) {
    if (c == ' ' && rng.bernoulli(0.3)) out += "  ";
    else out.push_back(c);
  }
  if (rng.bernoulli(0.5)) out = "  " + out + " ";
  return out;
}

corpus::Timestamp random_time(chr::sys_days from, chr::sys_days to, Rng& rng) {
  const auto span = static_cast<std::uint64_t>((to - from).count() + 1) * 86400;
  return chr::sys_seconds{from} + chr::seconds{static_cast<std::int64_t>(rng.below(span))};
}

class UniqueCaptions {
 public:
  bool claim(const std::string& caption) { return seen_.insert(unicode::normalize_text(caption)).second; }

 private:
  std::unordered_set<std::string> seen_;
};

struct Group {
  std::size_t id = 0;
  bool political = false;
  bool english = false;
  bool compliant = false;
  std::string text;
  std::string advertiser_id;
  std::string advertiser_name;
  std::size_t rows = 0;
};

std::string make_id(char prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%07zu", prefix, n);
  return buf;
}

}  // namespace

SyntheticData generate(const GeneratorConfig& cfg) {
  Rng rng(cfg.seed);
  SyntheticData out;
  UniqueCaptions captions;

  const auto period = corpus::electoral_period_2018();
  const chr::sys_days in_from{period.start};
  const chr::sys_days in_to{period.end};
  using namespace std::chrono_literals;
  const chr::sys_days pre_from{2018y / chr::March / 14d};
  const chr::sys_days pre_to{2018y / chr::August / 15d};

  auto fresh_caption = [&](bool political) {
    for (;;) {
      auto c = portuguese_caption(political, cfg.hard_rate, rng);
      if (captions.claim(c)) return c;
    }
  };

  // Embeddings: class vocabularies on opposite sides of a random direction.
  {
    text::EmbeddingTable table(cfg.embed_dim);
    std::vector<double> dir(cfg.embed_dim);
    double norm = 0.0;
    for (auto& x : dir) {
      x = rng.normal();
      norm += x * x;
    }
    for (auto& x : dir) x /= std::sqrt(norm);
    auto vec = [&](double side) {
      std::vector<double> v(cfg.embed_dim);
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = side * dir[k] + 0.35 * rng.normal();
      return v;
    };
    std::set<std::string> done;
    auto add = [&](const std::vector<std::string>& words, double side) {
      for (const auto& w : words)
        if (done.insert(w).second) table.insert(w, vec(side));
    };
    add(kPolitical, 1.0);
    add(kCommercial, -1.0);
    add(kNeutral, 0.0);
    add(kPlaces, 0.0);
    add(kPtOnly, 0.0);
    add(kPtShared, 0.0);
    add(kEnglish, 0.0);
    out.embeddings = std::move(table);
  }

  // Labeled set, exactly half political.
  for (std::size_t i = 0; i < cfg.labeled; ++i) {
    LabeledAd item;
    item.label = i % 2 == 0 ? Label::political : Label::non_political;
    const bool political = item.label == Label::political;
    auto& ad = item.ad;
    ad.id = make_id('L', i + 1);
    ad.text = fresh_caption(political);
    ad.advertiser_id = (political ? "pa" : "ca") + std::to_string(rng.below(political ? 300 : 3000));
    ad.advertiser_name = (political ? "Candidatura " : "Empresa ") + ad.advertiser_id;
    ad.first_seen = random_time(in_from, in_to, rng);
    ad.last_seen = ad.first_seen + chr::days{rng.below(6)};
    ad.language = "pt";
    ad.media_refs = {"img_" + std::to_string(rng.next() % 1000000000)};
    item.annotator = "gold";
    out.labeled.push_back(std::move(item));
  }
  rng.shuffle(out.labeled);

  // Collector corpus: caption groups of 1-3 rows.
  const auto political_rows = static_cast<std::size_t>(std::llround(cfg.political_rate * static_cast<double>(cfg.corpus)));
  std::vector<Group> groups;
  auto fill = [&](bool political, std::size_t rows) {
    std::size_t made = 0;
    while (made < rows) {
      Group g;
      g.id = groups.size();
      g.political = political;
      const double u = rng.uniform();
      g.rows = std::min<std::size_t>(rows - made, u < 0.6 ? 1 : (u < 0.85 ? 2 : 3));
      g.english = !political && rng.bernoulli(cfg.foreign_group_rate);
      if (g.english) {
        do {
          g.text = english_caption(rng);
        } while (!captions.claim(g.text));
      } else {
        g.text = fresh_caption(political);
        if (political && rng.bernoulli(cfg.compliant_rate)) {
          g.compliant = true;
          const bool company = rng.bernoulli(0.6);
          g.text += rng.bernoulli(0.5) ? " Propaganda Eleitoral: " : " PROPAGANDA POLÍTICA - ";
          g.text += company ? "CNPJ " + cnpj(rng) : "CPF " + cpf(rng);
        } else if (political && rng.bernoulli(0.05)) {
          g.text += " Propaganda Eleitoral";
        }
        captions.claim(g.text);
      }
      g.advertiser_id = (political ? "pa" : "ca") + std::to_string(rng.below(political ? 300 : 3000));
      g.advertiser_name = (political ? "Candidatura " : "Empresa ") + g.advertiser_id;
      made += g.rows;
      groups.push_back(std::move(g));
    }
  };
  fill(true, political_rows);
  fill(false, cfg.corpus - political_rows);

  struct Row {
    std::size_t group;
    corpus::AdRecord ad;
    bool in_scope;
  };
  std::vector<Row> rows;
  for (const auto& g : groups) {
    for (std::size_t r = 0; r < g.rows; ++r) {
      Row row{g.id, {}, true};
      const bool early = rng.bernoulli(cfg.out_of_period_rate);
      row.ad.first_seen = early ? random_time(pre_from, pre_to, rng) : random_time(in_from, in_to, rng);
      row.ad.last_seen = row.ad.first_seen + chr::days{rng.below(6)};
      row.ad.text = r == 0 ? g.text : (rng.bernoulli(0.2) ? respace(g.text, rng) : g.text);
      row.ad.advertiser_id = g.advertiser_id;
      row.ad.advertiser_name = g.advertiser_name;
      row.ad.media_refs = {"img_" + std::to_string(rng.next() % 1000000000)};
      if (rng.bernoulli(0.3)) row.ad.landing_url = "https://example.com/" + std::to_string(rng.below(100000));
      if (g.english) {
        if (rng.bernoulli(0.5)) row.ad.language = "en";
      } else if (rng.bernoulli(0.7)) {
        row.ad.language = "pt";
      }
      row.in_scope = !early && !g.english;
      rows.push_back(std::move(row));
    }
  }
  rng.shuffle(rows);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].ad.id = make_id('C', i + 1);

  // Ad Library: fresh political captions plus twins of some collector groups.
  std::vector<corpus::AdRecord> declared;
  std::vector<std::optional<std::string>> twin_of(groups.size());
  std::vector<std::size_t> twinned;
  for (const auto& g : groups)
    if (g.political && rng.bernoulli(cfg.declared_twin_rate)) twinned.push_back(g.id);
  auto declared_ad = [&](const std::string& text, const std::string& adv) {
    corpus::AdRecord ad;
    ad.text = text;
    ad.advertiser_id = adv;
    ad.advertiser_name = "Candidatura " + adv;
    ad.source = corpus::Source::ad_library;
    ad.declared_political = true;
    ad.language = "pt";
    ad.first_seen = random_time(in_from, in_to, rng);
    ad.last_seen = ad.first_seen + chr::days{rng.below(10)};
    ad.disclaimer = "Pago por " + ad.advertiser_name;
    return ad;
  };
  std::vector<std::pair<std::size_t, std::size_t>> twin_rows;  // (group, declared index)
  for (const auto gid : twinned) {
    const auto copies = rng.bernoulli(0.2) ? 2u : 1u;
    for (unsigned c = 0; c < copies; ++c) {
      auto text = rng.bernoulli(0.5) ? respace(groups[gid].text, rng) : groups[gid].text;
      if (rng.bernoulli(0.3)) std::transform(text.begin(), text.end(), text.begin(), [](unsigned char ch) {
          return static_cast<char>(std::toupper(ch));
        });
      twin_rows.emplace_back(gid, declared.size());
      declared.push_back(declared_ad(text, groups[gid].advertiser_id));
    }
  }
  while (declared.size() < cfg.declared)
    declared.push_back(declared_ad(fresh_caption(true), "pa" + std::to_string(rng.below(300))));
  std::vector<std::size_t> order(declared.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::size_t> position(declared.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    position[order[i]] = i;
    declared[order[i]].id = make_id('D', i + 1);
  }
  for (const auto& [gid, di] : twin_rows) {
    const auto& cand = declared[di];
    if (!twin_of[gid]) {
      twin_of[gid] = cand.id;
      continue;
    }
    // Keep the earliest (then smallest id) twin.
    const auto* cur = &*std::find_if(declared.begin(), declared.end(), [&](const auto& a) { return a.id == *twin_of[gid]; });
    if (cand.first_seen < cur->first_seen || (cand.first_seen == cur->first_seen && cand.id < cur->id))
      twin_of[gid] = cand.id;
  }
  std::vector<corpus::AdRecord> declared_sorted(declared.size());
  for (std::size_t i = 0; i < declared.size(); ++i) declared_sorted[position[i]] = std::move(declared[i]);
  for (auto& ad : declared_sorted) out.declared.upsert(std::move(ad));

  // Truth.
  std::vector<bool> group_in_scope(groups.size(), false);
  std::set<std::size_t> all_groups;
  for (auto& row : rows) {
    const auto& g = groups[row.group];
    TruthRow t;
    t.id = row.ad.id;
    t.is_political = g.political;
    t.dup_group = g.id;
    t.in_scope = row.in_scope;
    t.declared_twin = twin_of[g.id];
    t.compliant = g.compliant;
    out.truth.push_back(t);
    all_groups.insert(g.id);
    if (row.in_scope) {
      group_in_scope[g.id] = true;
      ++out.summary.in_scope_rows;
    }
    out.summary.political_rows += g.political;
    out.corpus.upsert(std::move(row.ad));
  }
  out.summary.rows = rows.size();
  out.summary.groups = all_groups.size();
  for (const auto& g : groups) {
    if (!group_in_scope[g.id]) continue;
    ++out.summary.in_scope_groups;
    out.summary.in_scope_political_groups += g.political;
    out.summary.in_scope_twinned_groups += g.political && twin_of[g.id].has_value();
    out.summary.in_scope_compliant_groups += g.compliant;
  }
  return out;
}

void to_json(json& j, const TruthRow& t) {
  j = json{{"id", t.id},
           {"is_political", t.is_political},
           {"dup_group", t.dup_group},
           {"in_scope", t.in_scope},
           {"declared_twin", t.declared_twin ? json(*t.declared_twin) : json(nullptr)},
           {"compliant", t.compliant}};
}

void to_json(json& j, const TruthSummary& s) {
  j = json{{"rows", s.rows},
           {"groups", s.groups},
           {"in_scope_rows", s.in_scope_rows},
           {"in_scope_groups", s.in_scope_groups},
           {"in_scope_political_groups", s.in_scope_political_groups},
           {"in_scope_twinned_groups", s.in_scope_twinned_groups},
           {"in_scope_compliant_groups", s.in_scope_compliant_groups},
           {"political_rows", s.political_rows}};
}

void write_dataset(const SyntheticData& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path base(dir);
  auto open = [&](const char* name) {
    std::ofstream f(base / name);
    if (!f) throw DataError("cannot write " + (base / name).string());
    return f;
  };
  {
    auto f = open("labeled.jsonl");
    write_labeled(data.labeled, f);
  }
  {
    auto f = open("corpus.jsonl");
    corpus::serialize(data.corpus, f);
  }
  {
    auto f = open("declared.jsonl");
    corpus::serialize(data.declared, f);
  }
  {
    auto f = open("truth.jsonl");
    for (const auto& t : data.truth) f << json(t).dump() << '\n';
  }
  {
    auto f = open("truth_summary.json");
    f << json(data.summary).dump(2) << '\n';
  }
  {
    auto f = open("embeddings.txt");
    text::save_embeddings(data.embeddings, f);
  }
}

}  // namespace adaudit::synthetic
