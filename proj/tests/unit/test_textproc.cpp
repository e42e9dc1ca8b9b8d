#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "adaudit/error.hpp"
#include "adaudit/textproc.hpp"
#include "adaudit/unicode.hpp"
#include "gen.hpp"
#include "oracles.hpp"

using namespace adaudit;
using namespace adaudit::text;

TEST_CASE("tokenize") {
  CHECK(tokenize("").empty());
  CHECK(tokenize("Vote 2332 para Deputado!") == TokenSeq{"vote", "2332", "para", "deputado"});
  CHECK(tokenize("Veja http://bit.ly/x #eleicoes2018") == TokenSeq{"veja", "<url>", "#eleicoes2018"});
  CHECK(tokenize("acesse www.exemplo.com.br/vote agora") == TokenSeq{"acesse", "<url>", "agora"});
  CHECK(tokenize("ELEIÇÕES, já!") == TokenSeq{"eleições", "já"});
  CHECK(tokenize("#Vote_Certo # sozinho") == TokenSeq{"#vote_certo", "sozinho"});
  CHECK(tokenize("  \t\n ") == TokenSeq{});
  // decomposed and composed forms tokenize alike
  CHECK(tokenize("Eleições") == tokenize("Eleições"));
}

TEST_CASE("tokens are never empty and tokenize is deterministic") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto s = gen::text(rng, 0, 20);
    const auto t = tokenize(s);
    for (const auto& tok : t) CHECK_FALSE(tok.empty());
    CHECK(tokenize(s) == t);
  }
}

TEST_CASE("normalize_text") {
  CHECK(unicode::normalize_text("  Vote\t2332 ") == "vote 2332");
  CHECK(unicode::normalize_text("Eleições") == unicode::normalize_text("Eleições"));
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto s = gen::text(rng, 0, 10);
    const auto once = unicode::normalize_text(s);
    CHECK(unicode::normalize_text(once) == once);
  }
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("hash_vectorize") {
  SUBCASE("empty tokens give a zero vector") {
    auto v = hash_vectorize({}, 16);
    CHECK(v.dims() == 16);
    CHECK(v.nnz() == 0);
  }
  SUBCASE("repeated token") {
    auto v = hash_vectorize({"abc", "abc"});
    REQUIRE(v.nnz() == 1);
    CHECK(v.entries().begin()->second == 2.0);
    CHECK(v.entries().begin()->first == fnv1a64("abc") % kDefaultHashDims);
  }
  SUBCASE("dims must be positive") { CHECK_THROWS(hash_vectorize({"a"}, 0)); }
  SUBCASE("indices in range, counts positive, mass conserved") {
    Rng rng(21);
    for (int i = 0; i < 100; ++i) {
      const auto toks = tokenize(gen::text(rng, 0, 30));
      const std::size_t dims = 1 + rng.below(64);
      const auto v = hash_vectorize(toks, dims);
      double total = 0;
      for (const auto& [idx, c] : v.entries()) {
        CHECK(idx < dims);
        CHECK(c > 0);
        total += c;
      }
      CHECK(total == static_cast<double>(toks.size()));
      CHECK(hash_vectorize(toks, dims) == v);
    }
  }
}

TEST_CASE("hash collisions of 1,000 distinct tokens stay within 3 sigma of the birthday bound") {
  const double m = static_cast<double>(kDefaultHashDims);
  const auto [expected, sigma] = oracle::expected_collisions(1000, m);
  // analytic value: 1000 - 2^18 (1 - (1 - 2^-18)^1000)
  CHECK(expected == doctest::Approx(1000 - m * (1 - std::pow(1 - 1 / m, 1000))).epsilon(1e-12));
  Rng rng(77);
  TokenSeq toks;
  std::set<std::string> seen;
  while (toks.size() < 1000) {
    std::string t;
    for (int k = 0; k < 8; ++k) t.push_back(static_cast<char>('a' + rng.below(26)));
    if (seen.insert(t).second) toks.push_back(t);
  }
  const auto v = hash_vectorize(toks);
  const double collisions = 1000.0 - static_cast<double>(v.nnz());
  CHECK(std::abs(collisions - expected) <= 3 * sigma);
}

TEST_CASE("load_embeddings") {
  SUBCASE("header and two valid lines") {
    std::istringstream in("2 3\nvoto 0.1 0.2 0.3\nloja -1 0 1\n");
    auto r = load_embeddings(in);
    CHECK(r.table.size() == 2);
    CHECK(r.table.dim() == 3);
    CHECK(r.skipped == 0);
    REQUIRE(r.table.lookup("voto") != nullptr);
    CHECK((*r.table.lookup("voto"))[2] == doctest::Approx(0.3));
    CHECK(r.table.lookup("absent") == nullptr);
  }
  SUBCASE("wrong arity under a header is skipped") {
    std::istringstream in("2 3\nvoto 0.1 0.2\nloja -1 0 1\n");
    auto r = load_embeddings(in);
    CHECK(r.table.size() == 1);
    CHECK(r.skipped == 1);
  }
  SUBCASE("no header takes the dim from the first line; inconsistency is fatal") {
    std::istringstream ok("a 1 2\nb 3 4\n");
    CHECK(load_embeddings(ok).table.dim() == 2);
    std::istringstream bad("a 1 2\nb 3 4 5\n");
    CHECK_THROWS_AS(load_embeddings(bad), DataError);
  }
  SUBCASE("empty stream is fatal") {
    std::istringstream in("");
    CHECK_THROWS_AS(load_embeddings(in), DataError);
  }
  SUBCASE("save then load preserves vectors to 6 decimals") {
    Rng rng(4);
    EmbeddingTable t(5);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> v(5);
      for (auto& x : v) x = rng.normal() * 3;
      t.insert("tok" + std::to_string(i), v);
    }
    std::stringstream buf;
    save_embeddings(t, buf);
    auto back = load_embeddings(buf).table;
    REQUIRE(back.size() == t.size());
    CHECK(back.tokens() == t.tokens());
    for (const auto& tok : t.tokens())
      for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs((*back.lookup(tok))[k] - (*t.lookup(tok))[k]) <= 5e-7);
  }
}

namespace {

EmbeddingTable small_table() {
  EmbeddingTable t(2);
  t.insert("x", {1.0, 0.0});
  t.insert("y", {0.0, 1.0});
  t.insert("z", {2.0, -4.0});
  return t;
}

}  // namespace

TEST_CASE("embed_sequence") {
  const auto t = small_table();
  CHECK(embed_sequence({"oov", "nope"}, t).rows == 0);
  const auto m = embed_sequence({"x", "oov", "z"}, t);
  REQUIRE(m.rows == 2);
  CHECK(m.dim == 2);
  CHECK(m.at(0, 0) == 1.0);
  CHECK(m.at(1, 1) == -4.0);
  const auto r = embed_sequence({"y", "y"}, t);
  CHECK(r.at(0, 0) == r.at(1, 0));
  CHECK(r.at(0, 1) == r.at(1, 1));
}

TEST_CASE("embed_sequence rows are verbatim table entries") {
  const auto t = small_table();
  Rng rng(6);
  const TokenSeq vocab{"x", "y", "z", "w", "q"};
  for (int i = 0; i < 50; ++i) {
    TokenSeq toks;
    for (auto k = rng.below(10); k > 0; --k) toks.push_back(vocab[rng.below(vocab.size())]);
    const auto m = embed_sequence(toks, t);
    CHECK(m.rows <= toks.size());
    std::size_t r = 0;
    for (const auto& tok : toks) {
      const auto* v = t.lookup(tok);
      if (!v) continue;
      CHECK(m.at(r, 0) == (*v)[0]);
      CHECK(m.at(r, 1) == (*v)[1]);
      ++r;
    }
    CHECK(r == m.rows);
  }
}

TEST_CASE("mean_embedding") {
  const auto t = small_table();
  CHECK(mean_embedding({}, t) == std::vector<double>{0.0, 0.0});
  CHECK(mean_embedding({"oov"}, t) == std::vector<double>{0.0, 0.0});
  CHECK(mean_embedding({"z"}, t) == std::vector<double>{2.0, -4.0});
  CHECK(mean_embedding({"x", "y"}, t) == std::vector<double>{0.5, 0.5});

  // k copies of a sequence leave the mean unchanged
  Rng rng(12);
  const TokenSeq vocab{"x", "y", "z", "w"};
  for (int i = 0; i < 50; ++i) {
    TokenSeq toks;
    for (auto k = 1 + rng.below(6); k > 0; --k) toks.push_back(vocab[rng.below(vocab.size())]);
    TokenSeq rep;
    const auto copies = 1 + rng.below(4);
    for (std::size_t c = 0; c < copies; ++c) rep.insert(rep.end(), toks.begin(), toks.end());
    const auto a = mean_embedding(toks, t);
    const auto b = mean_embedding(rep, t);
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-12));
  }
}

TEST_CASE("embedding fingerprint tracks content") {
  auto a = small_table();
  auto b = small_table();
  CHECK(a.fingerprint() == b.fingerprint());
  b.insert("extra", {0.0, 0.0});
  CHECK(a.fingerprint() != b.fingerprint());
}
