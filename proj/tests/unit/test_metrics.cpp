// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <functional>
#include <random>

#include "protolens/error.hpp"
#include "protolens/metrics.hpp"
#include "support/oracles.hpp"

using namespace protolens;
using namespace protolens::metrics;
using corpus::Mode;

namespace {

Word w(const char* s) { return Word::from_string(s, Mode::Phonetic); }
Word empty_word() { return Word{{}, Mode::Phonetic}; }

std::vector<Symbol> random_tokens(std::mt19937_64& rng, std::size_t max_len) {
  static const std::vector<Symbol> alphabet = {"a", "b", "c", "ː", "E"};
  std::vector<Symbol> out(rng() % (max_len + 1));
  for (auto& s : out) s = alphabet[rng() % alphabet.size()];
  return out;
}

}  // namespace

TEST_CASE("edit distance examples") {
  CHECK(edit_distance(w("pescarium"), w("piscarium")) == 1);
  CHECK(edit_distance(empty_word(), w("abc")) == 3);
  CHECK(edit_distance(w("lactem"), w("lactem")) == 0);
  CHECK(edit_distance(w("pEm"), w("paI")) == 2);
}

TEST_CASE("edit distance matches the recursive oracle") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const auto a = random_tokens(rng, 7), b = random_tokens(rng, 7);
    CHECK(edit_distance(a, b) == test_support::edit_distance_recursive(a, b));
  }
}

TEST_CASE("edit distance is a metric") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 300; ++i) {
    const auto a = random_tokens(rng, 10), b = random_tokens(rng, 10), c = random_tokens(rng, 10);
    CHECK(edit_distance(a, b) == edit_distance(b, a));
    CHECK((edit_distance(a, b) == 0) == (a == b));
    CHECK(edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c));
  }
}

TEST_CASE("normalized edit distance") {
  CHECK(normalized_edit_distance(w("pEm"), w("paI")) == doctest::Approx(2.0 / 3.0));
  CHECK(normalized_edit_distance(w("abcdefghij"), w("abcdefghiX")) == doctest::Approx(0.1));
  CHECK(normalized_edit_distance(w("lactem"), w("lactem")) == 0.0);
  CHECK_THROWS_AS(normalized_edit_distance(w("a"), empty_word()), ValidationError);
  CHECK(normalized_edit_distance(w("ab"), w("abcd"), NormalizeBy::Prediction) == doctest::Approx(1.0));
}

TEST_CASE("report buckets are cumulative") {
  std::vector<std::pair<Word, Word>> pairs = {
      {w("abcd"), w("abcd")}, {w("abcX"), w("abcd")}, {w("abXX"), w("abcd")},
      {w("aXXX"), w("abcd")}, {w("XXXX"), w("abcd")}};
  const auto r = report(pairs);
  CHECK(r.n == 5);
  CHECK(r.rates[0] == doctest::Approx(0.2));
  CHECK(r.rates[1] == doctest::Approx(0.4));
  CHECK(r.rates[2] == doctest::Approx(0.6));
  CHECK(r.rates[3] == doctest::Approx(0.8));
  CHECK(r.rates[4] == doctest::Approx(1.0));
  CHECK(r.average == doctest::Approx(2.0));
  CHECK(r.average_normalized == doctest::Approx(0.5));
}

TEST_CASE("report edge cases") {
  std::vector<std::pair<Word, Word>> exact = {{w("a"), w("a")}, {w("bc"), w("bc")}};
  const auto r = report(exact);
  for (double rate : r.rates) CHECK(rate == 1.0);
  CHECK(r.average == 0.0);
  CHECK(r.average_normalized == 0.0);

  std::vector<std::pair<Word, Word>> far = {{w("abcdefg"), w("hijklmn")}};
  for (double rate : report(far).rates) CHECK(rate == 0.0);
  CHECK_THROWS_AS(report(std::vector<std::pair<Word, Word>>{}), ValidationError);
}

TEST_CASE("report buckets are monotone and count exact pairs") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::pair<Word, Word>> pairs;
    std::size_t exact = 0;
    for (int i = 0; i < 20; ++i) {
      auto gold = random_tokens(rng, 6);
      if (gold.empty()) gold.push_back("a");
      auto pred = rng() % 2 ? gold : random_tokens(rng, 6);
      if (pred == gold) ++exact;
      pairs.emplace_back(Word{pred, Mode::Phonetic}, Word{gold, Mode::Phonetic});
    }
    const auto r = report(pairs);
    CHECK(r.counts[0] == exact);
    for (std::size_t k = 1; k < kBuckets; ++k) CHECK(r.rates[k] >= r.rates[k - 1]);
    for (double rate : r.rates) CHECK((rate >= 0.0 && rate <= 1.0));
  }
}

TEST_CASE("report renders as JSON and as a table") {
  std::vector<std::pair<Word, Word>> pairs = {{w("a"), w("a")}};
  const auto json = report_json(report(pairs));
  CHECK(json.find("\"exact\": 1.0") != std::string::npos);
  const auto table = report_table(report(pairs), "test");
  CHECK(table.find("Avg, norm") != std::string::npos);
  CHECK(table.find("100.0%") != std::string::npos);
}

TEST_CASE("align examples") {
  const auto s = align(w("abc"), w("adc"));
  REQUIRE(s.size() == 3);
  CHECK(s[0] == EditOp{EditOp::Kind::Match, "a", "a"});
  CHECK(s[1] == EditOp{EditOp::Kind::Substitute, "b", "d"});
  CHECK(s[2] == EditOp{EditOp::Kind::Match, "c", "c"});

  for (const auto& op : align(w("lactem"), w("lactem"))) CHECK(op.kind == EditOp::Kind::Match);
}

TEST_CASE("align scripts are minimal and replay to the target") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_tokens(rng, 12), b = random_tokens(rng, 12);
    const auto script = align(a, b);
    CHECK(script_cost(script) == edit_distance(a, b));
    CHECK(apply_script(a, script) == b);
  }
}

TEST_CASE("apply_script rejects a script for another source") {
  const auto script = align(w("abc"), w("abd"));
  CHECK_THROWS_AS(apply_script(w("xbc").symbols, script), ValidationError);
}

TEST_CASE("substitution matrix") {
  std::vector<std::pair<Word, Word>> none = {{w("abc"), w("abc")}};
  CHECK(substitution_matrix(none, std::nullopt, false).empty());

  std::vector<std::pair<Word, Word>> three = {
      {w("pe"), w("pE")}, {w("lek"), w("lEk")}, {w("se"), w("sE")}};
  const auto m = substitution_matrix(three, std::nullopt, false);
  REQUIRE(m.size() == 1);
  CHECK(m.at({"E", "e"}) == 3);

  std::vector<std::pair<Word, Word>> mixed = {
      {w("pe"), w("pE")}, {w("pe"), w("pE")}, {w("po"), w("pU")}, {w("ta"), w("pa")}};
  const auto all = substitution_matrix(mixed, std::nullopt, false);
  CHECK(all.size() == 3);
  const auto dropped = substitution_matrix(mixed, std::nullopt, true);
  REQUIRE(dropped.size() == 1);
  CHECK(dropped.at({"E", "e"}) == 2);

  const std::set<Symbol> vowels = {"a", "e", "i", "o", "u", "E", "I", "O", "U"};
  const auto filtered = substitution_matrix(mixed, vowels, false);
  CHECK(filtered.size() == 2);
  CHECK(substitution_csv(filtered) == "gold,pred,count\nE,e,2\nU,o,1\n");
}
