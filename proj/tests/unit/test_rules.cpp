// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <functional>
#include <map>
#include <random>

#include "protolens/error.hpp"
#include "protolens/rules.hpp"

using namespace protolens;
using namespace protolens::rules;
using corpus::Language;
using corpus::Mode;

namespace {

Word w(const char* s) { return Word::from_string(s, Mode::Phonetic); }

const SoundRule& rule(const char* key) {
  const auto* r = find_rule(builtin_rules(), key);
  REQUIRE(r != nullptr);
  return *r;
}

/// Every way to write `latin` as a concatenation of unit gold forms.
void segmentations(const std::vector<Symbol>& latin, std::size_t pos,
                   const std::vector<const SoundRule*>& units,
                   std::vector<const SoundRule*>& current,
                   std::vector<std::vector<const SoundRule*>>& out) {
  if (pos == latin.size()) {
    out.push_back(current);
    return;
  }
  for (const auto* u : units) {
    const auto& g = u->gold.symbols;
    if (pos + g.size() <= latin.size() &&
        std::equal(g.begin(), g.end(), latin.begin() + static_cast<std::ptrdiff_t>(pos))) {
      current.push_back(u);
      segmentations(latin, pos + g.size(), units, current, out);
      current.pop_back();
    }
  }
}

}  // namespace

TEST_CASE("the built-in table has 33 rules") {
  const auto& rs = builtin_rules();
  CHECK(rs.size() == 33);
  std::size_t yes = 0;
  for (const auto& r : rs) {
    CHECK(r.gold.mode == Mode::Phonetic);
    CHECK_FALSE(r.focus.empty());
    yes += r.expected_correct ? 1 : 0;
  }
  CHECK(yes == 22);
}

TEST_CASE("the word-initial /j/ rule") {
  const auto& r = rule("/j/ word initial");
  CHECK(r.reflexes[0]->str() == "Za");
  CHECK(r.reflexes[1]->str() == "Za");
  CHECK(r.reflexes[2]->str() == "dZa");
  CHECK(r.reflexes[3]->str() == "xa");
  CHECK(r.reflexes[4]->str() == "Za");
  CHECK(r.gold.str() == "ja");
  CHECK(find_rule(builtin_rules(), r.id) == &r);
  CHECK(find_rule(builtin_rules(), "/zz/ nowhere") == nullptr);
}

TEST_CASE("the kt before nasals rule lacks a Romanian reflex") {
  const auto& r = rule("/kt/ medially, before nasals");
  CHECK_FALSE(r.reflexes[0].has_value());
  CHECK(r.reflexes[1]->str() == "anta");
}

TEST_CASE("scoring the published predictions") {
  CHECK(score_rule_prediction(rule("/w/"), w("wam")).passed);
  CHECK_FALSE(score_rule_prediction(rule("/aI/"), w("pEm")).passed);
}

TEST_CASE("the reference column reproduces the table's verdicts") {
  for (const auto& r : builtin_rules()) {
    REQUIRE(r.reference_prediction.has_value());
    CAPTURE(r.id);
    CHECK(score_rule_prediction(r, *r.reference_prediction).passed == r.expected_correct);
  }
}

TEST_CASE("echoing gold passes every rule") {
  std::vector<RuleOutcome> outcomes;
  for (const auto& r : builtin_rules()) {
    outcomes.push_back(score_rule_prediction(r, r.gold));
    CHECK(outcomes.back().passed);
    CHECK(outcomes.back().focus_found_at.has_value());
  }
  CHECK(pass_count(outcomes) == 33);
  const auto json = rule_report_json(builtin_rules(), outcomes);
  CHECK(json.find("\"passed\": 33") != std::string::npos);
}

TEST_CASE("trailing material never changes a verdict on gold") {
  std::mt19937_64 rng(21);
  const std::vector<Symbol> alphabet = {"m", "E", "U", "s", "a", "p", "d"};
  for (const auto& r : builtin_rules()) {
    for (int trial = 0; trial < 10; ++trial) {
      auto pred = r.gold;
      const std::size_t extra = 1 + rng() % 4;
      for (std::size_t i = 0; i < extra; ++i) pred.symbols.push_back(alphabet[rng() % alphabet.size()]);
      CAPTURE(pred.str());
      const auto outcome = score_rule_prediction(r, pred);
      CHECK(outcome.passed);
    }
  }
}

TEST_CASE("focus position and failures") {
  const auto& pl = rule("/pl/ word initial");
  const auto ok = score_rule_prediction(pl, w("plam"));
  CHECK(ok.passed);
  CHECK(ok.focus_found_at == std::size_t{0});
  const auto split = score_rule_prediction(pl, w("pEla"));
  CHECK_FALSE(split.passed);
  CHECK_FALSE(split.focus_found_at.has_value());
  CHECK_FALSE(score_rule_prediction(pl, w("la")).passed);
  // A repeated focus-final symbol can align either way; one way keeps the
  // focus intact.
  CHECK(score_rule_prediction(rule("/aU/"), w("paUU")).passed);
  CHECK(score_rule_prediction(rule("/aU/"), w("spaU")).focus_found_at == std::size_t{2});
  CHECK_FALSE(score_rule_prediction(pl, Word{{}, Mode::Phonetic}).passed);
}

TEST_CASE("the rule test set") {
  const auto ds = make_rule_testset(builtin_rules());
  REQUIRE(ds.size() == 33);
  const auto& kt = ds[3];
  CHECK(kt.latin.str() == "ankta");
  CHECK_FALSE(kt.daughter(Language::Romanian).has_value());

  const auto vocab = corpus::build_vocab(ds);
  for (const auto& cs : ds) {
    const auto ex = corpus::encode_example(cs, vocab);
    std::vector<corpus::SymbolId> target(ex.target_ids.begin(), ex.target_ids.end() - 1);
    CHECK(corpus::decode_ids(target, vocab, Mode::Phonetic) == cs.latin);
  }
}

TEST_CASE("rule files are validated") {
  const std::string header =
      "# protolens-rules\tversion 1\n"
      "id\tfocus\tenvironment\tRomanian\tFrench\tItalian\tSpanish\tPortuguese\tgold\t"
      "reference_prediction\texpected_correct\n";
  const auto ok = parse_rules(header + "x1\tb\t-\tba\tba\tba\tba\tba\tba\tbam\tyes\n");
  REQUIRE(ok.size() == 1);
  CHECK(ok[0].environment.empty());
  CHECK(ok[0].label() == "/b/");

  try {
    parse_rules(header + "x1\tb\t-\tba\tba\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_rules("id\tfocus\n"), ParseError);
  CHECK_THROWS_AS(parse_rules(header + "x1\tb\t-\tba\tba\tba\tba\tba\tba\tbam\tmaybe\n"),
                  ParseError);
}

TEST_CASE("synthetic units map each gold form to one reflex tuple") {
  const auto units = synthetic_units(builtin_rules());
  CHECK(units.size() == 25);
  std::map<std::vector<Symbol>, const SoundRule*> by_gold;
  for (const auto* u : units) {
    CHECK(u->gold.size() <= 3);
    for (const auto& r : u->reflexes) CHECK(r.has_value());
    const auto [it, fresh] = by_gold.emplace(u->gold.symbols, u);
    if (!fresh) CHECK(it->second->reflexes == u->reflexes);
  }
}

TEST_CASE("synthetic words re-apply their units") {
  const auto units = synthetic_units(builtin_rules());
  const auto ds = generate_synthetic_corpus(builtin_rules(), 300, 5);
  REQUIRE(ds.size() == 300);
  std::map<std::string, std::array<std::optional<Word>, 5>> seen;
  for (const auto& cs : ds) {
    CHECK(cs.latin.mode == Mode::Phonetic);
    CHECK(cs.latin.size() <= 9);
    std::vector<std::vector<const SoundRule*>> segs;
    std::vector<const SoundRule*> current;
    segmentations(cs.latin.symbols, 0, units, current, segs);
    bool reproduced = false;
    for (const auto& seg : segs) {
      if (seg.empty() || seg.size() > 3) continue;
      bool all = true;
      for (std::size_t l = 0; l < 5; ++l) {
        std::vector<Symbol> rebuilt;
        for (const auto* u : seg) {
          const auto& s = u->reflexes[l]->symbols;
          rebuilt.insert(rebuilt.end(), s.begin(), s.end());
        }
        all = all && cs.daughters[l].has_value() && cs.daughters[l]->symbols == rebuilt;
      }
      reproduced = reproduced || all;
    }
    CAPTURE(cs.latin.str());
    CHECK(reproduced);
    const auto [it, fresh] = seen.emplace(cs.latin.str(), cs.daughters);
    if (!fresh) CHECK(it->second == cs.daughters);
  }
}

TEST_CASE("synthetic generation is seeded") {
  const auto a = generate_synthetic_corpus(builtin_rules(), 1, 0);
  const auto b = generate_synthetic_corpus(builtin_rules(), 1, 0);
  REQUIRE(a.size() == 1);
  CHECK(corpus::serialize_dataset(a) == corpus::serialize_dataset(b));
  CHECK(corpus::serialize_dataset(generate_synthetic_corpus(builtin_rules(), 50, 1)) !=
        corpus::serialize_dataset(generate_synthetic_corpus(builtin_rules(), 50, 2)));
  CHECK_THROWS_AS(generate_synthetic_corpus(builtin_rules(), 0, 0), ValidationError);
}
