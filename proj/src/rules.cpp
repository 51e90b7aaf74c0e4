// SPDX-License-Identifier: Apache-2.0
#include "protolens/rules.hpp"

#include <algorithm>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "protolens/error.hpp"
#include "protolens/metrics.hpp"
#include "rules_resource.hpp"

namespace protolens::rules {

using corpus::Mode;

namespace {

constexpr std::size_t kColumns = 11;
constexpr std::size_t kMaxUnitLength = 3;

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cells.emplace_back(line.substr(start, tab == std::string_view::npos ? line.npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return cells;
}

std::optional<std::size_t> find_subsequence(const std::vector<Symbol>& hay,
                                            const std::vector<Symbol>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return std::nullopt;
  const auto it = std::search(hay.begin(), hay.end(), needle.begin(), needle.end());
  if (it == hay.end()) return std::nullopt;
  return static_cast<std::size_t>(it - hay.begin());
}

Word concat(const Word& a, const Word& b) {
  Word out = a;
  out.symbols.insert(out.symbols.end(), b.symbols.begin(), b.symbols.end());
  return out;
}

}  // namespace

std::string SoundRule::label() const {
  std::string out = "/";
  for (const auto& s : focus) out += s;
  out += "/";
  if (!environment.empty()) out += " " + environment;
  return out;
}

std::vector<SoundRule> parse_rules(std::string_view tsv) {
  std::vector<SoundRule> rules;
  std::size_t line_number = 0;
  bool seen_version = false, seen_header = false;
  std::size_t pos = 0;
  while (pos <= tsv.size()) {
    auto nl = tsv.find('\n', pos);
    if (nl == std::string_view::npos) nl = tsv.size();
    std::string_view line = tsv.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    if (!seen_version) {
      const auto cells = split_tabs(line);
      if (cells.size() != 2 || cells[0] != "# protolens-rules") {
        throw ParseError(line_number, "expected '# protolens-rules<TAB>version N'");
      }
      if (cells[1] != "version " + std::to_string(kRulesFormatVersion)) {
        throw ParseError(line_number, "unsupported rule table " + cells[1]);
      }
      seen_version = true;
      continue;
    }
    const auto cells = split_tabs(line);
    if (cells.size() != kColumns) {
      throw ParseError(line_number, "expected " + std::to_string(kColumns) + " columns, got " +
                                        std::to_string(cells.size()));
    }
    if (!seen_header) {
      if (cells[0] != "id") throw ParseError(line_number, "missing column header");
      seen_header = true;
      continue;
    }
    SoundRule r;
    try {
      r.id = cells[0];
      r.focus = corpus::split_symbols(cells[1]);
      if (r.focus.empty()) throw ValidationError("empty focus");
      r.environment = cells[2] == "-" ? "" : cells[2];
      for (std::size_t d = 0; d < corpus::kNumDaughters; ++d) {
        if (cells[3 + d] != "-") r.reflexes[d] = Word::from_string(cells[3 + d], Mode::Phonetic);
      }
      r.gold = Word::from_string(cells[8], Mode::Phonetic);
      if (cells[9] != "-") r.reference_prediction = Word::from_string(cells[9], Mode::Phonetic);
    } catch (const ValidationError& e) {
      throw ParseError(line_number, e.what());
    }
    if (cells[10] == "yes") {
      r.expected_correct = true;
    } else if (cells[10] != "no") {
      throw ParseError(line_number, "expected_correct must be yes or no");
    }
    if (std::none_of(r.reflexes.begin(), r.reflexes.end(), [](const auto& w) { return w.has_value(); })) {
      throw ParseError(line_number, "rule " + r.id + " has no reflexes");
    }
    if (!find_subsequence(r.gold.symbols, r.focus)) {
      throw ParseError(line_number, "rule " + r.id + ": focus does not occur in the gold form");
    }
    rules.push_back(std::move(r));
  }
  if (!seen_header) throw ParseError(line_number, "rule table has no header");
  return rules;
}

const std::vector<SoundRule>& builtin_rules() {
  static const std::vector<SoundRule> rules = parse_rules(detail::kBuiltinRulesTsv);
  return rules;
}

const SoundRule* find_rule(std::span<const SoundRule> rules, std::string_view key) {
  for (const auto& r : rules) {
    if (r.id == key || r.label() == key) return &r;
  }
  return nullptr;
}

corpus::Dataset make_rule_testset(std::span<const SoundRule> rules) {
  corpus::Dataset ds;
  ds.reserve(rules.size());
  for (const auto& r : rules) {
    corpus::CognateSet cs;
    cs.daughters = r.reflexes;
    cs.latin = r.gold;
    ds.push_back(std::move(cs));
  }
  return ds;
}

RuleOutcome score_rule_prediction(const SoundRule& rule, const Word& prediction) {
  RuleOutcome out;
  out.rule_id = rule.id;
  out.prediction = prediction;
  const auto start = find_subsequence(rule.gold.symbols, rule.focus);
  if (!start) return out;
  const std::span<const Symbol> gold = rule.gold.symbols, pred = prediction.symbols;
  const std::size_t k = rule.focus.size();
  const std::size_t best = metrics::edit_distance(gold, pred);
  const auto gold_before = gold.first(*start), gold_after = gold.subspan(*start + k);
  for (std::size_t p = 0; p + k <= pred.size(); ++p) {
    if (!std::equal(rule.focus.begin(), rule.focus.end(), pred.begin() + static_cast<std::ptrdiff_t>(p))) {
      continue;
    }
    // Some optimal alignment matches the focus onto pred[p, p + k).
    if (metrics::edit_distance(gold_before, pred.first(p)) +
            metrics::edit_distance(gold_after, pred.subspan(p + k)) ==
        best) {
      out.passed = true;
      out.focus_found_at = p;
      break;
    }
  }
  return out;
}

std::size_t pass_count(std::span<const RuleOutcome> outcomes) {
  return static_cast<std::size_t>(
      std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.passed; }));
}

std::string rule_report_json(std::span<const SoundRule> rules,
                             std::span<const RuleOutcome> outcomes) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::size_t agree = 0, reference_correct = 0;
  for (const auto& o : outcomes) {
    const auto* r = find_rule(rules, o.rule_id);
    nlohmann::ordered_json row;
    row["id"] = o.rule_id;
    row["label"] = r ? r->label() : "";
    row["gold"] = r ? r->gold.str() : "";
    row["prediction"] = o.prediction.str();
    row["passed"] = o.passed;
    row["focus_found_at"] = o.focus_found_at ? nlohmann::ordered_json(*o.focus_found_at)
                                             : nlohmann::ordered_json(nullptr);
    if (r) {
      row["reference_prediction"] =
          r->reference_prediction ? r->reference_prediction->str() : std::string();
      row["reference_correct"] = r->expected_correct;
      if (r->expected_correct) ++reference_correct;
      if (r->expected_correct == o.passed) ++agree;
    }
    rows.push_back(std::move(row));
  }
  nlohmann::ordered_json j;
  j["format"] = "protolens-rule-report";
  j["version"] = 1;
  j["total"] = outcomes.size();
  j["passed"] = pass_count(outcomes);
  j["reference_passed"] = reference_correct;
  j["agreement_with_reference"] = agree;
  j["rules"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::vector<const SoundRule*> synthetic_units(std::span<const SoundRule> rules) {
  std::map<std::vector<std::string>, std::vector<const SoundRule*>> by_reflexes;
  for (const auto& r : rules) {
    if (r.gold.size() > kMaxUnitLength) continue;
    if (std::any_of(r.reflexes.begin(), r.reflexes.end(), [](const auto& w) { return !w; })) {
      continue;
    }
    std::vector<std::string> key;
    for (const auto& w : r.reflexes) key.push_back(w->str());
    by_reflexes[key].push_back(&r);
  }
  std::vector<const SoundRule*> units;
  for (const auto& r : rules) {
    for (const auto& [key, group] : by_reflexes) {
      if (std::find(group.begin(), group.end(), &r) == group.end()) continue;
      const bool unique = std::all_of(group.begin(), group.end(),
                                      [&](const SoundRule* o) { return o->gold == r.gold; });
      if (unique) units.push_back(&r);
    }
  }
  return units;
}

corpus::Dataset generate_synthetic_corpus(std::span<const SoundRule> rules, std::size_t n,
                                          std::uint64_t seed) {
  if (n == 0) throw ValidationError("synthetic corpus size must be at least 1");
  const auto units = synthetic_units(rules);
  if (units.empty()) throw ValidationError("no rule qualifies as a synthetic unit");
  std::mt19937_64 rng(seed);
  corpus::Dataset ds;
  ds.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t count = 1 + static_cast<std::size_t>(rng() % 3);
    corpus::CognateSet cs;
    cs.latin.mode = Mode::Phonetic;
    for (std::size_t d = 0; d < corpus::kNumDaughters; ++d) cs.daughters[d] = Word{{}, Mode::Phonetic};
    for (std::size_t u = 0; u < count; ++u) {
      const auto* unit = units[static_cast<std::size_t>(rng() % units.size())];
      cs.latin = concat(cs.latin, unit->gold);
      for (std::size_t d = 0; d < corpus::kNumDaughters; ++d) {
        cs.daughters[d] = concat(*cs.daughters[d], *unit->reflexes[d]);
      }
    }
    ds.push_back(std::move(cs));
  }
  return ds;
}

}  // namespace protolens::rules
