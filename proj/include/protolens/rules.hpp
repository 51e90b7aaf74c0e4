// SPDX-License-Identifier: Apache-2.0
//
// The built-in table of Latin to Romance sound changes, the per-rule test
// set built from it, focus-based scoring of predictions and a synthetic
// corpus generator that composes rule forms into longer words.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protolens/corpus.hpp"

namespace protolens::rules {

using corpus::Symbol;
using corpus::Word;

struct SoundRule {
  std::string id;
  std::vector<Symbol> focus;   // the Latin segment the rule is about
  std::string environment;     // empty when the change is unconditioned
  std::array<std::optional<Word>, corpus::kNumDaughters> reflexes;  // canonical order
  Word gold;
  std::optional<Word> reference_prediction;  // reconstruction published with the table
  bool expected_correct = false;

  /// "/focus/ environment", e.g. "/j/ word initial".
  std::string label() const;
};

inline constexpr int kRulesFormatVersion = 1;

/// Parses a rule TSV: a "# protolens-rules<TAB>version N" line, a column
/// header, then id, focus, environment, five reflex columns, gold,
/// reference_prediction and expected_correct (yes/no). "-" marks an absent
/// reflex or an empty environment. Throws ParseError with the line number.
std::vector<SoundRule> parse_rules(std::string_view tsv);

/// The 33 built-in rules (phonetic mode).
const std::vector<SoundRule>& builtin_rules();

/// Looks a rule up by id or label.
const SoundRule* find_rule(std::span<const SoundRule> rules, std::string_view key);

/// One cognate set per rule: reflexes as daughters, gold as Latin.
corpus::Dataset make_rule_testset(std::span<const SoundRule> rules);

struct RuleOutcome {
  std::string rule_id;
  Word prediction;
  bool passed = false;
  /// Prediction index of the first focus symbol; set exactly when passed.
  std::optional<std::size_t> focus_found_at;
};

/// The rule passes when some minimum-cost alignment of the prediction
/// against the gold form matches every symbol of the focus, taken at its
/// first occurrence in the gold form, onto consecutive prediction symbols.
/// Material inserted elsewhere is ignored. focus_found_at is the earliest
/// such prediction index.
RuleOutcome score_rule_prediction(const SoundRule& rule, const Word& prediction);

std::size_t pass_count(std::span<const RuleOutcome> outcomes);

/// JSON report with per-rule outcomes, the pass count and agreement with
/// the table's reference column.
std::string rule_report_json(std::span<const SoundRule> rules,
                             std::span<const RuleOutcome> outcomes);

/// Rules usable as synthetic word units: every reflex present, a gold form
/// of at most three symbols, and a reflex tuple that no rule with a
/// different gold form shares.
std::vector<const SoundRule*> synthetic_units(std::span<const SoundRule> rules);

/// n pseudo-words of one to three units each. Latin is the concatenation of
/// the unit gold forms; each daughter is the concatenation of the units'
/// reflexes in that language. Deterministic under `seed`. Throws
/// ValidationError when n is zero or no rule qualifies as a unit.
corpus::Dataset generate_synthetic_corpus(std::span<const SoundRule> rules, std::size_t n,
                                          std::uint64_t seed);

}  // namespace protolens::rules
