// SPDX-License-Identifier: Apache-2.0
//
// Edit-distance evaluation over symbol tokens, alignment scripts and
// substitution counts.
#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "protolens/corpus.hpp"

namespace protolens::metrics {

using corpus::Symbol;
using corpus::Word;

/// Levenshtein distance with unit costs.
std::size_t edit_distance(std::span<const Symbol> a, std::span<const Symbol> b);
std::size_t edit_distance(const Word& a, const Word& b);

enum class NormalizeBy { Gold, Prediction };

/// edit_distance / |gold| (or |pred|). Throws ValidationError when the
/// denominator word is empty.
double normalized_edit_distance(const Word& pred, const Word& gold,
                                NormalizeBy by = NormalizeBy::Gold);

inline constexpr std::size_t kBuckets = 5;  // distance 0, <=1, <=2, <=3, <=4

struct EditDistanceReport {
  std::size_t n = 0;
  std::array<std::size_t, kBuckets> counts{};  // cumulative: pairs with distance <= k
  std::array<double, kBuckets> rates{};        // counts / n
  double average = 0.0;
  double average_normalized = 0.0;

  double exact_rate() const { return rates[0]; }
};

/// Pairs are (prediction, gold). Throws ValidationError on an empty input.
EditDistanceReport report(std::span<const std::pair<Word, Word>> pairs,
                          NormalizeBy by = NormalizeBy::Gold);

std::string report_json(const EditDistanceReport& r);
/// Plain-text table: 0, <=1 .. <=4 as percentages, then Average and Avg, norm.
std::string report_table(const EditDistanceReport& r, const std::string& label);

struct EditOp {
  enum class Kind { Match, Substitute, Insert, Delete };
  Kind kind = Kind::Match;
  Symbol source;  // empty for Insert
  Symbol target;  // empty for Delete

  friend bool operator==(const EditOp&, const EditOp&) = default;
};

using EditScript = std::vector<EditOp>;

/// A minimum-cost script turning `source` into `target`. The traceback runs
/// from the end and prefers match, then substitute, then delete, then insert.
EditScript align(std::span<const Symbol> source, std::span<const Symbol> target);
EditScript align(const Word& source, const Word& target);

/// Number of non-match operations.
std::size_t script_cost(const EditScript& script);

/// Replays `script` on `source`. Throws ValidationError if the script does
/// not fit the source.
std::vector<Symbol> apply_script(std::span<const Symbol> source, const EditScript& script);

/// (gold symbol, predicted symbol) -> count.
using SubstitutionMatrix = std::map<std::pair<Symbol, Symbol>, std::size_t>;

/// Counts substitutions in align(gold, prediction) over (prediction, gold)
/// pairs. With a filter, both symbols must belong to it. Cells with a count
/// of one are dropped when `exclude_singletons` is set.
SubstitutionMatrix substitution_matrix(std::span<const std::pair<Word, Word>> pairs,
                                       const std::optional<std::set<Symbol>>& filter,
                                       bool exclude_singletons);

/// CSV with header "gold,pred,count".
std::string substitution_csv(const SubstitutionMatrix& m);

}  // namespace protolens::metrics
