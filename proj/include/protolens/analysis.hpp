// SPDX-License-Identifier: Apache-2.0
//
// Post-hoc analyses of a trained model: per-language symbol representations
// with Ward clustering, and most-attended-language summaries of decoding
// traces.
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "protolens/checkpoint.hpp"
#include "protolens/corpus.hpp"
#include "protolens/model.hpp"

namespace protolens::analysis {

struct Embeddings {
  std::vector<corpus::Symbol> labels;
  Eigen::MatrixXd matrix;  // one row per label
};

/// W E[c] + U L[lang] for every symbol attested in `lang` in the training
/// data, in inventory order.
Embeddings extract_embeddings(const model::Checkpoint& ckpt, corpus::Language lang);
/// Same, with the language given by name or code. Throws ValidationError
/// for an unknown language.
Embeddings extract_embeddings(const model::Checkpoint& ckpt, std::string_view lang);

/// Header "symbol,d0,d1,...".
std::string embeddings_csv(const Embeddings& e);

struct Merge {
  std::size_t a = 0;  // cluster ids: leaves are 0..n-1, merge i creates n+i
  std::size_t b = 0;  // a < b
  double distance = 0.0;
  std::size_t size = 0;

  friend bool operator==(const Merge&, const Merge&) = default;
};

struct Dendrogram {
  std::vector<std::string> labels;
  std::vector<Merge> merges;

  std::size_t leaf_count() const { return labels.size(); }
};

/// Relative tolerance under which two linkage distances count as tied.
inline constexpr double kWardTieTolerance = 1e-12;

/// Agglomerative Ward clustering using the Lance-Williams recurrence. Each
/// step merges the closest pair; ties go to the lexicographically smallest
/// (a, b) cluster-id pair. Throws ValidationError for fewer than two rows or
/// a label count that differs from the row count.
Dendrogram ward_clustering(const Eigen::MatrixXd& points, std::vector<std::string> labels);

/// Newick with branch length = parent height - child height, leaves at
/// height 0. Labels are single-quoted when they contain Newick punctuation.
std::string to_newick(const Dendrogram& d);

std::string dendrogram_json(const Dendrogram& d);
/// Throws ValidationError on malformed input.
Dendrogram dendrogram_from_json(std::string_view text);

// ---------------------------------------------------------------------------
// Attention summaries
// ---------------------------------------------------------------------------

enum class AttentionNormalization {
  LanguageThenRow,  // divide by language frequency, then make rows sum to 1
  RowOnly,
};

using LanguageRow = std::array<double, corpus::kNumDaughters>;

/// Number of daughter-symbol input positions per language (SEP and MISSING
/// excluded) across the traces.
LanguageRow language_frequencies(std::span<const model::AttentionTrace> traces);

struct AttentionTable {
  std::vector<std::string> row_labels;
  std::vector<LanguageRow> raw;
  std::vector<LanguageRow> normalized;
  std::vector<std::size_t> sep;      // argmax fell on a separator
  std::vector<std::size_t> missing;  // argmax fell on a missing-daughter token
  std::vector<bool> zero_row;        // no daughter-symbol argmax in this row
};

struct AttentionSummary {
  AttentionTable by_position;  // rows: decoding step 0, 1, ...
  AttentionTable by_symbol;    // rows: emitted symbol, in vocabulary id order

  /// Sum of every raw, SEP and MISSING count of by_position.
  std::size_t total() const;
};

/// Per decoding step, the most-attended input position (earliest on ties)
/// credits its language in the step's row and in the emitted symbol's row.
/// Throws ValidationError for an empty trace list or an inconsistent trace.
AttentionSummary attention_summary(std::span<const model::AttentionTrace> traces,
                                   const LanguageRow& language_frequency,
                                   const corpus::Vocabulary& vocab,
                                   AttentionNormalization policy =
                                       AttentionNormalization::LanguageThenRow);

/// CSV: label, raw and normalized columns per language, sep, missing,
/// zero_row.
std::string attention_csv(const AttentionTable& t, std::string_view label_header);

}  // namespace protolens::analysis
