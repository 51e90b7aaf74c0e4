// SPDX-License-Identifier: Apache-2.0
//
// Cognate datasets: parsing, dataset variants, splitting, the shared symbol
// vocabulary and the multi-source input encoding consumed by the model.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace protolens::corpus {

enum class Language : std::uint8_t {
  Romanian = 0,
  French = 1,
  Italian = 2,
  Spanish = 3,
  Portuguese = 4,
  Latin = 5,
};

inline constexpr std::size_t kNumDaughters = 5;
inline constexpr std::size_t kNumLanguages = 6;

/// Daughters in the order they are concatenated into the encoder input.
inline constexpr std::array<Language, kNumDaughters> kDaughterOrder = {
    Language::Romanian, Language::French, Language::Italian, Language::Spanish,
    Language::Portuguese};

std::string_view language_name(Language lang);
/// Accepts full English names and two-letter codes (ro, fr, it, es, pt, la),
/// case-insensitively.
std::optional<Language> parse_language(std::string_view name);

enum class Mode : std::uint8_t { Orthographic, Phonetic };

std::string_view mode_name(Mode mode);

/// One Unicode scalar value, UTF-8 encoded.
using Symbol = std::string;

/// Splits UTF-8 text into one Symbol per scalar. Throws ValidationError on
/// malformed UTF-8.
std::vector<Symbol> split_symbols(std::string_view text);

struct Word {
  std::vector<Symbol> symbols;
  Mode mode = Mode::Orthographic;

  std::size_t size() const { return symbols.size(); }
  std::string str() const;
  /// Tokenizes `text`; throws ValidationError if it is empty.
  static Word from_string(std::string_view text, Mode mode);

  friend bool operator==(const Word& a, const Word& b) {
    return a.symbols == b.symbols;
  }
};

struct CognateSet {
  std::array<std::optional<Word>, kNumDaughters> daughters;
  Word latin;

  const std::optional<Word>& daughter(Language lang) const;
  std::optional<Word>& daughter(Language lang);
  std::size_t present_count() const;

  friend bool operator==(const CognateSet& a, const CognateSet& b) {
    return a.daughters == b.daughters && a.latin == b.latin;
  }
};

using Dataset = std::vector<CognateSet>;

/// Throws ValidationError unless the set has at least one daughter and a
/// non-empty Latin form.
void validate(const CognateSet& set);

enum class DatasetVariant : std::uint8_t {
  Orthographic,
  Phonetic,
  OrthographicVowelLength,
  PhoneticVowelLength,
  PhoneticNoContrast,
};

std::string_view variant_name(DatasetVariant v);
/// Accepts variant_name() spellings and the short forms orth, ipa,
/// orth_length, ipa_length and no_contrast.
std::optional<DatasetVariant> parse_variant(std::string_view name);
/// The mode a variant must be applied to.
Mode variant_mode(DatasetVariant v);

/// Length marks accepted in input files. Vowel-length variants normalise to
/// the first.
inline constexpr std::string_view kLengthMark = "ː";
inline constexpr std::string_view kAsciiLengthMark = ":";

// ---------------------------------------------------------------------------
// TSV I/O
// ---------------------------------------------------------------------------

/// Parses the six-column TSV format (Romanian, French, Italian, Spanish,
/// Portuguese, Latin). "-" marks a missing daughter. Blank lines are skipped,
/// as is an optional header row whose first cell is "Romanian".
Dataset parse_dataset(std::string_view text, Mode mode);

/// Parses a single row. `line_number` is only used in error messages.
CognateSet parse_row(std::string_view line, Mode mode, std::size_t line_number);

/// Parses a reconstruction request: five daughter columns, with an optional
/// sixth Latin column that is ignored. The returned set has an empty Latin.
CognateSet parse_query_row(std::string_view line, Mode mode,
                           std::size_t line_number);

std::string serialize_dataset(const Dataset& ds);

Dataset apply_variant(const Dataset& ds, DatasetVariant v);

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct SplitRatios {
  double train = 0.80;
  double dev = 0.08;
  double test = 0.12;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
};

/// dev and test get floor(n * ratio); the remainder goes to train.
SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios);

struct Split {
  Dataset train;
  Dataset dev;
  Dataset test;
};

Split split(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Vocabulary and encoding
// ---------------------------------------------------------------------------

using SymbolId = std::int32_t;

class Vocabulary {
 public:
  static constexpr SymbolId kPad = 0;
  static constexpr SymbolId kBos = 1;
  static constexpr SymbolId kEos = 2;
  static constexpr SymbolId kSep = 3;
  static constexpr SymbolId kMissing = 4;
  static constexpr SymbolId kUnk = 5;
  static constexpr SymbolId kNumSpecials = 6;
  static constexpr int kFormatVersion = 1;

  Vocabulary();

  /// Adds `sym` if new; returns its id either way.
  SymbolId add(const Symbol& sym);
  std::optional<SymbolId> find(const Symbol& sym) const;
  /// Throws VocabularyError naming the symbol when absent.
  SymbolId id(const Symbol& sym) const;
  const Symbol& symbol(SymbolId id) const;

  std::size_t size() const { return symbols_.size(); }
  static bool is_special(SymbolId id) { return id >= 0 && id < kNumSpecials; }

  std::string to_json() const;
  static Vocabulary from_json(std::string_view text);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.symbols_ == b.symbols_;
  }

 private:
  std::vector<Symbol> symbols_;
  std::unordered_map<Symbol, SymbolId> index_;
};

/// Every symbol of every daughter and Latin form, in first-occurrence order
/// (daughters in canonical order before the Latin form of each set).
Vocabulary build_vocab(const Dataset& ds);

struct EncodedExample {
  std::vector<SymbolId> input_ids;
  std::vector<std::int32_t> input_langs;
  std::vector<SymbolId> target_ids;  // Latin ids followed by EOS
};

enum class OovPolicy : std::uint8_t { Error, MapToUnk };

/// Concatenates the daughters in canonical order, SEP between languages,
/// a single MISSING token standing in for an absent daughter. SEP carries the
/// language of the span it closes. An empty Latin form yields an EOS-only
/// target.
EncodedExample encode_example(const CognateSet& set, const Vocabulary& vocab,
                              OovPolicy oov = OovPolicy::Error);

/// Inverse of the id mapping, dropping specials.
Word decode_ids(const std::vector<SymbolId>& ids, const Vocabulary& vocab,
                Mode mode);

/// Per-language symbol inventories in first-occurrence order.
using Inventory = std::array<std::vector<Symbol>, kNumLanguages>;
Inventory collect_inventory(const Dataset& ds);

}  // namespace protolens::corpus
