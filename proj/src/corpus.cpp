// SPDX-License-Identifier: Apache-2.0
#include "protolens/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "protolens/error.hpp"

namespace protolens::corpus {

namespace {

constexpr std::array<std::string_view, kNumLanguages> kLanguageNames = {
    "Romanian", "French", "Italian", "Spanish", "Portuguese", "Latin"};
constexpr std::array<std::string_view, kNumLanguages> kLanguageCodes = {
    "ro", "fr", "it", "es", "pt", "la"};

constexpr std::array<std::string_view, Vocabulary::kNumSpecials> kSpecialNames = {
    "<pad>", "<bos>", "<eos>", "<sep>", "<missing>", "<unk>"};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cells;
}

std::optional<Word> parse_daughter_cell(std::string_view cell, Mode mode,
                                        std::size_t line_number,
                                        Language lang) {
  if (cell == "-") return std::nullopt;
  if (cell.empty()) {
    throw ParseError(line_number, "empty " + std::string(language_name(lang)) +
                                      " cell (use '-' for a missing cognate)");
  }
  try {
    return Word::from_string(cell, mode);
  } catch (const ValidationError& e) {
    throw ParseError(line_number, e.what());
  }
}

bool is_header(const std::vector<std::string_view>& cells) {
  return !cells.empty() && lower(cells[0]) == "romanian";
}

}  // namespace

std::string_view language_name(Language lang) {
  return kLanguageNames[static_cast<std::size_t>(lang)];
}

std::optional<Language> parse_language(std::string_view name) {
  const auto key = lower(name);
  for (std::size_t i = 0; i < kNumLanguages; ++i) {
    if (key == lower(kLanguageNames[i]) || key == kLanguageCodes[i]) {
      return static_cast<Language>(i);
    }
  }
  return std::nullopt;
}

std::string_view mode_name(Mode mode) {
  return mode == Mode::Orthographic ? "orthographic" : "phonetic";
}

std::vector<Symbol> split_symbols(std::string_view text) {
  std::vector<Symbol> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    if (lead < 0x80) {
      len = 1;
    } else if ((lead & 0xE0) == 0xC0 && lead >= 0xC2) {
      len = 2;
    } else if ((lead & 0xF0) == 0xE0) {
      len = 3;
    } else if ((lead & 0xF8) == 0xF0 && lead <= 0xF4) {
      len = 4;
    } else {
      throw ValidationError("malformed UTF-8 at byte " + std::to_string(i));
    }
    if (i + len > text.size()) {
      throw ValidationError("truncated UTF-8 sequence at byte " + std::to_string(i));
    }
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
        throw ValidationError("malformed UTF-8 at byte " + std::to_string(i + k));
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::string Word::str() const {
  std::string out;
  for (const auto& s : symbols) out += s;
  return out;
}

Word Word::from_string(std::string_view text, Mode mode) {
  Word w{split_symbols(text), mode};
  if (w.symbols.empty()) throw ValidationError("empty word");
  return w;
}

const std::optional<Word>& CognateSet::daughter(Language lang) const {
  return daughters.at(static_cast<std::size_t>(lang));
}

std::optional<Word>& CognateSet::daughter(Language lang) {
  return daughters.at(static_cast<std::size_t>(lang));
}

std::size_t CognateSet::present_count() const {
  return static_cast<std::size_t>(std::count_if(
      daughters.begin(), daughters.end(), [](const auto& d) { return d.has_value(); }));
}

void validate(const CognateSet& set) {
  if (set.present_count() == 0) {
    throw ValidationError("cognate set has no daughter words");
  }
  if (set.latin.symbols.empty()) {
    throw ValidationError("cognate set has an empty Latin form");
  }
}

// ---------------------------------------------------------------------------

std::string_view variant_name(DatasetVariant v) {
  switch (v) {
    case DatasetVariant::Orthographic: return "orthographic";
    case DatasetVariant::Phonetic: return "phonetic";
    case DatasetVariant::OrthographicVowelLength: return "orthographic_vowel_length";
    case DatasetVariant::PhoneticVowelLength: return "phonetic_vowel_length";
    case DatasetVariant::PhoneticNoContrast: return "phonetic_no_contrast";
  }
  return "?";
}

std::optional<DatasetVariant> parse_variant(std::string_view name) {
  for (auto v : {DatasetVariant::Orthographic, DatasetVariant::Phonetic,
                 DatasetVariant::OrthographicVowelLength,
                 DatasetVariant::PhoneticVowelLength,
                 DatasetVariant::PhoneticNoContrast}) {
    if (name == variant_name(v)) return v;
  }
  if (name == "orth") return DatasetVariant::Orthographic;
  if (name == "ipa") return DatasetVariant::Phonetic;
  if (name == "orth_length") return DatasetVariant::OrthographicVowelLength;
  if (name == "ipa_length") return DatasetVariant::PhoneticVowelLength;
  if (name == "no_contrast") return DatasetVariant::PhoneticNoContrast;
  return std::nullopt;
}

Mode variant_mode(DatasetVariant v) {
  switch (v) {
    case DatasetVariant::Orthographic:
    case DatasetVariant::OrthographicVowelLength:
      return Mode::Orthographic;
    default:
      return Mode::Phonetic;
  }
}

// ---------------------------------------------------------------------------

CognateSet parse_row(std::string_view line, Mode mode, std::size_t line_number) {
  const auto cells = split_tabs(line);
  if (cells.size() != kNumDaughters + 1) {
    throw ParseError(line_number, "expected 6 tab-separated columns, found " +
                                      std::to_string(cells.size()));
  }
  CognateSet set;
  for (std::size_t i = 0; i < kNumDaughters; ++i) {
    set.daughters[i] = parse_daughter_cell(cells[i], mode, line_number, kDaughterOrder[i]);
  }
  if (cells[kNumDaughters].empty() || cells[kNumDaughters] == "-") {
    throw ValidationError("line " + std::to_string(line_number) + ": empty Latin cell");
  }
  try {
    set.latin = Word::from_string(cells[kNumDaughters], mode);
  } catch (const ValidationError& e) {
    throw ParseError(line_number, e.what());
  }
  if (set.present_count() == 0) {
    throw ValidationError("line " + std::to_string(line_number) +
                          ": no daughter words present");
  }
  return set;
}

CognateSet parse_query_row(std::string_view line, Mode mode, std::size_t line_number) {
  const auto cells = split_tabs(line);
  if (cells.size() != kNumDaughters && cells.size() != kNumDaughters + 1) {
    throw ParseError(line_number, "expected 5 or 6 tab-separated columns, found " +
                                      std::to_string(cells.size()));
  }
  CognateSet set;
  set.latin.mode = mode;
  for (std::size_t i = 0; i < kNumDaughters; ++i) {
    set.daughters[i] = parse_daughter_cell(cells[i], mode, line_number, kDaughterOrder[i]);
  }
  if (set.present_count() == 0) {
    throw ValidationError("line " + std::to_string(line_number) +
                          ": no daughter words present");
  }
  return set;
}

Dataset parse_dataset(std::string_view text, Mode mode) {
  Dataset ds;
  std::size_t line_number = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (ds.empty() && line_number == 1 && is_header(split_tabs(line))) continue;
    ds.push_back(parse_row(line, mode, line_number));
  }
  return ds;
}

std::string serialize_dataset(const Dataset& ds) {
  std::string out;
  for (const auto& set : ds) {
    for (std::size_t i = 0; i < kNumDaughters; ++i) {
      out += set.daughters[i] ? set.daughters[i]->str() : std::string("-");
      out += '\t';
    }
    out += set.latin.str();
    out += '\n';
  }
  return out;
}

Dataset apply_variant(const Dataset& ds, DatasetVariant v) {
  const Mode expected = variant_mode(v);
  const bool keep_length = v == DatasetVariant::OrthographicVowelLength ||
                           v == DatasetVariant::PhoneticVowelLength;
  const bool neutralize = v == DatasetVariant::PhoneticNoContrast;
  static const std::unordered_map<std::string, std::string> kNeutral = {
      {"U", "u"}, {"O", "o"}, {"I", "i"}, {"E", "e"}};

  Dataset out;
  out.reserve(ds.size());
  for (const auto& set : ds) {
    if (set.latin.mode != expected) {
      throw ValidationError("variant " + std::string(variant_name(v)) +
                            " requires a " + std::string(mode_name(expected)) +
                            " dataset, got " + std::string(mode_name(set.latin.mode)));
    }
    CognateSet copy = set;
    std::vector<Symbol> latin;
    latin.reserve(set.latin.symbols.size());
    for (const auto& sym : set.latin.symbols) {
      const bool is_mark = sym == kLengthMark || sym == kAsciiLengthMark;
      if (is_mark) {
        if (keep_length) latin.emplace_back(kLengthMark);
        continue;
      }
      if (neutralize) {
        auto it = kNeutral.find(sym);
        latin.push_back(it != kNeutral.end() ? it->second : sym);
      } else {
        latin.push_back(sym);
      }
    }
    if (latin.empty()) {
      throw ValidationError("Latin form '" + set.latin.str() +
                            "' is empty after applying variant");
    }
    copy.latin.symbols = std::move(latin);
    out.push_back(std::move(copy));
  }
  return out;
}

// ---------------------------------------------------------------------------

SplitSizes split_sizes(std::size_t n, const SplitRatios& r) {
  if (r.train < 0 || r.dev < 0 || r.test < 0) {
    throw ValidationError("split ratios must be non-negative");
  }
  if (std::abs(r.train + r.dev + r.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
  // The epsilon keeps products such as 25 * 0.12 = 2.9999999999999996 at 3.
  const auto alloc = [n](double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
  };
  SplitSizes s;
  s.dev = alloc(r.dev);
  s.test = alloc(r.test);
  s.train = n - s.dev - s.test;
  return s;
}

Split split(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
  if (ds.empty()) throw ValidationError("cannot split an empty dataset");
  const auto sizes = split_sizes(ds.size(), ratios);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Split out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& set = ds[order[i]];
    if (i < sizes.train) {
      out.train.push_back(set);
    } else if (i < sizes.train + sizes.dev) {
      out.dev.push_back(set);
    } else {
      out.test.push_back(set);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  for (const auto& name : kSpecialNames) {
    index_.emplace(std::string(name), static_cast<SymbolId>(symbols_.size()));
    symbols_.emplace_back(name);
  }
}

SymbolId Vocabulary::add(const Symbol& sym) {
  auto [it, inserted] = index_.emplace(sym, static_cast<SymbolId>(symbols_.size()));
  if (inserted) symbols_.push_back(sym);
  return it->second;
}

std::optional<SymbolId> Vocabulary::find(const Symbol& sym) const {
  auto it = index_.find(sym);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SymbolId Vocabulary::id(const Symbol& sym) const {
  if (auto found = find(sym)) return *found;
  throw VocabularyError("symbol '" + sym + "' is not in the vocabulary");
}

const Symbol& Vocabulary::symbol(SymbolId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw VocabularyError("symbol id " + std::to_string(id) + " out of range");
  }
  return symbols_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "protolens-vocab";
  j["version"] = kFormatVersion;
  nlohmann::ordered_json specials = nlohmann::ordered_json::object();
  for (SymbolId i = 0; i < kNumSpecials; ++i) specials[symbols_[i]] = i;
  j["specials"] = specials;
  nlohmann::ordered_json syms = nlohmann::ordered_json::object();
  for (std::size_t i = kNumSpecials; i < symbols_.size(); ++i) {
    syms[symbols_[i]] = static_cast<SymbolId>(i);
  }
  j["symbols"] = syms;
  return j.dump(2) + "\n";
}

Vocabulary Vocabulary::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw VocabularyError(std::string("vocabulary JSON: ") + e.what());
  }
  if (j.value("format", "") != "protolens-vocab") {
    throw VocabularyError("not a protolens vocabulary file");
  }
  if (j.value("version", -1) != kFormatVersion) {
    throw VocabularyError("unsupported vocabulary version " +
                          std::to_string(j.value("version", -1)));
  }
  Vocabulary v;
  const auto& specials = j.at("specials");
  for (SymbolId i = 0; i < kNumSpecials; ++i) {
    const auto name = std::string(kSpecialNames[i]);
    if (!specials.contains(name) || specials.at(name).get<SymbolId>() != i) {
      throw VocabularyError("special token block does not match " + name + "=" +
                            std::to_string(i));
    }
  }
  const auto& syms = j.at("symbols");
  std::vector<Symbol> by_id(syms.size() + kNumSpecials);
  std::vector<bool> seen(by_id.size(), false);
  for (auto it = syms.begin(); it != syms.end(); ++it) {
    const auto id = it.value().get<SymbolId>();
    if (id < kNumSpecials || static_cast<std::size_t>(id) >= by_id.size() ||
        seen[static_cast<std::size_t>(id)]) {
      throw VocabularyError("symbol ids are not a bijection onto [" +
                            std::to_string(kNumSpecials) + ", " +
                            std::to_string(by_id.size()) + ")");
    }
    seen[static_cast<std::size_t>(id)] = true;
    by_id[static_cast<std::size_t>(id)] = it.key();
  }
  for (std::size_t i = kNumSpecials; i < by_id.size(); ++i) {
    if (v.add(by_id[i]) != static_cast<SymbolId>(i)) {
      throw VocabularyError("duplicate symbol '" + by_id[i] + "'");
    }
  }
  return v;
}

Vocabulary build_vocab(const Dataset& ds) {
  Vocabulary v;
  for (const auto& set : ds) {
    for (const auto& d : set.daughters) {
      if (!d) continue;
      for (const auto& s : d->symbols) v.add(s);
    }
    for (const auto& s : set.latin.symbols) v.add(s);
  }
  return v;
}

EncodedExample encode_example(const CognateSet& set, const Vocabulary& vocab,
                              OovPolicy oov) {
  const auto lookup = [&](const Symbol& s) -> SymbolId {
    if (auto id = vocab.find(s); id && !Vocabulary::is_special(*id)) return *id;
    if (oov == OovPolicy::MapToUnk) return Vocabulary::kUnk;
    throw VocabularyError("symbol '" + s + "' is not in the vocabulary");
  };

  EncodedExample ex;
  for (std::size_t i = 0; i < kNumDaughters; ++i) {
    const auto lang = static_cast<std::int32_t>(kDaughterOrder[i]);
    if (i > 0) {
      // SEP closes the previous language's span.
      ex.input_ids.push_back(Vocabulary::kSep);
      ex.input_langs.push_back(static_cast<std::int32_t>(kDaughterOrder[i - 1]));
    }
    const auto& d = set.daughters[i];
    if (!d) {
      ex.input_ids.push_back(Vocabulary::kMissing);
      ex.input_langs.push_back(lang);
      continue;
    }
    for (const auto& s : d->symbols) {
      ex.input_ids.push_back(lookup(s));
      ex.input_langs.push_back(lang);
    }
  }
  for (const auto& s : set.latin.symbols) ex.target_ids.push_back(lookup(s));
  ex.target_ids.push_back(Vocabulary::kEos);
  return ex;
}

Word decode_ids(const std::vector<SymbolId>& ids, const Vocabulary& vocab, Mode mode) {
  Word w;
  w.mode = mode;
  for (auto id : ids) {
    if (Vocabulary::is_special(id)) continue;
    w.symbols.push_back(vocab.symbol(id));
  }
  return w;
}

Inventory collect_inventory(const Dataset& ds) {
  Inventory inv;
  std::array<std::unordered_set<Symbol>, kNumLanguages> seen;
  const auto note = [&](std::size_t lang, const Word& w) {
    for (const auto& s : w.symbols) {
      if (seen[lang].insert(s).second) inv[lang].push_back(s);
    }
  };
  for (const auto& set : ds) {
    for (std::size_t i = 0; i < kNumDaughters; ++i) {
      if (set.daughters[i]) note(static_cast<std::size_t>(kDaughterOrder[i]), *set.daughters[i]);
    }
    note(static_cast<std::size_t>(Language::Latin), set.latin);
  }
  return inv;
}

}  // namespace protolens::corpus
