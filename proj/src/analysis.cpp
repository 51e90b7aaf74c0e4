// SPDX-License-Identifier: Apache-2.0
#include "protolens/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>

#include "protolens/error.hpp"

namespace protolens::analysis {

using corpus::kNumDaughters;
using corpus::Language;
using corpus::Vocabulary;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string newick_label(const std::string& s) {
  if (!s.empty() && s.find_first_of(" \t\n()[]':;,") == std::string::npos) return s;
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += '\'';
    out += c;
  }
  return out + "'";
}

}  // namespace

Embeddings extract_embeddings(const model::Checkpoint& ckpt, Language lang) {
  const auto params = ckpt.params.cast<double>();
  const auto& inventory = ckpt.inventory[static_cast<std::size_t>(lang)];
  Embeddings e;
  e.matrix.resize(static_cast<Eigen::Index>(inventory.size()),
                  static_cast<Eigen::Index>(ckpt.config.embed_dim));
  Eigen::Index row = 0;
  for (const auto& sym : inventory) {
    const auto id = ckpt.vocab.find(sym);
    if (!id) continue;
    const auto v = model::embed_input<double>(*id, static_cast<std::int32_t>(lang), params);
    for (std::size_t c = 0; c < v.size(); ++c) e.matrix(row, static_cast<Eigen::Index>(c)) = v[c];
    e.labels.push_back(sym);
    ++row;
  }
  e.matrix.conservativeResize(row, e.matrix.cols());
  return e;
}

Embeddings extract_embeddings(const model::Checkpoint& ckpt, std::string_view lang) {
  const auto parsed = corpus::parse_language(lang);
  if (!parsed) throw ValidationError("unknown language '" + std::string(lang) + "'");
  return extract_embeddings(ckpt, *parsed);
}

std::string embeddings_csv(const Embeddings& e) {
  std::string out = "symbol";
  for (Eigen::Index c = 0; c < e.matrix.cols(); ++c) out += ",d" + std::to_string(c);
  out += "\n";
  for (Eigen::Index r = 0; r < e.matrix.rows(); ++r) {
    out += csv_field(e.labels[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < e.matrix.cols(); ++c) out += "," + fmt(e.matrix(r, c));
    out += "\n";
  }
  return out;
}

Dendrogram ward_clustering(const Eigen::MatrixXd& points, std::vector<std::string> labels) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (n < 2) throw ValidationError("ward clustering needs at least 2 points");
  if (labels.size() != n) {
    throw ValidationError("ward clustering got " + std::to_string(labels.size()) +
                          " labels for " + std::to_string(n) + " points");
  }
  const std::size_t total = 2 * n - 1;
  // Distances indexed by cluster id; only active rows are meaningful.
  std::vector<std::vector<double>> d(total, std::vector<double>(total, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = (points.row(static_cast<Eigen::Index>(i)) -
                        points.row(static_cast<Eigen::Index>(j))).norm();
      d[i][j] = d[j][i] = v;
    }
  }
  std::vector<std::size_t> size(total, 1);
  std::vector<std::size_t> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = i;

  Dendrogram out;
  out.labels = std::move(labels);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t best_a = 0, best_b = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t x = 0; x < active.size(); ++x) {
      for (std::size_t y = x + 1; y < active.size(); ++y) {
        const double v = d[active[x]][active[y]];
        if (v < best * (1.0 - kWardTieTolerance)) {
          best = v;
          best_a = active[x];
          best_b = active[y];
        }
      }
    }
    const std::size_t merged = n + step;
    size[merged] = size[best_a] + size[best_b];
    std::erase(active, best_a);
    std::erase(active, best_b);
    const auto na = static_cast<double>(size[best_a]), nb = static_cast<double>(size[best_b]);
    for (const std::size_t k : active) {
      const auto nk = static_cast<double>(size[k]);
      const double v = ((na + nk) * d[k][best_a] * d[k][best_a] +
                        (nb + nk) * d[k][best_b] * d[k][best_b] - nk * best * best) /
                       (na + nb + nk);
      d[k][merged] = d[merged][k] = std::sqrt(std::max(0.0, v));
    }
    active.push_back(merged);
    out.merges.push_back({best_a, best_b, best, size[merged]});
  }
  return out;
}

std::string to_newick(const Dendrogram& d) {
  const std::size_t n = d.leaf_count();
  std::function<std::string(std::size_t, double)> node = [&](std::size_t id, double parent) {
    if (id < n) return newick_label(d.labels[id]) + ":" + fmt(parent);
    const auto& m = d.merges[id - n];
    return "(" + node(m.a, m.distance) + "," + node(m.b, m.distance) + "):" +
           fmt(parent - m.distance);
  };
  if (n == 1) return newick_label(d.labels[0]) + ";";
  if (d.merges.size() + 1 != n) throw ValidationError("dendrogram needs n-1 merges");
  const auto& root = d.merges.back();
  return "(" + node(root.a, root.distance) + "," + node(root.b, root.distance) + ");";
}

std::string dendrogram_json(const Dendrogram& d) {
  nlohmann::ordered_json j;
  j["format"] = "protolens-dendrogram";
  j["version"] = 1;
  j["labels"] = d.labels;
  auto merges = nlohmann::ordered_json::array();
  for (const auto& m : d.merges) {
    merges.push_back({{"a", m.a}, {"b", m.b}, {"distance", m.distance}, {"size", m.size}});
  }
  j["merges"] = std::move(merges);
  return j.dump(2) + "\n";
}

Dendrogram dendrogram_from_json(std::string_view text) {
  Dendrogram d;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "protolens-dendrogram") throw ValidationError("not a dendrogram file");
    if (j.at("version") != 1) throw ValidationError("unsupported dendrogram version");
    d.labels = j.at("labels").get<std::vector<std::string>>();
    for (const auto& m : j.at("merges")) {
      d.merges.push_back({m.at("a").get<std::size_t>(), m.at("b").get<std::size_t>(),
                          m.at("distance").get<double>(), m.at("size").get<std::size_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed dendrogram JSON: ") + e.what());
  }
  const std::size_t n = d.labels.size();
  if (n >= 1 && d.merges.size() + 1 != n) throw ValidationError("dendrogram needs n-1 merges");
  for (std::size_t i = 0; i < d.merges.size(); ++i) {
    if (d.merges[i].a >= n + i || d.merges[i].b >= n + i) {
      throw ValidationError("merge " + std::to_string(i) + " refers to a later cluster");
    }
  }
  return d;
}

// ---------------------------------------------------------------------------

LanguageRow language_frequencies(std::span<const model::AttentionTrace> traces) {
  LanguageRow f{};
  for (const auto& t : traces) {
    for (std::size_t i = 0; i < t.input_ids.size(); ++i) {
      const auto id = t.input_ids[i];
      if (id == Vocabulary::kSep || id == Vocabulary::kMissing) continue;
      const auto l = static_cast<std::size_t>(t.input_langs[i]);
      if (l < kNumDaughters) f[l] += 1.0;
    }
  }
  return f;
}

namespace {

void add_count(AttentionTable& t, std::size_t row, corpus::SymbolId id, std::int32_t lang) {
  if (id == Vocabulary::kSep) {
    ++t.sep[row];
  } else if (id == Vocabulary::kMissing) {
    ++t.missing[row];
  } else {
    t.raw[row][static_cast<std::size_t>(lang)] += 1.0;
  }
}

void resize(AttentionTable& t, std::size_t rows) {
  t.raw.resize(rows, LanguageRow{});
  t.sep.resize(rows, 0);
  t.missing.resize(rows, 0);
}

void normalize(AttentionTable& t, const LanguageRow& freq, AttentionNormalization policy) {
  t.normalized.assign(t.raw.size(), LanguageRow{});
  t.zero_row.assign(t.raw.size(), false);
  for (std::size_t r = 0; r < t.raw.size(); ++r) {
    auto& row = t.normalized[r];
    double sum = 0.0;
    for (std::size_t l = 0; l < kNumDaughters; ++l) {
      double v = t.raw[r][l];
      if (policy == AttentionNormalization::LanguageThenRow) v = freq[l] > 0.0 ? v / freq[l] : 0.0;
      row[l] = v;
      sum += v;
    }
    if (sum > 0.0) {
      for (auto& v : row) v /= sum;
    } else {
      t.zero_row[r] = true;
    }
  }
}

}  // namespace

std::size_t AttentionSummary::total() const {
  double sum = 0.0;
  std::size_t extra = 0;
  for (std::size_t r = 0; r < by_position.raw.size(); ++r) {
    for (double v : by_position.raw[r]) sum += v;
    extra += by_position.sep[r] + by_position.missing[r];
  }
  return static_cast<std::size_t>(std::llround(sum)) + extra;
}

AttentionSummary attention_summary(std::span<const model::AttentionTrace> traces,
                                   const LanguageRow& language_frequency,
                                   const Vocabulary& vocab, AttentionNormalization policy) {
  if (traces.empty()) throw ValidationError("attention summary needs at least one trace");
  AttentionSummary s;
  std::map<corpus::SymbolId, std::size_t> symbol_rows;
  // First pass fixes the symbol rows in id order.
  for (const auto& t : traces) {
    for (const auto& step : t.steps) symbol_rows.emplace(step.emitted, 0);
  }
  std::size_t next = 0;
  for (auto& [id, row] : symbol_rows) {
    row = next++;
    s.by_symbol.row_labels.push_back(vocab.symbol(id));
  }
  resize(s.by_symbol, symbol_rows.size());

  for (const auto& t : traces) {
    if (t.input_ids.size() != t.input_langs.size()) {
      throw ValidationError("attention trace has mismatched input ids and languages");
    }
    if (t.steps.size() > s.by_position.raw.size()) resize(s.by_position, t.steps.size());
    for (std::size_t step = 0; step < t.steps.size(); ++step) {
      const auto& w = t.steps[step].weights;
      if (w.size() != t.input_ids.size() || w.empty()) {
        throw ValidationError("attention weights do not cover the trace input");
      }
      const auto pos = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
      const auto id = t.input_ids[pos];
      const auto lang = t.input_langs[pos];
      if (lang < 0 || static_cast<std::size_t>(lang) >= kNumDaughters) {
        throw ValidationError("attention trace input has a non-daughter language");
      }
      add_count(s.by_position, step, id, lang);
      add_count(s.by_symbol, symbol_rows.at(t.steps[step].emitted), id, lang);
    }
  }
  for (std::size_t r = 0; r < s.by_position.raw.size(); ++r) {
    s.by_position.row_labels.push_back(std::to_string(r));
  }
  normalize(s.by_position, language_frequency, policy);
  normalize(s.by_symbol, language_frequency, policy);
  return s;
}

std::string attention_csv(const AttentionTable& t, std::string_view label_header) {
  std::string out(label_header);
  for (const auto l : corpus::kDaughterOrder) out += ",raw_" + std::string(corpus::language_name(l));
  for (const auto l : corpus::kDaughterOrder) out += ",norm_" + std::string(corpus::language_name(l));
  out += ",sep,missing,zero_row\n";
  for (std::size_t r = 0; r < t.raw.size(); ++r) {
    out += csv_field(t.row_labels[r]);
    for (double v : t.raw[r]) out += "," + fmt(v);
    for (double v : t.normalized[r]) out += "," + fmt(v);
    out += "," + std::to_string(t.sep[r]) + "," + std::to_string(t.missing[r]) + "," +
           (t.zero_row[r] ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace protolens::analysis
