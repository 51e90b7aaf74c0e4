// SPDX-License-Identifier: Apache-2.0
#include "protolens/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "protolens/error.hpp"

namespace protolens::metrics {

namespace {

using Table = std::vector<std::vector<std::size_t>>;

Table distance_table(std::span<const Symbol> a, std::span<const Symbol> b) {
  Table d(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({sub, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  return d;
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

}  // namespace

std::size_t edit_distance(std::span<const Symbol> a, std::span<const Symbol> b) {
  // Two-row DP.
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::size_t edit_distance(const Word& a, const Word& b) {
  return edit_distance(a.symbols, b.symbols);
}

double normalized_edit_distance(const Word& pred, const Word& gold, NormalizeBy by) {
  const auto& denom = by == NormalizeBy::Gold ? gold : pred;
  if (denom.symbols.empty()) {
    throw ValidationError(by == NormalizeBy::Gold
                              ? "normalized edit distance needs a non-empty gold word"
                              : "normalized edit distance needs a non-empty prediction");
  }
  return static_cast<double>(edit_distance(pred, gold)) /
         static_cast<double>(denom.symbols.size());
}

EditDistanceReport report(std::span<const std::pair<Word, Word>> pairs, NormalizeBy by) {
  if (pairs.empty()) throw ValidationError("cannot report on an empty set of pairs");
  EditDistanceReport r;
  r.n = pairs.size();
  double total = 0.0, total_norm = 0.0;
  for (const auto& [pred, gold] : pairs) {
    const auto d = edit_distance(pred, gold);
    for (std::size_t k = 0; k < kBuckets; ++k) {
      if (d <= k) ++r.counts[k];
    }
    total += static_cast<double>(d);
    total_norm += normalized_edit_distance(pred, gold, by);
  }
  const auto n = static_cast<double>(r.n);
  for (std::size_t k = 0; k < kBuckets; ++k) r.rates[k] = static_cast<double>(r.counts[k]) / n;
  r.average = total / n;
  r.average_normalized = total_norm / n;
  return r;
}

std::string report_json(const EditDistanceReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["exact"] = r.rates[0];
  for (std::size_t k = 1; k < kBuckets; ++k) j["within_" + std::to_string(k)] = r.rates[k];
  j["counts"] = r.counts;
  j["average"] = r.average;
  j["average_normalized"] = r.average_normalized;
  return j.dump(2) + "\n";
}

std::string report_table(const EditDistanceReport& r, const std::string& label) {
  std::ostringstream out;
  char buf[64];
  out << "                 0      <=1     <=2     <=3     <=4     Average  Avg, norm\n";
  std::snprintf(buf, sizeof buf, "%-14s", label.substr(0, 14).c_str());
  out << buf;
  for (std::size_t k = 0; k < kBuckets; ++k) {
    std::snprintf(buf, sizeof buf, "  %5.1f%%", 100.0 * r.rates[k]);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "  %7.3f  %9.3f\n", r.average, r.average_normalized);
  out << buf;
  return out.str();
}

EditScript align(std::span<const Symbol> source, std::span<const Symbol> target) {
  const auto d = distance_table(source, target);
  EditScript rev;
  std::size_t i = source.size(), j = target.size();
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && source[i - 1] == target[j - 1] && d[i][j] == d[i - 1][j - 1]) {
      rev.push_back({EditOp::Kind::Match, source[i - 1], target[j - 1]});
      --i, --j;
    } else if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1) {
      rev.push_back({EditOp::Kind::Substitute, source[i - 1], target[j - 1]});
      --i, --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      rev.push_back({EditOp::Kind::Delete, source[i - 1], {}});
      --i;
    } else {
      rev.push_back({EditOp::Kind::Insert, {}, target[j - 1]});
      --j;
    }
  }
  return {rev.rbegin(), rev.rend()};
}

EditScript align(const Word& source, const Word& target) {
  return align(source.symbols, target.symbols);
}

std::size_t script_cost(const EditScript& script) {
  return static_cast<std::size_t>(std::count_if(script.begin(), script.end(), [](const auto& op) {
    return op.kind != EditOp::Kind::Match;
  }));
}

std::vector<Symbol> apply_script(std::span<const Symbol> source, const EditScript& script) {
  std::vector<Symbol> out;
  std::size_t i = 0;
  for (const auto& op : script) {
    switch (op.kind) {
      case EditOp::Kind::Match:
      case EditOp::Kind::Substitute:
      case EditOp::Kind::Delete:
        if (i >= source.size() || source[i] != op.source) {
          throw ValidationError("edit script does not fit its source at position " +
                                std::to_string(i));
        }
        if (op.kind == EditOp::Kind::Match) out.push_back(op.source);
        if (op.kind == EditOp::Kind::Substitute) out.push_back(op.target);
        ++i;
        break;
      case EditOp::Kind::Insert:
        out.push_back(op.target);
        break;
    }
  }
  if (i != source.size()) throw ValidationError("edit script leaves source symbols unconsumed");
  return out;
}

SubstitutionMatrix substitution_matrix(std::span<const std::pair<Word, Word>> pairs,
                                       const std::optional<std::set<Symbol>>& filter,
                                       bool exclude_singletons) {
  SubstitutionMatrix m;
  for (const auto& [pred, gold] : pairs) {
    for (const auto& op : align(gold, pred)) {
      if (op.kind != EditOp::Kind::Substitute) continue;
      if (filter && (!filter->contains(op.source) || !filter->contains(op.target))) continue;
      ++m[{op.source, op.target}];
    }
  }
  if (exclude_singletons) std::erase_if(m, [](const auto& cell) { return cell.second == 1; });
  return m;
}

std::string substitution_csv(const SubstitutionMatrix& m) {
  std::string out = "gold,pred,count\n";
  for (const auto& [key, count] : m) {
    out += csv_field(key.first) + "," + csv_field(key.second) + "," + std::to_string(count) + "\n";
  }
  return out;
}

}  // namespace protolens::metrics
