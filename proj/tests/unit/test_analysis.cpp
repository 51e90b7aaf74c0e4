// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "protolens/analysis.hpp"
#include "protolens/error.hpp"
#include "support/oracles.hpp"

using namespace protolens;
using namespace protolens::analysis;
using corpus::Language;
using corpus::Mode;
using corpus::Vocabulary;

namespace {

std::vector<std::string> letters(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(1, static_cast<char>('a' + i)));
  return out;
}

void check_against_brute_force(const Eigen::MatrixXd& x) {
  const auto d = ward_clustering(x, letters(static_cast<std::size_t>(x.rows())));
  const auto ref = test_support::ward_brute_force(x);
  REQUIRE(d.merges.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(d.merges[i].a == ref[i].a);
    CHECK(d.merges[i].b == ref[i].b);
    CHECK(d.merges[i].size == ref[i].size);
    CHECK(std::abs(d.merges[i].distance - ref[i].distance) <= 1e-9);
  }
}

model::Checkpoint small_checkpoint(const corpus::Dataset& ds) {
  model::Checkpoint ckpt;
  ckpt.config.embed_dim = 4;
  ckpt.config.hidden_dim = 5;
  ckpt.config.mlp_hidden = 6;
  ckpt.config.lang_embed_dim = 3;
  ckpt.vocab = corpus::build_vocab(ds);
  ckpt.inventory = corpus::collect_inventory(ds);
  ckpt.mode = Mode::Phonetic;
  ckpt.params = model::ModelParams<float>::init(ckpt.config, ckpt.vocab.size());
  return ckpt;
}

/// A trace over five daughter spans of `len` symbols, SEP after each span.
model::AttentionTrace span_trace(std::size_t len, std::size_t steps) {
  model::AttentionTrace t;
  for (std::int32_t l = 0; l < 5; ++l) {
    for (std::size_t i = 0; i < len; ++i) {
      t.input_ids.push_back(Vocabulary::kNumSpecials + static_cast<corpus::SymbolId>(i));
      t.input_langs.push_back(l);
    }
    t.input_ids.push_back(Vocabulary::kSep);
    t.input_langs.push_back(l);
  }
  t.steps.resize(steps);
  for (auto& s : t.steps) {
    s.weights.assign(t.input_ids.size(), 0.0);
    s.emitted = Vocabulary::kNumSpecials;
  }
  return t;
}

Vocabulary small_vocab() {
  Vocabulary v;
  for (const char* s : {"a", "b", "c", "d"}) v.add(s);
  return v;
}

}  // namespace

TEST_CASE("ward on two points") {
  Eigen::MatrixXd x(2, 2);
  x << 0.0, 0.0, 3.0, 4.0;
  const auto d = ward_clustering(x, {"a", "b"});
  REQUIRE(d.merges.size() == 1);
  CHECK(d.merges[0] == Merge{0, 1, 5.0, 2});
  CHECK(to_newick(d) == "(a:5,b:5);");
}

TEST_CASE("ward merges the close pair of collinear points first") {
  Eigen::MatrixXd x(3, 1);
  x << 0.0, 1.0, 10.0;
  const auto d = ward_clustering(x, {"p0", "p1", "p10"});
  REQUIRE(d.merges.size() == 2);
  CHECK(d.merges[0].a == 0);
  CHECK(d.merges[0].b == 1);
  CHECK(d.merges[0].distance == doctest::Approx(1.0));
  // Second merge: sqrt(2 * 2 * 1 / 3) * |0.5 - 10|.
  CHECK(d.merges[1].distance == doctest::Approx(std::sqrt(4.0 / 3.0) * 9.5));
  CHECK(d.merges[1].size == 3);
}

TEST_CASE("ward rejects degenerate input") {
  CHECK_THROWS_AS(ward_clustering(Eigen::MatrixXd(1, 2), {"a"}), ValidationError);
  CHECK_THROWS_AS(ward_clustering(Eigen::MatrixXd(0, 2), {}), ValidationError);
  CHECK_THROWS_AS(ward_clustering(Eigen::MatrixXd::Zero(3, 2), {"a", "b"}), ValidationError);
}

TEST_CASE("ward matches the brute-force reference") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng() % 9);
    const auto dim = static_cast<Eigen::Index>(1 + rng() % 4);
    Eigen::MatrixXd x(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < dim; ++j) x(i, j) = u(rng);
    }
    check_against_brute_force(x);
  }
}

TEST_CASE("ward tie-breaking agrees with the reference on lattice points") {
  // Integer grids produce many exactly tied distances.
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng() % 9);
    Eigen::MatrixXd x(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = static_cast<double>(rng() % 3);
      x(i, 1) = static_cast<double>(rng() % 3);
    }
    check_against_brute_force(x);
  }
}

TEST_CASE("ward linkage distances never decrease") {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 30; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng() % 30);
    Eigen::MatrixXd x(n, 5);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < 5; ++j) x(i, j) = g(rng);
    }
    const auto d = ward_clustering(x, letters(static_cast<std::size_t>(n)));
    CHECK(d.merges.size() == static_cast<std::size_t>(n - 1));
    CHECK(d.merges.back().size == static_cast<std::size_t>(n));
    for (std::size_t i = 1; i < d.merges.size(); ++i) {
      CHECK(d.merges[i].distance >= d.merges[i - 1].distance * (1.0 - 1e-12));
    }
  }
}

TEST_CASE("dendrogram exports") {
  Eigen::MatrixXd x(4, 1);
  x << 0.0, 1.0, 5.0, 7.0;
  const auto d = ward_clustering(x, {"a", "b", "c d", "e"});
  const auto newick = to_newick(d);
  CHECK(newick.find("'c d'") != std::string::npos);
  CHECK(newick.back() == ';');
  for (const char* leaf : {"a:", "b:", "e:"}) CHECK(newick.find(leaf) != std::string::npos);

  const auto back = dendrogram_from_json(dendrogram_json(d));
  CHECK(back.labels == d.labels);
  CHECK(back.merges == d.merges);
  CHECK(back.leaf_count() == 4);
  CHECK_THROWS_AS(dendrogram_from_json("{\"format\": \"other\"}"), ValidationError);
  CHECK_THROWS_AS(dendrogram_from_json("not json"), ValidationError);
}

TEST_CASE("embedding extraction follows the training inventory") {
  const auto ds = corpus::parse_dataset(
      "lapte\tlEt\tlatte\tletSe\tlajte\tlaːktEm\n"
      "-\tpwa\tpesko\tpeTe\tpejSe\tpIskEm\n",
      Mode::Phonetic);
  const auto ckpt = small_checkpoint(ds);
  const auto params = ckpt.params.cast<double>();
  for (auto lang : {Language::Romanian, Language::French, Language::Latin}) {
    const auto e = extract_embeddings(ckpt, lang);
    const auto& inv = ckpt.inventory[static_cast<std::size_t>(lang)];
    REQUIRE(e.labels == inv);
    CHECK(e.matrix.rows() == static_cast<Eigen::Index>(inv.size()));
    CHECK(e.matrix.cols() == 4);
    for (std::size_t i = 0; i < inv.size(); ++i) {
      const auto row = model::embed_input(ckpt.vocab.id(inv[i]), static_cast<std::int32_t>(lang), params);
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(e.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
              doctest::Approx(row[j]).epsilon(1e-6));
      }
    }
    // Distinct symbols get distinct rows.
    for (Eigen::Index i = 0; i < e.matrix.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < e.matrix.rows(); ++j) {
        CHECK((e.matrix.row(i) - e.matrix.row(j)).norm() > 0.0);
      }
    }
  }
  const auto latin = extract_embeddings(ckpt, "la");
  CHECK(std::find(latin.labels.begin(), latin.labels.end(), "ː") != latin.labels.end());
  CHECK(std::find(latin.labels.begin(), latin.labels.end(), "a") != latin.labels.end());
  CHECK(extract_embeddings(ckpt, "Italian").labels.size() == 8);  // l a t e p s k o
  CHECK_THROWS_AS(extract_embeddings(ckpt, "Klingon"), ValidationError);

  const auto csv = embeddings_csv(extract_embeddings(ckpt, Language::French));
  CHECK(csv.rfind("symbol,d0,d1,d2,d3\n", 0) == 0);
}

TEST_CASE("a trace attending only to Italian") {
  auto t = span_trace(2, 4);
  for (auto& s : t.steps) s.weights[7] = 1.0;  // second Italian symbol
  const std::vector<model::AttentionTrace> traces = {t};
  const auto freq = language_frequencies(traces);
  CHECK(freq == LanguageRow{2, 2, 2, 2, 2});
  const auto s = attention_summary(traces, freq, small_vocab());
  REQUIRE(s.by_position.normalized.size() == 4);
  for (const auto& row : s.by_position.normalized) {
    CHECK(row == LanguageRow{0, 0, 1, 0, 0});
  }
  CHECK(s.by_symbol.row_labels == std::vector<std::string>{"a"});
  CHECK(s.by_symbol.raw[0][2] == 4.0);
  CHECK(s.total() == 4);
}

TEST_CASE("separators and missing tokens are counted apart") {
  auto t = span_trace(1, 3);
  t.input_ids[2] = Vocabulary::kMissing;  // French stands in as missing
  t.steps[0].weights[1] = 1.0;            // Romanian SEP
  t.steps[1].weights[2] = 1.0;            // French MISSING
  t.steps[2].weights[4] = 1.0;            // Italian symbol
  const std::vector<model::AttentionTrace> traces = {t};
  const auto s = attention_summary(traces, language_frequencies(traces), small_vocab());
  CHECK(s.by_position.sep == std::vector<std::size_t>{1, 0, 0});
  CHECK(s.by_position.missing == std::vector<std::size_t>{0, 1, 0});
  CHECK(s.by_position.zero_row == std::vector<bool>{true, true, false});
  CHECK(s.by_position.normalized[0] == LanguageRow{});
  CHECK(s.total() == 3);
  const auto csv = attention_csv(s.by_position, "position");
  CHECK(csv.rfind("position,raw_Romanian", 0) == 0);
}

TEST_CASE("argmax ties go to the earliest position") {
  auto t = span_trace(2, 1);
  t.steps[0].weights.assign(t.input_ids.size(), 1.0 / 15.0);
  const std::vector<model::AttentionTrace> traces = {t};
  const auto s = attention_summary(traces, language_frequencies(traces), small_vocab());
  CHECK(s.by_position.raw[0] == LanguageRow{1, 0, 0, 0, 0});
}

TEST_CASE("jittered uniform attention gives roughly uniform rows") {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> jitter(0.0, 1e-3);
  std::vector<model::AttentionTrace> traces;
  for (int i = 0; i < 2000; ++i) {
    auto t = span_trace(3, 5);
    for (auto& s : t.steps) {
      double z = 0.0;
      for (auto& w : s.weights) z += (w = 1.0 + jitter(rng));
      for (auto& w : s.weights) w /= z;
    }
    traces.push_back(std::move(t));
  }
  const auto s = attention_summary(traces, language_frequencies(traces), small_vocab());
  for (const auto& row : s.by_position.normalized) {
    for (double v : row) CHECK(std::abs(v - 0.2) < 0.04);
  }
}

TEST_CASE("attention summary invariants on random traces") {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<model::AttentionTrace> traces;
  std::size_t steps_total = 0;
  for (int i = 0; i < 200; ++i) {
    auto t = span_trace(1 + rng() % 3, 1 + rng() % 6);
    for (std::size_t k = 0; k < t.input_ids.size(); ++k) {
      if (t.input_ids[k] != Vocabulary::kSep && rng() % 7 == 0) t.input_ids[k] = Vocabulary::kMissing;
    }
    for (auto& s : t.steps) {
      for (auto& w : s.weights) w = u(rng);
      s.emitted = static_cast<corpus::SymbolId>(Vocabulary::kNumSpecials + rng() % 4);
    }
    steps_total += t.steps.size();
    traces.push_back(std::move(t));
  }
  const auto freq = language_frequencies(traces);
  for (auto policy : {AttentionNormalization::LanguageThenRow, AttentionNormalization::RowOnly}) {
    const auto s = attention_summary(traces, freq, small_vocab(), policy);
    CHECK(s.total() == steps_total);
    for (const auto* table : {&s.by_position, &s.by_symbol}) {
      for (std::size_t r = 0; r < table->normalized.size(); ++r) {
        double sum = 0.0;
        for (double v : table->normalized[r]) sum += v;
        if (table->zero_row[r]) {
          CHECK(sum == 0.0);
        } else {
          CHECK(std::abs(sum - 1.0) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("attention summary validates its input") {
  const Vocabulary v = small_vocab();
  CHECK_THROWS_AS(attention_summary({}, LanguageRow{}, v), ValidationError);
  auto t = span_trace(1, 1);
  t.steps[0].weights.pop_back();
  const std::vector<model::AttentionTrace> bad = {t};
  CHECK_THROWS_AS(attention_summary(bad, LanguageRow{}, v), ValidationError);
}
