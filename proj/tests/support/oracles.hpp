// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used by the unit and acceptance
// tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "protolens/autodiff/tape.hpp"
#include "protolens/autodiff/tensor.hpp"
#include "protolens/corpus.hpp"
#include "protolens/model.hpp"

namespace test_support {

/// Levenshtein distance from its recursive definition over prefixes,
/// memoised.
inline std::size_t edit_distance_recursive(const std::vector<std::string>& a,
                                           const std::vector<std::string>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    const auto key = std::make_pair(i, j);
    if (const auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best;
    if (a[i] == b[j]) {
      best = go(i + 1, j + 1);
    } else {
      best = 1 + std::min({go(i + 1, j + 1), go(i + 1, j), go(i, j + 1)});
    }
    memo[key] = best;
    return best;
  };
  return go(0, 0);
}

struct BruteMerge {
  std::size_t a, b;
  double distance;
  std::size_t size;
};

/// Ward clustering from scratch: every step recomputes each pair's Ward
/// distance sqrt(2 na nb / (na + nb)) * |ca - cb| from the cluster members.
/// Ties within a relative 1e-12 go to the smallest (a, b) id pair.
inline std::vector<BruteMerge> ward_brute_force(const Eigen::MatrixXd& x) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::map<std::size_t, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters[i] = {i};
  auto centroid = [&](const std::vector<std::size_t>& members) {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(x.cols());
    for (auto m : members) c += x.row(static_cast<Eigen::Index>(m));
    return Eigen::RowVectorXd(c / static_cast<double>(members.size()));
  };
  std::vector<BruteMerge> merges;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (auto i = clusters.begin(); i != clusters.end(); ++i) {
      for (auto j = std::next(i); j != clusters.end(); ++j) {
        const double na = static_cast<double>(i->second.size());
        const double nb = static_cast<double>(j->second.size());
        const double d = std::sqrt(2.0 * na * nb / (na + nb)) *
                         (centroid(i->second) - centroid(j->second)).norm();
        if (d < best * (1.0 - 1e-12)) {
          best = d;
          ba = i->first;
          bb = j->first;
        }
      }
    }
    auto members = clusters[ba];
    members.insert(members.end(), clusters[bb].begin(), clusters[bb].end());
    clusters.erase(ba);
    clusters.erase(bb);
    clusters[n + step] = members;
    merges.push_back({ba, bb, best, members.size()});
  }
  return merges;
}

/// Elementwise relative error |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-4) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Builds a scalar loss from the given leaves on a fresh tape.
using LossBuilder = std::function<protolens::ad::Var<double>(
    protolens::ad::Tape<double>&, const std::vector<protolens::ad::Var<double>>&)>;

/// Largest relative error between reverse-mode gradients and central
/// differences (step h) over every element of every input.
inline double max_gradient_error(std::vector<protolens::ad::Tensor<double>>& inputs,
                                 const LossBuilder& build, double h = 1e-5) {
  using namespace protolens::ad;
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (auto& t : inputs) leaves.push_back(tape.parameter(t));
    const auto loss = build(tape, leaves);
    tape.backward(loss);
    for (const auto& v : leaves) analytic.push_back(tape.grad(v));
  }
  auto evaluate = [&] {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (auto& t : inputs) leaves.push_back(tape.parameter(t));
    return build(tape, leaves).value()[0];
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double saved = inputs[k][i];
      inputs[k][i] = saved + h;
      const double up = evaluate();
      inputs[k][i] = saved - h;
      const double down = evaluate();
      inputs[k][i] = saved;
      worst = std::max(worst, relative_error(analytic[k][i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Model recomputation in plain Eigen, row-vector convention.
// ---------------------------------------------------------------------------

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline RowMatrix to_eigen(const protolens::ad::Tensor<double>& t) {
  const auto rows = static_cast<Eigen::Index>(t.size() / t.cols());
  return Eigen::Map<const RowMatrix>(t.data(), rows, static_cast<Eigen::Index>(t.cols()));
}

inline Eigen::RowVectorXd sigmoid(const Eigen::RowVectorXd& x) {
  return (1.0 + (-x.array()).exp()).inverse().matrix();
}

inline Eigen::RowVectorXd embed(const protolens::model::ModelParams<double>& p, int symbol,
                                int language) {
  return to_eigen(p.symbol_embedding).row(symbol) * to_eigen(p.symbol_projection) +
         to_eigen(p.language_embedding).row(language) * to_eigen(p.language_projection);
}

inline Eigen::RowVectorXd gru(const protolens::model::GruParams<double>& g,
                              const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& h) {
  const auto H = h.size();
  const RowMatrix wi = to_eigen(g.input_weights), wh = to_eigen(g.hidden_gates),
                  wc = to_eigen(g.hidden_candidate), b = to_eigen(g.bias);
  const Eigen::RowVectorXd gx = x * wi + b.row(0);
  const Eigen::RowVectorXd gh = h * wh;
  const Eigen::RowVectorXd r = sigmoid(gx.head(H) + gh.head(H));
  const Eigen::RowVectorXd z = sigmoid(gx.segment(H, H) + gh.segment(H, H));
  const Eigen::RowVectorXd n =
      (gx.tail(H) + r.cwiseProduct(h) * wc).array().tanh().matrix();
  return (1.0 - z.array()).matrix().cwiseProduct(n) + z.cwiseProduct(h);
}

/// Encoder states, one row per input position.
inline RowMatrix reference_encode(const protolens::corpus::EncodedExample& ex,
                                  const protolens::model::ModelParams<double>& p) {
  const auto H = static_cast<Eigen::Index>(p.encoder.hidden_candidate.cols());
  RowMatrix states(static_cast<Eigen::Index>(ex.input_ids.size()), H);
  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(H);
  for (std::size_t t = 0; t < ex.input_ids.size(); ++t) {
    h = gru(p.encoder, embed(p, ex.input_ids[t], ex.input_langs[t]), h);
    states.row(static_cast<Eigen::Index>(t)) = h;
  }
  return states;
}

struct ReferenceStep {
  Eigen::RowVectorXd logits, state, weights;
};

inline ReferenceStep reference_decode_step(int prev, const Eigen::RowVectorXd& state,
                                           const RowMatrix& enc,
                                           const protolens::model::ModelParams<double>& p) {
  constexpr int kLatin = static_cast<int>(protolens::corpus::Language::Latin);
  ReferenceStep out;
  out.state = gru(p.decoder, embed(p, prev, kLatin), state);
  const Eigen::RowVectorXd scores = (enc * out.state.transpose()).transpose();
  const Eigen::RowVectorXd e = (scores.array() - scores.maxCoeff()).exp().matrix();
  out.weights = e / e.sum();
  Eigen::RowVectorXd context = Eigen::RowVectorXd::Zero(state.size());
  for (Eigen::Index i = 0; i < enc.rows(); ++i) context += out.weights(i) * enc.row(i);
  Eigen::RowVectorXd mlp_in(2 * state.size());
  mlp_in << context, out.state;
  const Eigen::RowVectorXd hidden =
      (mlp_in * to_eigen(p.mlp_hidden_weights) + to_eigen(p.mlp_hidden_bias).row(0))
          .array()
          .tanh()
          .matrix();
  out.logits = hidden * to_eigen(p.mlp_output_weights) + to_eigen(p.mlp_output_bias).row(0);
  return out;
}

/// Largest relative error between the model's reverse-mode gradient of the
/// teacher-forced loss and central differences, over every parameter.
inline double model_gradient_error(protolens::model::ModelParams<double>& params,
                                   const std::vector<protolens::corpus::EncodedExample>& batch,
                                   double h = 1e-5) {
  using namespace protolens;
  const std::size_t hidden = params.encoder.hidden_candidate.cols();
  std::vector<const corpus::EncodedExample*> ptrs;
  for (const auto& ex : batch) ptrs.push_back(&ex);
  std::vector<ad::Tensor<double>> analytic;
  {
    ad::Tape<double> tape;
    const auto bound = model::BoundParams<double>::bind(tape, params);
    tape.backward(model::sequence_loss<double>(bound, ptrs, hidden));
    for (const auto& v : bound.vars()) analytic.push_back(tape.grad(v));
  }
  auto evaluate = [&] {
    ad::Tape<double> tape;
    const auto bound = model::BoundParams<double>::bind(tape, params);
    return model::sequence_loss<double>(bound, ptrs, hidden).value()[0];
  };
  double worst = 0.0;
  auto tensors = params.tensors();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto& t = *tensors[k];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + h;
      const double up = evaluate();
      t[i] = saved - h;
      const double down = evaluate();
      t[i] = saved;
      worst = std::max(worst, relative_error(analytic[k][i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace test_support
