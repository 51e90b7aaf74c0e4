// SPDX-License-Identifier: Apache-2.0
#include "protolens/autodiff/adam.hpp"

#include <cmath>
#include <string>

#include "protolens/error.hpp"

namespace protolens::ad {

template <typename T>
AdamState<T> AdamState<T>::init(std::span<Tensor<T>* const> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto* p : params) {
    s.first_moment.emplace_back(p->shape(), T(0));
    s.second_moment.emplace_back(p->shape(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads,
               AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params, " +
                     std::to_string(grads.size()) + " grads, " +
                     std::to_string(state.first_moment.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape() ||
        params[i]->shape() != state.first_moment[i].shape()) {
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " has shape " +
                       shape_str(params[i]->shape()) + " but gradient " +
                       shape_str(grads[i]->shape()));
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(c.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(c.beta2, t));
  const T lr = static_cast<T>(c.learning_rate);
  const T eps = static_cast<T>(c.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& g = *grads[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const T m_hat = m[k] / correction1;
      const T v_hat = v[k] / correction2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
double clip_global_norm(std::span<Tensor<T>* const> grads, double max_norm) {
  double sq = 0.0;
  for (const auto* g : grads) {
    for (std::size_t k = 0; k < g->size(); ++k) {
      sq += static_cast<double>((*g)[k]) * static_cast<double>((*g)[k]);
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto* g : grads) {
      for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] *= factor;
    }
  }
  return norm;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::span<Tensor<float>* const>,
                               std::span<const Tensor<float>* const>, AdamState<float>&);
template void adam_step<double>(std::span<Tensor<double>* const>,
                                std::span<const Tensor<double>* const>, AdamState<double>&);
template double clip_global_norm<float>(std::span<Tensor<float>* const>, double);
template double clip_global_norm<double>(std::span<Tensor<double>* const>, double);

}  // namespace protolens::ad
