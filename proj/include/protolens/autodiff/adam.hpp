// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "protolens/autodiff/tensor.hpp"

namespace protolens::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step = 0;

  /// Zero moments shaped like `params`.
  static AdamState init(std::span<Tensor<T>* const> params, AdamConfig config);
};

/// One bias-corrected Adam update, in place. Throws ShapeError if the
/// gradients or moments do not line up with the parameters.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads,
               AdamState<T>& state);

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_global_norm(std::span<Tensor<T>* const> grads, double max_norm);

}  // namespace protolens::ad
