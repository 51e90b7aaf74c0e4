// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations. Each records one node on the operands' tape.
// Shape violations throw ShapeError naming the op and the offending shapes.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "protolens/autodiff/tape.hpp"

namespace protolens::ad {

/// [m x k] * [k x n] -> [m x n].
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

/// [b x m x k] * [b x k x n] -> [b x m x n].
template <typename T>
Var<T> batched_matmul(Var<T> a, Var<T> b);

/// Elementwise, identical shapes.
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

/// [m x n] + [1 x n], the bias row added to every row. The only broadcast.
template <typename T>
Var<T> add_row(Var<T> a, Var<T> bias);

template <typename T>
Var<T> scale(Var<T> a, T factor);

/// Sum of all elements as a [1 x 1] scalar.
template <typename T>
Var<T> sum(Var<T> a);

/// Rank-2 concatenation along axis 0 (rows) or 1 (columns).
template <typename T>
Var<T> concat(std::span<const Var<T>> parts, int axis);

template <typename T>
Var<T> reshape(Var<T> a, Shape shape);

/// Rows [begin, end) of a rank-2 tensor.
template <typename T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t end);

/// Columns [begin, end) of a rank-2 tensor.
template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end);

template <typename T>
Var<T> sigmoid(Var<T> a);
template <typename T>
Var<T> tanh(Var<T> a);

/// Max-shifted softmax of a rank-2 tensor along `axis` (1 = within rows).
template <typename T>
Var<T> softmax(Var<T> a, int axis = 1);

/// Rows of `table` selected by `ids` -> [ids.size() x table.cols].
template <typename T>
Var<T> embedding_gather(Var<T> table, std::span<const std::int32_t> ids);

/// Summed cross entropy of softmax(logits[r]) against targets[r], computed
/// with log-sum-exp. Rows whose target is negative are ignored. Returns a
/// [1 x 1] scalar.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::int32_t> targets);

/// Single-row convenience form.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::int32_t target);

}  // namespace protolens::ad
