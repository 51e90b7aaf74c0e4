// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

#include "protolens/autodiff/tensor.hpp"

namespace protolens::ad {

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

/// Append-only record of a forward computation. Nodes only reference earlier
/// nodes, so reverse index order is a valid reverse topological order.
///
/// A tape is single-threaded. Parameters are borrowed by reference and must
/// stay alive and unmodified until backward() returns.
template <typename T>
class Tape {
 public:
  /// Propagates the node's gradient into its parents' gradient buffers.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> parameter(const Tensor<T>& value);
  /// Used by ops. `fn` may be empty when no parent requires a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn fn);
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& parents, BackwardFn fn);

  const Tensor<T>& value(Var<T> v) const;
  const Tensor<T>& value(std::size_t id) const;
  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient after backward(); all zeros for nodes the loss does not reach.
  Tensor<T> grad(Var<T> v) const;
  /// Lazily allocated accumulation buffer for ops' backward functions.
  Tensor<T>& grad_buffer(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  /// Reverse-mode sweep from a scalar loss. Throws ShapeError for a
  /// non-scalar loss. Gradients from a previous sweep are discarded.
  void backward(Var<T> loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* borrowed = nullptr;
    Tensor<T> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var<T> push(Node node);

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace protolens::ad
