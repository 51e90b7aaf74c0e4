// SPDX-License-Identifier: Apache-2.0
#include "protolens/autodiff/tape.hpp"

#include "protolens/error.hpp"

namespace protolens::ad {

template <typename T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::parameter(const Tensor<T>& value) {
  Node n;
  n.borrowed = &value;
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> parents,
                       BackwardFn fn) {
  return record(std::move(value), std::vector<Var<T>>(parents), std::move(fn));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& parents,
                       BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (p.tape != this) throw Error("autodiff: operands recorded on different tapes");
    n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var<T> v) const {
  return value(v.id);
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  const auto& n = nodes_[id];
  return n.borrowed ? *n.borrowed : n.value;
}

template <typename T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
  const auto& n = nodes_[v.id];
  if (!n.grad.empty()) return n.grad;
  return Tensor<T>(value(v.id).shape(), T(0));
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor<T>(value(id).shape(), T(0));
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw Error("autodiff: loss belongs to another tape");
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_str(value(loss).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor<T>();
  grad_buffer(loss.id)[0] = T(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace protolens::ad
