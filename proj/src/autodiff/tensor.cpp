// SPDX-License-Identifier: Apache-2.0
#include "protolens/autodiff/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "protolens/error.hpp"

namespace protolens::ad {

std::size_t shape_size(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  if (std::any_of(shape_.begin(), shape_.end(), [](std::size_t d) { return d == 0; })) {
    throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
  }
  data_.assign(shape_size(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (std::any_of(shape_.begin(), shape_.end(), [](std::size_t d) { return d == 0; })) {
    throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
  }
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  if (shape_.empty()) return 0;
  return data_.size() / shape_.back();
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace protolens::ad
