// SPDX-License-Identifier: Apache-2.0
#include "protolens/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "protolens/error.hpp"

namespace protolens::ad {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
ConstMapMat<T> view(const Tensor<T>& t, std::size_t offset, std::size_t rows,
                    std::size_t cols) {
  return ConstMapMat<T>(t.data() + offset, static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(cols));
}

template <typename T>
MapMat<T> view(Tensor<T>& t, std::size_t offset, std::size_t rows, std::size_t cols) {
  return MapMat<T>(t.data() + offset, static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(cols));
}

[[noreturn]] void shape_fail(const std::string& op, const Shape& a, const Shape& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void require_rank(const std::string& op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(op + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(s));
  }
}

template <typename T>
void same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw Error("autodiff: operands recorded on different tapes");
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// Elementwise binary op helper: forward f(x, y), backward supplies
/// (dz, x, y) -> (dx, dy) contributions.
template <typename T, typename Fwd, typename Bwd>
Var<T> elementwise(const char* op, Var<T> a, Var<T> b, Fwd fwd, Bwd bwd) {
  same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) shape_fail(op, av.shape(), bv.shape());
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib, bwd](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad_buffer(self);
    const auto& x = tape.value(ia);
    const auto& y = tape.value(ib);
    const bool need_a = tape.requires_grad(ia);
    const bool need_b = tape.requires_grad(ib);
    Tensor<T>* ga = need_a ? &tape.grad_buffer(ia) : nullptr;
    Tensor<T>* gb = need_b ? &tape.grad_buffer(ib) : nullptr;
    for (std::size_t i = 0; i < g.size(); ++i) {
      T da = T(0), db = T(0);
      bwd(g[i], x[i], y[i], da, db);
      if (ga) (*ga)[i] += da;
      if (gb) (*gb)[i] += db;
    }
  });
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank("matmul", av.shape(), 2);
  require_rank("matmul", bv.shape(), 2);
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  if (bv.shape()[0] != k) shape_fail("matmul", av.shape(), bv.shape());
  Tensor<T> out({m, n});
  view(out, 0, m, n).noalias() = view(av, 0, m, k) * view(bv, 0, k, n);
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape<T>& tape, std::size_t self) {
    const auto g = view(tape.grad_buffer(self), 0, m, n);
    if (tape.requires_grad(ia)) {
      view(tape.grad_buffer(ia), 0, m, k).noalias() +=
          g * view(tape.value(ib), 0, k, n).transpose();
    }
    if (tape.requires_grad(ib)) {
      view(tape.grad_buffer(ib), 0, k, n).noalias() +=
          view(tape.value(ia), 0, m, k).transpose() * g;
    }
  });
}

template <typename T>
Var<T> batched_matmul(Var<T> a, Var<T> b) {
  same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank("batched_matmul", av.shape(), 3);
  require_rank("batched_matmul", bv.shape(), 3);
  const std::size_t batch = av.shape()[0], m = av.shape()[1], k = av.shape()[2];
  const std::size_t n = bv.shape()[2];
  if (bv.shape()[0] != batch || bv.shape()[1] != k) {
    shape_fail("batched_matmul", av.shape(), bv.shape());
  }
  Tensor<T> out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    view(out, i * m * n, m, n).noalias() =
        view(av, i * m * k, m, k) * view(bv, i * k * n, k, n);
  }
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(
      std::move(out), {a, b}, [ia, ib, batch, m, k, n](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad_buffer(self);
        const bool need_a = tape.requires_grad(ia);
        const bool need_b = tape.requires_grad(ib);
        for (std::size_t i = 0; i < batch; ++i) {
          const auto gi = view(g, i * m * n, m, n);
          if (need_a) {
            view(tape.grad_buffer(ia), i * m * k, m, k).noalias() +=
                gi * view(tape.value(ib), i * k * n, k, n).transpose();
          }
          if (need_b) {
            view(tape.grad_buffer(ib), i * k * n, k, n).noalias() +=
                view(tape.value(ia), i * m * k, m, k).transpose() * gi;
          }
        }
      });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return elementwise<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](T g, T, T, T& da, T& db) { da = g; db = g; });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return elementwise<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](T g, T, T, T& da, T& db) { da = g; db = -g; });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return elementwise<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](T g, T x, T y, T& da, T& db) { da = g * y; db = g * x; });
}

template <typename T>
Var<T> add_row(Var<T> a, Var<T> bias) {
  same_tape(a, bias);
  const auto& av = a.value();
  const auto& bv = bias.value();
  require_rank("add_row", av.shape(), 2);
  if (bv.rank() != 2 || bv.shape()[0] != 1 || bv.shape()[1] != av.shape()[1]) {
    shape_fail("add_row", av.shape(), bv.shape());
  }
  const std::size_t rows = av.shape()[0], cols = av.shape()[1];
  Tensor<T> out = av;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  }
  const std::size_t ia = a.id, ib = bias.id;
  return a.tape->record(std::move(out), {a, bias}, [ia, ib, rows, cols](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad_buffer(self);
    if (tape.requires_grad(ia)) {
      auto& ga = tape.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tape.requires_grad(ib)) {
      auto& gb = tape.grad_buffer(ib);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  const auto& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia, factor](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad_buffer(self);
    auto& ga = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  const auto& av = a.value();
  T total = T(0);
  for (std::size_t i = 0; i < av.size(); ++i) total += av[i];
  const std::size_t ia = a.id;
  return a.tape->record(Tensor<T>::scalar(total), {a}, [ia](Tape<T>& tape, std::size_t self) {
    const T g = tape.grad_buffer(self)[0];
    auto& ga = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Tape<T>* tape = parts[0].tape;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> extents;
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    same_tape(parts[0], p);
    const auto& s = p.value().shape();
    require_rank("concat", s, 2);
    if (axis == 0) {
      if (cols == 0) cols = s[1];
      if (s[1] != cols) shape_fail("concat", parts[0].shape(), s);
      rows += s[0];
      extents.push_back(s[0]);
    } else {
      if (rows == 0) rows = s[0];
      if (s[0] != rows) shape_fail("concat", parts[0].shape(), s);
      cols += s[1];
      extents.push_back(s[1]);
    }
    ids.push_back(p.id);
  }
  Tensor<T> out({rows, cols});
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = parts[p].value();
    if (axis == 0) {
      std::copy(v.data(), v.data() + v.size(), out.data() + offset * cols);
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy(v.data() + r * extents[p], v.data() + (r + 1) * extents[p],
                  out.data() + r * cols + offset);
      }
    }
    offset += extents[p];
  }
  std::vector<Var<T>> parents(parts.begin(), parts.end());
  return tape->record(std::move(out), parents,
                      [ids, extents, rows, cols, axis](Tape<T>& t, std::size_t self) {
                        const auto& g = t.grad_buffer(self);
                        std::size_t off = 0;
                        for (std::size_t p = 0; p < ids.size(); ++p) {
                          if (t.requires_grad(ids[p])) {
                            auto& gp = t.grad_buffer(ids[p]);
                            if (axis == 0) {
                              for (std::size_t i = 0; i < gp.size(); ++i) {
                                gp[i] += g[off * cols + i];
                              }
                            } else {
                              const std::size_t w = extents[p];
                              for (std::size_t r = 0; r < rows; ++r) {
                                for (std::size_t c = 0; c < w; ++c) {
                                  gp[r * w + c] += g[r * cols + off + c];
                                }
                              }
                            }
                          }
                          off += extents[p];
                        }
                      });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad_buffer(self);
    auto& ga = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t end) {
  const auto& av = a.value();
  require_rank("slice_rows", av.shape(), 2);
  const std::size_t rows = av.shape()[0], cols = av.shape()[1];
  if (begin >= end || end > rows) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for " + shape_str(av.shape()));
  }
  Tensor<T> out({end - begin, cols});
  std::copy(av.data() + begin * cols, av.data() + end * cols, out.data());
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia, begin, cols](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad_buffer(self);
    auto& ga = tape.grad_buffer(ia);
    const std::size_t off = begin * cols;
    for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
  });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end) {
  const auto& av = a.value();
  require_rank("slice_cols", av.shape(), 2);
  const std::size_t rows = av.shape()[0], cols = av.shape()[1];
  if (begin >= end || end > cols) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for " + shape_str(av.shape()));
  }
  const std::size_t w = end - begin;
  Tensor<T> out({rows, w});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(av.data() + r * cols + begin, av.data() + r * cols + end, out.data() + r * w);
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia, rows, cols, begin, w](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad_buffer(self);
    auto& ga = tape.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < w; ++c) ga[r * cols + begin + c] += g[r * w + c];
    }
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  const auto& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(av[i]);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad_buffer(self);
    const auto& y = tape.value(self);
    auto& ga = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  const auto& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad_buffer(self);
    const auto& y = tape.value(self);
    auto& ga = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
  });
}

template <typename T>
Var<T> softmax(Var<T> a, int axis) {
  const auto& av = a.value();
  require_rank("softmax", av.shape(), 2);
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  const std::size_t rows = av.shape()[0], cols = av.shape()[1];
  // Walk "lines" along the softmax axis: stride between elements and between lines.
  const std::size_t lines = axis == 1 ? rows : cols;
  const std::size_t len = axis == 1 ? cols : rows;
  const std::size_t elem_stride = axis == 1 ? 1 : cols;
  const std::size_t line_stride = axis == 1 ? cols : 1;

  Tensor<T> out(av.shape());
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t base = l * line_stride;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, av[base + i * elem_stride]);
    T total = T(0);
    for (std::size_t i = 0; i < len; ++i) {
      const T e = std::exp(av[base + i * elem_stride] - mx);
      out[base + i * elem_stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[base + i * elem_stride] /= total;
  }
  const std::size_t ia = a.id;
  return a.tape->record(
      std::move(out), {a},
      [ia, lines, len, elem_stride, line_stride](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad_buffer(self);
        const auto& y = tape.value(self);
        auto& ga = tape.grad_buffer(ia);
        for (std::size_t l = 0; l < lines; ++l) {
          const std::size_t base = l * line_stride;
          T dot = T(0);
          for (std::size_t i = 0; i < len; ++i) {
            const auto k = base + i * elem_stride;
            dot += g[k] * y[k];
          }
          for (std::size_t i = 0; i < len; ++i) {
            const auto k = base + i * elem_stride;
            ga[k] += y[k] * (g[k] - dot);
          }
        }
      });
}

template <typename T>
Var<T> embedding_gather(Var<T> table, std::span<const std::int32_t> ids) {
  const auto& tv = table.value();
  require_rank("embedding_gather", tv.shape(), 2);
  if (ids.empty()) throw ShapeError("embedding_gather: empty id list");
  const std::size_t n_rows = tv.shape()[0], dim = tv.shape()[1];
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= n_rows) {
      throw ShapeError("embedding_gather: id " + std::to_string(id) +
                       " out of range for table " + shape_str(tv.shape()));
    }
  }
  Tensor<T> out({ids.size(), dim});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto src = static_cast<std::size_t>(ids[r]) * dim;
    std::copy(tv.data() + src, tv.data() + src + dim, out.data() + r * dim);
  }
  std::vector<std::int32_t> kept(ids.begin(), ids.end());
  const std::size_t it = table.id;
  return table.tape->record(std::move(out), {table}, [it, kept, dim](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad_buffer(self);
    auto& gt = tape.grad_buffer(it);
    for (std::size_t r = 0; r < kept.size(); ++r) {
      const auto dst = static_cast<std::size_t>(kept[r]) * dim;
      for (std::size_t c = 0; c < dim; ++c) gt[dst + c] += g[r * dim + c];
    }
  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::int32_t> targets) {
  const auto& lv = logits.value();
  require_rank("cross_entropy", lv.shape(), 2);
  const std::size_t rows = lv.shape()[0], cols = lv.shape()[1];
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for logits " + shape_str(lv.shape()));
  }
  // Keep the softmax for the backward pass.
  Tensor<T> probs(lv.shape());
  T total = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto target = targets[r];
    if (target < 0) continue;
    if (static_cast<std::size_t>(target) >= cols) {
      throw ShapeError("cross_entropy: target " + std::to_string(target) +
                       " out of range for logits " + shape_str(lv.shape()));
    }
    const T* row = lv.data() + r * cols;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, row[c]);
    T z = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      const T e = std::exp(row[c] - mx);
      probs[r * cols + c] = e;
      z += e;
    }
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] /= z;
    total += mx + std::log(z) - row[static_cast<std::size_t>(target)];
  }
  std::vector<std::int32_t> kept(targets.begin(), targets.end());
  const std::size_t il = logits.id;
  return logits.tape->record(
      Tensor<T>::scalar(total), {logits},
      [il, kept, probs = std::move(probs), cols](Tape<T>& tape, std::size_t self) {
        const T g = tape.grad_buffer(self)[0];
        auto& gl = tape.grad_buffer(il);
        for (std::size_t r = 0; r < kept.size(); ++r) {
          if (kept[r] < 0) continue;
          for (std::size_t c = 0; c < cols; ++c) gl[r * cols + c] += g * probs[r * cols + c];
          gl[r * cols + static_cast<std::size_t>(kept[r])] -= g;
        }
      });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::int32_t target) {
  const std::int32_t targets[1] = {target};
  return cross_entropy(logits, std::span<const std::int32_t>(targets, 1));
}

#define PROTOLENS_INSTANTIATE_OPS(T)                                              \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                      \
  template Var<T> batched_matmul<T>(Var<T>, Var<T>);                              \
  template Var<T> add<T>(Var<T>, Var<T>);                                         \
  template Var<T> sub<T>(Var<T>, Var<T>);                                         \
  template Var<T> mul<T>(Var<T>, Var<T>);                                         \
  template Var<T> add_row<T>(Var<T>, Var<T>);                                     \
  template Var<T> scale<T>(Var<T>, T);                                            \
  template Var<T> sum<T>(Var<T>);                                                 \
  template Var<T> concat<T>(std::span<const Var<T>>, int);                        \
  template Var<T> reshape<T>(Var<T>, Shape);                                      \
  template Var<T> slice_rows<T>(Var<T>, std::size_t, std::size_t);                \
  template Var<T> slice_cols<T>(Var<T>, std::size_t, std::size_t);                \
  template Var<T> sigmoid<T>(Var<T>);                                             \
  template Var<T> tanh<T>(Var<T>);                                                \
  template Var<T> softmax<T>(Var<T>, int);                                        \
  template Var<T> embedding_gather<T>(Var<T>, std::span<const std::int32_t>);     \
  template Var<T> cross_entropy<T>(Var<T>, std::span<const std::int32_t>);        \
  template Var<T> cross_entropy<T>(Var<T>, std::int32_t);

PROTOLENS_INSTANTIATE_OPS(float)
PROTOLENS_INSTANTIATE_OPS(double)

}  // namespace protolens::ad
