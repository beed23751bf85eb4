// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "moetrack/kernels.hpp"

// Dense row-major tensors with reverse-mode differentiation. Each op records
// its inputs and an adjoint closure on the implicit tape (the DAG of nodes);
// backward() walks that tape once in reverse topological order. Tensors with
// requires_grad == false never get a grad buffer.

namespace moetrack {

using Shape = std::vector<int>;
using Rng = std::mt19937_64;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("non-positive extent in " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backfn;  // reads this->grad, writes parents

  void accum_grad(const T* g, std::size_t n) {
    if (!requires_grad) return;
    if (grad.empty()) grad.assign(data.size(), T(0));
    kern::axpy(T(1), g, grad.data(), n);
  }
};

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<T>> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }
  static Tensor filled(Shape shape, T value, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode<T>>();
    n->data.assign(shape_numel(shape), value);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size())
      throw std::invalid_argument("data size does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->data = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor scalar(T v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }
  static Tensor randn(Shape shape, Rng& rng, T stddev, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : t.node()->data) v = static_cast<T>(dist(rng)) * stddev;
    return t;
  }
  static Tensor uniform(Shape shape, Rng& rng, T lo, T hi, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.node()->data) v = static_cast<T>(dist(rng));
    return t;
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return n_->data.size(); }
  T* data() { return n_->data.data(); }
  const T* data() const { return n_->data.data(); }
  std::vector<T>& values() { return n_->data; }
  const std::vector<T>& values() const { return n_->data; }
  T at(std::size_t i) const { return n_->data[i]; }
  T item() const {
    if (size() != 1) throw std::logic_error("item() on non-scalar " + shape_str(shape()));
    return n_->data[0];
  }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) {
    n_->requires_grad = rg;
    if (!rg) n_->grad.clear();
  }
  bool has_grad() const { return !n_->grad.empty(); }
  const std::vector<T>& grad() const { return n_->grad; }
  void zero_grad() {
    if (!n_->grad.empty()) n_->grad.assign(n_->data.size(), T(0));
  }
  // Value copy cut off from the tape.
  Tensor detach() const { return from(n_->shape, n_->data, false); }

  std::shared_ptr<TensorNode<T>>& node() { return n_; }
  const std::shared_ptr<TensorNode<T>>& node() const { return n_; }

 private:
  std::shared_ptr<TensorNode<T>> n_;
};

namespace detail {

template <class T>
Tensor<T> make_op(Shape shape, std::vector<T> data,
                  std::vector<Tensor<T>> parents,
                  std::function<void(TensorNode<T>&)> backfn) {
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backfn = std::move(backfn);
  }
  return Tensor<T>(std::move(n));
}

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ------------------------------------------------------------ elementwise ---

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  kern::vadd(a.data(), b.data(), out.data(), a.size());
  auto an = a.node(); auto bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a, b},
      [an, bn](TensorNode<T>& y) {
        an->accum_grad(y.grad.data(), y.grad.size());
        bn->accum_grad(y.grad.data(), y.grad.size());
      });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<T> out(a.size());
  kern::vsub(a.data(), b.data(), out.data(), a.size());
  auto an = a.node(); auto bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a, b},
      [an, bn](TensorNode<T>& y) {
        an->accum_grad(y.grad.data(), y.grad.size());
        if (bn->requires_grad) {
          std::vector<T> neg(y.grad.size());
          kern::vscale(T(-1), y.grad.data(), neg.data(), neg.size());
          bn->accum_grad(neg.data(), neg.size());
        }
      });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  kern::vmul(a.data(), b.data(), out.data(), a.size());
  auto an = a.node(); auto bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a, b},
      [an, bn](TensorNode<T>& y) {
        std::vector<T> tmp(y.grad.size());
        if (an->requires_grad) {
          kern::vmul(y.grad.data(), bn->data.data(), tmp.data(), tmp.size());
          an->accum_grad(tmp.data(), tmp.size());
        }
        if (bn->requires_grad) {
          kern::vmul(y.grad.data(), an->data.data(), tmp.data(), tmp.size());
          bn->accum_grad(tmp.data(), tmp.size());
        }
      });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "div");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  auto an = a.node(); auto bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a, b},
      [an, bn](TensorNode<T>& y) {
        std::vector<T> tmp(y.grad.size());
        if (an->requires_grad) {
          for (std::size_t i = 0; i < tmp.size(); ++i)
            tmp[i] = y.grad[i] / bn->data[i];
          an->accum_grad(tmp.data(), tmp.size());
        }
        if (bn->requires_grad) {
          for (std::size_t i = 0; i < tmp.size(); ++i)
            tmp[i] = -y.grad[i] * an->data[i] / (bn->data[i] * bn->data[i]);
          bn->accum_grad(tmp.data(), tmp.size());
        }
      });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  std::vector<T> out(a.size());
  kern::vscale(c, a.data(), out.data(), a.size());
  auto an = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a},
      [an, c](TensorNode<T>& y) {
        if (!an->requires_grad) return;
        std::vector<T> tmp(y.grad.size());
        kern::vscale(c, y.grad.data(), tmp.data(), tmp.size());
        an->accum_grad(tmp.data(), tmp.size());
      });
}

template <class T>
Tensor<T> add_const(const Tensor<T>& a, T c) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] + c;
  auto an = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a},
      [an](TensorNode<T>& y) { an->accum_grad(y.grad.data(), y.grad.size()); });
}

// Elementwise min/max; ties route the gradient to the first argument.
template <class T>
Tensor<T> min_t(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "min");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = a.data()[i] <= b.data()[i] ? a.data()[i] : b.data()[i];
  auto an = a.node(); auto bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a, b},
      [an, bn](TensorNode<T>& y) {
        std::vector<T> ga(y.grad.size(), T(0)), gb(y.grad.size(), T(0));
        for (std::size_t i = 0; i < y.grad.size(); ++i)
          (an->data[i] <= bn->data[i] ? ga[i] : gb[i]) = y.grad[i];
        an->accum_grad(ga.data(), ga.size());
        bn->accum_grad(gb.data(), gb.size());
      });
}

template <class T>
Tensor<T> max_t(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "max");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = a.data()[i] >= b.data()[i] ? a.data()[i] : b.data()[i];
  auto an = a.node(); auto bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a, b},
      [an, bn](TensorNode<T>& y) {
        std::vector<T> ga(y.grad.size(), T(0)), gb(y.grad.size(), T(0));
        for (std::size_t i = 0; i < y.grad.size(); ++i)
          (an->data[i] >= bn->data[i] ? ga[i] : gb[i]) = y.grad[i];
        an->accum_grad(ga.data(), ga.size());
        bn->accum_grad(gb.data(), gb.size());
      });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
  auto an = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a},
      [an](TensorNode<T>& y) {
        if (!an->requires_grad) return;
        std::vector<T> g(y.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] = an->data[i] > T(0) ? y.grad[i] : T(0);
        an->accum_grad(g.data(), g.size());
      });
}

template <class T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = a.data()[i] < lo ? lo : (a.data()[i] > hi ? hi : a.data()[i]);
  auto an = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a},
      [an, lo, hi](TensorNode<T>& y) {
        if (!an->requires_grad) return;
        std::vector<T> g(y.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          const T v = an->data[i];
          g[i] = (v < lo || v > hi) ? T(0) : y.grad[i];
        }
        an->accum_grad(g.data(), g.size());
      });
}

template <class T>
Tensor<T> log_t(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::log(a.data()[i]);
  auto an = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a},
      [an](TensorNode<T>& y) {
        if (!an->requires_grad) return;
        std::vector<T> g(y.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = y.grad[i] / an->data[i];
        an->accum_grad(g.data(), g.size());
      });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T x = a.data()[i];
    out[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                       : std::exp(x) / (T(1) + std::exp(x));
  }
  auto an = a.node();
  auto yv = out;  // saved activation
  return detail::make_op<T>(a.shape(), std::move(out), {a},
      [an, yv = std::move(yv)](TensorNode<T>& y) {
        if (!an->requires_grad) return;
        std::vector<T> g(y.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] = y.grad[i] * yv[i] * (T(1) - yv[i]);
        an->accum_grad(g.data(), g.size());
      });
}

// GELU, tanh approximation.
template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = static_cast<double>(a.data()[i]);
    out[i] = static_cast<T>(0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x))));
  }
  auto an = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a},
      [an](TensorNode<T>& y) {
        if (!an->requires_grad) return;
        std::vector<T> g(y.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = static_cast<double>(an->data[i]);
          const double u = kC * (x + kA * x * x * x);
          const double th = std::tanh(u);
          const double d =
              0.5 * (1.0 + th) +
              0.5 * x * (1.0 - th * th) * kC * (1.0 + 3.0 * kA * x * x);
          g[i] = y.grad[i] * static_cast<T>(d);
        }
        an->accum_grad(g.data(), g.size());
      });
}

// ----------------------------------------------------------------- matmul ---

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  kern::gemm(kern::Trans::N, kern::Trans::N, m, n, k, a.data(), b.data(), out.data());
  auto an = a.node(); auto bn = b.node();
  return detail::make_op<T>({m, n}, std::move(out), {a, b},
      [an, bn, m, n, k](TensorNode<T>& y) {
        if (an->requires_grad) {
          if (an->grad.empty()) an->grad.assign(an->data.size(), T(0));
          // dA += dY * B^T
          kern::gemm(kern::Trans::N, kern::Trans::T, m, k, n, y.grad.data(),
                     bn->data.data(), an->grad.data(), T(1));
        }
        if (bn->requires_grad) {
          if (bn->grad.empty()) bn->grad.assign(bn->data.size(), T(0));
          // dB += A^T * dY
          kern::gemm(kern::Trans::T, kern::Trans::N, k, n, m, an->data.data(),
                     y.grad.data(), bn->grad.data(), T(1));
        }
      });
}

// y = a * b^T with a [m x k], b [n x k].
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(1))
    throw std::invalid_argument("matmul_nt: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  kern::gemm(kern::Trans::N, kern::Trans::T, m, n, k, a.data(), b.data(), out.data());
  auto an = a.node(); auto bn = b.node();
  return detail::make_op<T>({m, n}, std::move(out), {a, b},
      [an, bn, m, n, k](TensorNode<T>& y) {
        if (an->requires_grad) {
          if (an->grad.empty()) an->grad.assign(an->data.size(), T(0));
          // dA += dY * B
          kern::gemm(kern::Trans::N, kern::Trans::N, m, k, n, y.grad.data(),
                     bn->data.data(), an->grad.data(), T(1));
        }
        if (bn->requires_grad) {
          if (bn->grad.empty()) bn->grad.assign(bn->data.size(), T(0));
          // dB += dY^T * A
          kern::gemm(kern::Trans::T, kern::Trans::N, n, k, m, y.grad.data(),
                     an->data.data(), bn->grad.data(), T(1));
        }
      });
}

// ------------------------------------------------------------- structural ---

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) +
                                " as " + shape_str(shape));
  auto an = a.node();
  return detail::make_op<T>(std::move(shape), a.values(), {a},
      [an](TensorNode<T>& y) { an->accum_grad(y.grad.data(), y.grad.size()); });
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  const int cols = parts[0].shape().size() == 2 ? parts[0].dim(1) : 1;
  int rows = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != 2 || p.dim(1) != cols)
      throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.dim(0);
  }
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<std::shared_ptr<TensorNode<T>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return detail::make_op<T>({rows, cols}, std::move(out), parts,
      [nodes, cols](TensorNode<T>& y) {
        std::size_t off = 0;
        for (const auto& pn : nodes) {
          pn->accum_grad(y.grad.data() + off, pn->data.size());
          off += pn->data.size();
        }
      });
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, int start, int count) {
  if (a.shape().size() != 2 || start < 0 || count <= 0 || start + count > a.dim(0))
    throw std::invalid_argument("slice_rows: bad range on " + shape_str(a.shape()));
  const int cols = a.dim(1);
  std::vector<T> out(a.values().begin() + static_cast<std::size_t>(start) * cols,
                     a.values().begin() + static_cast<std::size_t>(start + count) * cols);
  auto an = a.node();
  return detail::make_op<T>({count, cols}, std::move(out), {a},
      [an, start, cols](TensorNode<T>& y) {
        if (!an->requires_grad) return;
        if (an->grad.empty()) an->grad.assign(an->data.size(), T(0));
        kern::axpy(T(1), y.grad.data(),
                   an->grad.data() + static_cast<std::size_t>(start) * cols,
                   y.grad.size());
      });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, int start, int count) {
  if (a.shape().size() != 2 || start < 0 || count <= 0 || start + count > a.dim(1))
    throw std::invalid_argument("slice_cols: bad range on " + shape_str(a.shape()));
  const int rows = a.dim(0), cols = a.dim(1);
  std::vector<T> out(static_cast<std::size_t>(rows) * count);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < count; ++j)
      out[static_cast<std::size_t>(i) * count + j] =
          a.data()[static_cast<std::size_t>(i) * cols + start + j];
  auto an = a.node();
  return detail::make_op<T>({rows, count}, std::move(out), {a},
      [an, start, rows, cols, count](TensorNode<T>& y) {
        if (!an->requires_grad) return;
        if (an->grad.empty()) an->grad.assign(an->data.size(), T(0));
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < count; ++j)
            an->grad[static_cast<std::size_t>(i) * cols + start + j] +=
                y.grad[static_cast<std::size_t>(i) * count + j];
      });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const int rows = parts[0].dim(0);
  int cols = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != 2 || p.dim(0) != rows)
      throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.dim(1);
  }
  std::vector<T> out(static_cast<std::size_t>(rows) * cols);
  int off = 0;
  for (const auto& p : parts) {
    const int pc = p.dim(1);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < pc; ++j)
        out[static_cast<std::size_t>(i) * cols + off + j] =
            p.data()[static_cast<std::size_t>(i) * pc + j];
    off += pc;
  }
  std::vector<std::shared_ptr<TensorNode<T>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return detail::make_op<T>({rows, cols}, std::move(out), parts,
      [nodes, rows, cols](TensorNode<T>& y) {
        int off = 0;
        for (const auto& pn : nodes) {
          const int pc = pn->shape[1];
          if (pn->requires_grad) {
            if (pn->grad.empty()) pn->grad.assign(pn->data.size(), T(0));
            for (int i = 0; i < rows; ++i)
              for (int j = 0; j < pc; ++j)
                pn->grad[static_cast<std::size_t>(i) * pc + j] +=
                    y.grad[static_cast<std::size_t>(i) * cols + off + j];
          }
          off += pc;
        }
      });
}

// -------------------------------------------------------------- broadcast ---

// [n x d] + [d] row vector.
template <class T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& v) {
  if (a.shape().size() != 2 || static_cast<std::size_t>(a.dim(1)) != v.size())
    throw std::invalid_argument("add_rowvec: " + shape_str(a.shape()) + " vs " +
                                shape_str(v.shape()));
  const int rows = a.dim(0), cols = a.dim(1);
  std::vector<T> out(a.size());
  for (int i = 0; i < rows; ++i)
    kern::vadd(a.data() + static_cast<std::size_t>(i) * cols, v.data(),
               out.data() + static_cast<std::size_t>(i) * cols,
               static_cast<std::size_t>(cols));
  auto an = a.node(); auto vn = v.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a, v},
      [an, vn, rows, cols](TensorNode<T>& y) {
        an->accum_grad(y.grad.data(), y.grad.size());
        if (vn->requires_grad) {
          std::vector<T> gv(static_cast<std::size_t>(cols), T(0));
          for (int i = 0; i < rows; ++i)
            kern::axpy(T(1), y.grad.data() + static_cast<std::size_t>(i) * cols,
                       gv.data(), gv.size());
          vn->accum_grad(gv.data(), gv.size());
        }
      });
}

// Broadcast a [d] vector to [n x d].
template <class T>
Tensor<T> repeat_row(const Tensor<T>& v, int n) {
  if (n <= 0) throw std::invalid_argument("repeat_row: n must be positive");
  const int d = static_cast<int>(v.size());
  std::vector<T> out(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    std::copy(v.values().begin(), v.values().end(),
              out.begin() + static_cast<std::size_t>(i) * d);
  auto vn = v.node();
  return detail::make_op<T>({n, d}, std::move(out), {v},
      [vn, n, d](TensorNode<T>& y) {
        if (!vn->requires_grad) return;
        std::vector<T> gv(static_cast<std::size_t>(d), T(0));
        for (int i = 0; i < n; ++i)
          kern::axpy(T(1), y.grad.data() + static_cast<std::size_t>(i) * d,
                     gv.data(), gv.size());
        vn->accum_grad(gv.data(), gv.size());
      });
}

// Row scaling: y[i][j] = a[i][j] * u[i], u of shape [n] or [n x 1].
template <class T>
Tensor<T> mul_rows(const Tensor<T>& a, const Tensor<T>& u) {
  if (a.shape().size() != 2 || u.size() != static_cast<std::size_t>(a.dim(0)))
    throw std::invalid_argument("mul_rows: " + shape_str(a.shape()) + " vs " +
                                shape_str(u.shape()));
  const int rows = a.dim(0), cols = a.dim(1);
  std::vector<T> out(a.size());
  for (int i = 0; i < rows; ++i)
    kern::vscale(u.data()[i], a.data() + static_cast<std::size_t>(i) * cols,
                 out.data() + static_cast<std::size_t>(i) * cols,
                 static_cast<std::size_t>(cols));
  auto an = a.node(); auto un = u.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a, u},
      [an, un, rows, cols](TensorNode<T>& y) {
        if (an->requires_grad) {
          std::vector<T> g(y.grad.size());
          for (int i = 0; i < rows; ++i)
            kern::vscale(un->data[i],
                         y.grad.data() + static_cast<std::size_t>(i) * cols,
                         g.data() + static_cast<std::size_t>(i) * cols,
                         static_cast<std::size_t>(cols));
          an->accum_grad(g.data(), g.size());
        }
        if (un->requires_grad) {
          std::vector<T> gu(static_cast<std::size_t>(rows), T(0));
          for (int i = 0; i < rows; ++i) {
            T acc = T(0);
            const std::size_t base = static_cast<std::size_t>(i) * cols;
            for (int j = 0; j < cols; ++j) acc += y.grad[base + j] * an->data[base + j];
            gu[static_cast<std::size_t>(i)] = acc;
          }
          un->accum_grad(gu.data(), gu.size());
        }
      });
}

// ----------------------------------------------------- softmax / layernorm ---

// Softmax over the last axis, max-subtracted for stability.
template <class T>
Tensor<T> softmax(const Tensor<T>& a) {
  if (a.shape().empty()) throw std::invalid_argument("softmax: scalar input");
  const int n = a.shape().back();
  const std::size_t slices = a.size() / static_cast<std::size_t>(n);
  std::vector<T> out(a.size());
  for (std::size_t s = 0; s < slices; ++s) {
    const T* x = a.data() + s * n;
    T* y = out.data() + s * n;
    T mx = x[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    T sum = T(0);
    for (int j = 0; j < n; ++j) { y[j] = std::exp(x[j] - mx); sum += y[j]; }
    for (int j = 0; j < n; ++j) y[j] /= sum;
  }
  auto an = a.node();
  auto yv = out;
  return detail::make_op<T>(a.shape(), std::move(out), {a},
      [an, yv = std::move(yv), n, slices](TensorNode<T>& y) {
        if (!an->requires_grad) return;
        std::vector<T> g(y.grad.size());
        for (std::size_t s = 0; s < slices; ++s) {
          const T* gy = y.grad.data() + s * n;
          const T* sy = yv.data() + s * n;
          T dot = T(0);
          for (int j = 0; j < n; ++j) dot += gy[j] * sy[j];
          for (int j = 0; j < n; ++j)
            g[s * n + j] = (gy[j] - dot) * sy[j];
        }
        an->accum_grad(g.data(), g.size());
      });
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-5)) {
  if (x.shape().empty()) throw std::invalid_argument("layer_norm: scalar input");
  const int d = x.shape().back();
  if (gamma.size() != static_cast<std::size_t>(d) || beta.size() != gamma.size())
    throw std::invalid_argument("layer_norm: affine params must have extent " +
                                std::to_string(d));
  const std::size_t rows = x.size() / static_cast<std::size_t>(d);
  std::vector<T> out(x.size()), xhat(x.size()), rstd(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const T* xi = x.data() + i * d;
    T mu = kern::vsum(xi, static_cast<std::size_t>(d)) / T(d);
    T var = T(0);
    for (int j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= T(d);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[i] = rs;
    for (int j = 0; j < d; ++j) {
      const T h = (xi[j] - mu) * rs;
      xhat[i * d + j] = h;
      out[i * d + j] = gamma.data()[j] * h + beta.data()[j];
    }
  }
  auto xn = x.node(); auto gn = gamma.node(); auto bn = beta.node();
  return detail::make_op<T>(x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, xhat = std::move(xhat), rstd = std::move(rstd), d,
       rows](TensorNode<T>& y) {
        if (gn->requires_grad || bn->requires_grad) {
          std::vector<T> dg(static_cast<std::size_t>(d), T(0)),
              db(static_cast<std::size_t>(d), T(0));
          for (std::size_t i = 0; i < rows; ++i)
            for (int j = 0; j < d; ++j) {
              dg[static_cast<std::size_t>(j)] += y.grad[i * d + j] * xhat[i * d + j];
              db[static_cast<std::size_t>(j)] += y.grad[i * d + j];
            }
          gn->accum_grad(dg.data(), dg.size());
          bn->accum_grad(db.data(), db.size());
        }
        if (xn->requires_grad) {
          std::vector<T> gx(y.grad.size());
          for (std::size_t i = 0; i < rows; ++i) {
            T mean_dh = T(0), mean_dhh = T(0);
            for (int j = 0; j < d; ++j) {
              const T dh = y.grad[i * d + j] * gn->data[static_cast<std::size_t>(j)];
              mean_dh += dh;
              mean_dhh += dh * xhat[i * d + j];
            }
            mean_dh /= T(d);
            mean_dhh /= T(d);
            for (int j = 0; j < d; ++j) {
              const T dh = y.grad[i * d + j] * gn->data[static_cast<std::size_t>(j)];
              gx[i * d + j] = (dh - mean_dh - xhat[i * d + j] * mean_dhh) * rstd[i];
            }
          }
          xn->accum_grad(gx.data(), gx.size());
        }
      });
}

// ------------------------------------------------------------- reductions ---

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  std::vector<T> out{kern::vsum(a.data(), a.size())};
  auto an = a.node();
  return detail::make_op<T>({1}, std::move(out), {a},
      [an](TensorNode<T>& y) {
        if (!an->requires_grad) return;
        std::vector<T> g(an->data.size(), y.grad[0]);
        an->accum_grad(g.data(), g.size());
      });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

// ----------------------------------------------------------------- helpers ---

template <class T>
std::size_t argmax(const Tensor<T>& a) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < a.size(); ++i)
    if (a.data()[i] > a.data()[best]) best = i;
  return best;
}

// -------------------------------------------------------------- backward ----

template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1)
    throw std::logic_error("backward: loss must be scalar, got " +
                           shape_str(loss.shape()));
  if (!loss.requires_grad()) return;
  // Reverse topological order over the recorded tape.
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> seen;
  std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* node = *it;
    if (node->backfn && !node->grad.empty()) node->backfn(*node);
  }
}

}  // namespace moetrack
