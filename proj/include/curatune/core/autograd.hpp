// Copyright 2026 The curatune Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Minimal reverse-mode automatic differentiation over dense tensors.
//
// A Var wraps a shared graph node. Ops record their parents and a backward
// closure only while grad mode is on and at least one input requires grad,
// so inference under NoGradGuard builds no graph at all.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "curatune/core/error.hpp"
#include "curatune/core/tensor.hpp"

namespace curatune::ag {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialised on first use. Null when the node is
  /// not differentiable.
  Tensor<T>* grad_buffer() {
    if (!requires_grad) return nullptr;
    if (!has_grad) {
      grad = Tensor<T>(value.shape(), T{0});
      has_grad = true;
    }
    return &grad;
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool defined() const { return static_cast<bool>(node_); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_->has_grad; }
  const Tensor<T>& grad() const {
    if (!node_->has_grad) throw StateError("gradient requested before backward pass");
    return node_->grad;
  }
  Tensor<T>& mutable_grad() { return *node_->grad_buffer(); }
  void zero_grad() { node_->has_grad = false; }
  /// Scalar value of a single-element tensor.
  T item() const { return node_->value[0]; }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T, class Fn>
Var<T> make_op(Tensor<T> value, std::initializer_list<Var<T>> inputs, Fn&& backward) {
  Var<T> out(std::move(value));
  if (!grad_mode()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& in : inputs) node.parents.push_back(in.node());
  node.backward = std::forward<Fn>(backward);
  return out;
}

/// Runs reverse accumulation from a scalar loss.
template <class T>
void backward(const Var<T>& loss) {
  if (loss.value().numel() != 1) throw ShapeError("backward requires a scalar loss");
  if (!loss.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->grad_buffer()->fill(T{1});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && n->has_grad) n->backward(*n);
  }
}

namespace detail {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<Mat<T>>;
template <class T>
using CMapMat = Eigen::Map<const Mat<T>>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template <class T, class F, class DF>
Var<T> unary(const Var<T>& x, F f, DF df) {
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = f(xv[i]);
  return make_op<T>(std::move(y), {x}, [df](Node<T>& self) {
    auto& p = *self.parents[0];
    if (auto* g = p.grad_buffer())
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * df(p.value[i], self.value[i]);
  });
}

/// Output columns [lo, hi) whose input column ox*stride - pad + kx lies inside [0, W).
inline void valid_range(int W, int Wo, int stride, int pad, int kx, int& lo, int& hi) {
  const int off = kx - pad;
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  hi = (W - 1 - off) < 0 ? 0 : (W - 1 - off) / stride + 1;
  hi = std::min(hi, Wo);
  lo = std::min(lo, hi);
}

template <class T>
void im2col(const T* img, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* cols) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
        const T* plane = img + static_cast<std::size_t>(c) * H * W;
        int lo, hi;
        valid_range(W, Wo, stride, pad, kx, lo, hi);
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* out = row + oy * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(out, out + Wo, T{0});
            continue;
          }
          std::fill(out, out + lo, T{0});
          std::fill(out + hi, out + Wo, T{0});
          const T* src = plane + iy * W + (lo * stride - pad + kx);
          if (stride == 1) {
            std::copy(src, src + (hi - lo), out + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) out[ox] = src[(ox - lo) * stride];
          }
        }
      }
}

template <class T>
void col2im_add(const T* cols, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* img) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
        T* plane = img + static_cast<std::size_t>(c) * H * W;
        int lo, hi;
        valid_range(W, Wo, stride, pad, kx, lo, hi);
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          T* dst = plane + iy * W + (lo * stride - pad + kx);
          const T* in = row + oy * Wo;
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox - lo] += in[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[(ox - lo) * stride] += in[ox];
          }
        }
      }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] + b.value()[i];
  return make_op<T>(std::move(y), {a, b}, [](Node<T>& self) {
    for (int k = 0; k < 2; ++k)
      if (auto* g = self.parents[k]->grad_buffer())
        for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] - b.value()[i];
  return make_op<T>(std::move(y), {a, b}, [](Node<T>& self) {
    if (auto* g = self.parents[0]->grad_buffer())
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = self.parents[1]->grad_buffer())
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] -= self.grad[i];
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] * b.value()[i];
  return make_op<T>(std::move(y), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (auto* g = pa.grad_buffer())
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * pb.value[i];
    if (auto* g = pb.grad_buffer())
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * pa.value[i];
  });
}

template <class T>
Var<T> scale(const Var<T>& x, T s) {
  return detail::unary<T>(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <class T>
Var<T> add_scalar(const Var<T>& x, T s) {
  return detail::unary<T>(x, [s](T v) { return v + s; }, [](T, T) { return T{1}; });
}

template <class T>
Var<T> square(const Var<T>& x) {
  return detail::unary<T>(x, [](T v) { return v * v; }, [](T v, T) { return T{2} * v; });
}

template <class T>
Var<T> exp(const Var<T>& x) {
  return detail::unary<T>(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return detail::unary<T>(x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope = T(0.2)) {
  return detail::unary<T>(
      x, [slope](T v) { return v > T{0} ? v : slope * v; }, [slope](T v, T) { return v > T{0} ? T{1} : slope; });
}

template <class T>
Var<T> silu(const Var<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return v / (T{1} + std::exp(-v)); },
      [](T v, T) {
        const T s = T{1} / (T{1} + std::exp(-v));
        return s * (T{1} + v * (T{1} - s));
      });
}

/// Clamps values; the gradient is zero outside [lo, hi].
template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  return detail::unary<T>(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); }, [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T{1} : T{0}; });
}

template <class T>
Var<T> tanh(const Var<T>& x) {
  return detail::unary<T>(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

// ---------------------------------------------------------------------------
// Reductions and losses

template <class T>
Var<T> sum(const Var<T>& x) {
  T s{0};
  for (T v : x.value().vec()) s += v;
  return make_op<T>(Tensor<T>(Shape{}, std::vector<T>{s}), {x}, [](Node<T>& self) {
    if (auto* g = self.parents[0]->grad_buffer())
      for (auto& v : g->vec()) v += self.grad[0];
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  const T n = static_cast<T>(x.value().numel());
  return scale(sum(x), T{1} / n);
}

/// Mean squared error against a constant target.
template <class T>
Var<T> mse_loss(const Var<T>& pred, const Tensor<T>& target) {
  detail::require_same_shape(pred.shape(), target.shape(), "mse_loss");
  const auto& p = pred.value();
  T s{0};
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const T d = p[i] - target[i];
    s += d * d;
  }
  const T n = static_cast<T>(p.numel());
  return make_op<T>(Tensor<T>(Shape{}, std::vector<T>{s / n}), {pred}, [target, n](Node<T>& self) {
    auto& pp = *self.parents[0];
    if (auto* g = pp.grad_buffer()) {
      const T c = T{2} * self.grad[0] / n;
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += c * (pp.value[i] - target[i]);
    }
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> y = x.value().reshaped(std::move(shape));
  return make_op<T>(std::move(y), {x}, [](Node<T>& self) {
    if (auto* g = self.parents[0]->grad_buffer())
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
  });
}

/// Concatenates along axis 1. Shapes must agree on every other axis.
template <class T>
Var<T> concat1(const Var<T>& a, const Var<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() < 2 || sa.size() != sb.size() || sa[0] != sb[0] ||
      !std::equal(sa.begin() + 2, sa.end(), sb.begin() + 2))
    throw ShapeError("concat1: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  const std::size_t inner = shape_numel(Shape(sa.begin() + 2, sa.end()));
  const std::size_t ca = static_cast<std::size_t>(sa[1]) * inner;
  const std::size_t cb = static_cast<std::size_t>(sb[1]) * inner;
  Shape so = sa;
  so[1] += sb[1];
  Tensor<T> y(so);
  for (int n = 0; n < sa[0]; ++n) {
    std::copy_n(a.value().data() + n * ca, ca, y.data() + n * (ca + cb));
    std::copy_n(b.value().data() + n * cb, cb, y.data() + n * (ca + cb) + ca);
  }
  const int batch = sa[0];
  return make_op<T>(std::move(y), {a, b}, [batch, ca, cb](Node<T>& self) {
    if (auto* g = self.parents[0]->grad_buffer())
      for (int n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < ca; ++i) (*g)[n * ca + i] += self.grad[n * (ca + cb) + i];
    if (auto* g = self.parents[1]->grad_buffer())
      for (int n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < cb; ++i) (*g)[n * cb + i] += self.grad[n * (ca + cb) + ca + i];
  });
}

/// Takes `count` entries starting at `start` along axis 1.
template <class T>
Var<T> slice1(const Var<T>& x, int start, int count) {
  const auto& s = x.shape();
  if (s.size() < 2 || start < 0 || count < 0 || start + count > s[1])
    throw ShapeError("slice1: range out of bounds for " + shape_str(s));
  const std::size_t inner = shape_numel(Shape(s.begin() + 2, s.end()));
  const std::size_t full = static_cast<std::size_t>(s[1]) * inner;
  const std::size_t part = static_cast<std::size_t>(count) * inner;
  const std::size_t off = static_cast<std::size_t>(start) * inner;
  Shape so = s;
  so[1] = count;
  Tensor<T> y(so);
  for (int n = 0; n < s[0]; ++n) std::copy_n(x.value().data() + n * full + off, part, y.data() + n * part);
  const int batch = s[0];
  return make_op<T>(std::move(y), {x}, [batch, full, part, off](Node<T>& self) {
    if (auto* g = self.parents[0]->grad_buffer())
      for (int n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < part; ++i) (*g)[n * full + off + i] += self.grad[n * part + i];
  });
}

/// [N, A, B] -> [N, B, A]
template <class T>
Var<T> transpose12(const Var<T>& x) {
  const auto& s = x.shape();
  if (s.size() != 3) throw ShapeError("transpose12 expects rank 3, got " + shape_str(s));
  const int N = s[0], A = s[1], B = s[2];
  Tensor<T> y(Shape{N, B, A});
  for (int n = 0; n < N; ++n)
    for (int a = 0; a < A; ++a)
      for (int b = 0; b < B; ++b) y[(n * B + b) * A + a] = x.value()[(n * A + a) * B + b];
  return make_op<T>(std::move(y), {x}, [N, A, B](Node<T>& self) {
    if (auto* g = self.parents[0]->grad_buffer())
      for (int n = 0; n < N; ++n)
        for (int a = 0; a < A; ++a)
          for (int b = 0; b < B; ++b) (*g)[(n * A + a) * B + b] += self.grad[(n * B + b) * A + a];
  });
}

/// Adds a per-sample, per-channel vector v [N, C] to x [N, C, ...].
template <class T>
Var<T> channel_bias(const Var<T>& x, const Var<T>& v) {
  const auto& s = x.shape();
  if (s.size() < 2 || v.shape() != Shape{s[0], s[1]})
    throw ShapeError("channel_bias: " + shape_str(v.shape()) + " does not broadcast onto " + shape_str(s));
  const std::size_t inner = shape_numel(Shape(s.begin() + 2, s.end()));
  Tensor<T> y = x.value();
  const std::size_t rows = static_cast<std::size_t>(s[0]) * s[1];
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < inner; ++i) y[r * inner + i] += v.value()[r];
  return make_op<T>(std::move(y), {x, v}, [rows, inner](Node<T>& self) {
    if (auto* g = self.parents[0]->grad_buffer())
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = self.parents[1]->grad_buffer())
      for (std::size_t r = 0; r < rows; ++r) {
        T acc{0};
        for (std::size_t i = 0; i < inner; ++i) acc += self.grad[r * inner + i];
        (*g)[r] += acc;
      }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// Affine map over the last axis: x [..., D] * w [D, E] + b [E].
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  using namespace detail;
  const auto& s = x.shape();
  if (s.empty() || w.shape().size() != 2 || s.back() != w.shape()[0] || b.shape() != Shape{w.shape()[1]})
    throw ShapeError("linear: x " + shape_str(s) + " w " + shape_str(w.shape()) + " b " + shape_str(b.shape()));
  const int D = w.shape()[0], E = w.shape()[1];
  const int R = static_cast<int>(x.value().numel() / D);
  Shape so = s;
  so.back() = E;
  Tensor<T> y(so);
  {
    CMapMat<T> X(x.value().data(), R, D);
    CMapMat<T> Wm(w.value().data(), D, E);
    MapMat<T> Y(y.data(), R, E);
    Y.noalias() = X * Wm;
    Y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.value().data(), E);
  }
  return make_op<T>(std::move(y), {x, w, b}, [R, D, E](Node<T>& self) {
    CMapMat<T> dY(self.grad.data(), R, E);
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    if (auto* g = px.grad_buffer()) MapMat<T>(g->data(), R, D).noalias() += dY * CMapMat<T>(pw.value.data(), D, E).transpose();
    if (auto* g = pw.grad_buffer()) MapMat<T>(g->data(), D, E).noalias() += CMapMat<T>(px.value.data(), R, D).transpose() * dY;
    if (auto* g = pb.grad_buffer())
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g->data(), E) += dY.colwise().sum();
  });
}

/// Batched a [N, M, K] * b[N, P, K]^T -> [N, M, P].
template <class T>
Var<T> bmm_nt(const Var<T>& a, const Var<T>& b) {
  using namespace detail;
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[2])
    throw ShapeError("bmm_nt: " + shape_str(sa) + " x " + shape_str(sb));
  const int N = sa[0], M = sa[1], K = sa[2], P = sb[1];
  Tensor<T> y(Shape{N, M, P});
  for (int n = 0; n < N; ++n)
    MapMat<T>(y.data() + n * M * P, M, P).noalias() =
        CMapMat<T>(a.value().data() + n * M * K, M, K) * CMapMat<T>(b.value().data() + n * P * K, P, K).transpose();
  return make_op<T>(std::move(y), {a, b}, [N, M, K, P](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    auto* ga = pa.grad_buffer();
    auto* gb = pb.grad_buffer();
    for (int n = 0; n < N; ++n) {
      CMapMat<T> dY(self.grad.data() + n * M * P, M, P);
      if (ga) MapMat<T>(ga->data() + n * M * K, M, K).noalias() += dY * CMapMat<T>(pb.value.data() + n * P * K, P, K);
      if (gb)
        MapMat<T>(gb->data() + n * P * K, P, K).noalias() += dY.transpose() * CMapMat<T>(pa.value.data() + n * M * K, M, K);
    }
  });
}

/// Batched a [N, M, P] * b [N, P, K] -> [N, M, K].
template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& b) {
  using namespace detail;
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1])
    throw ShapeError("bmm: " + shape_str(sa) + " x " + shape_str(sb));
  const int N = sa[0], M = sa[1], P = sa[2], K = sb[2];
  Tensor<T> y(Shape{N, M, K});
  for (int n = 0; n < N; ++n)
    MapMat<T>(y.data() + n * M * K, M, K).noalias() =
        CMapMat<T>(a.value().data() + n * M * P, M, P) * CMapMat<T>(b.value().data() + n * P * K, P, K);
  return make_op<T>(std::move(y), {a, b}, [N, M, P, K](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    auto* ga = pa.grad_buffer();
    auto* gb = pb.grad_buffer();
    for (int n = 0; n < N; ++n) {
      CMapMat<T> dY(self.grad.data() + n * M * K, M, K);
      if (ga)
        MapMat<T>(ga->data() + n * M * P, M, P).noalias() += dY * CMapMat<T>(pb.value.data() + n * P * K, P, K).transpose();
      if (gb)
        MapMat<T>(gb->data() + n * P * K, P, K).noalias() += CMapMat<T>(pa.value.data() + n * M * P, M, P).transpose() * dY;
    }
  });
}

/// Softmax over the last axis.
template <class T>
Var<T> softmax_last(const Var<T>& x) {
  const int D = x.shape().back();
  const std::size_t R = x.value().numel() / D;
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < R; ++r) {
    const T* in = x.value().data() + r * D;
    T* out = y.data() + r * D;
    const T mx = *std::max_element(in, in + D);
    T z{0};
    for (int i = 0; i < D; ++i) z += (out[i] = std::exp(in[i] - mx));
    for (int i = 0; i < D; ++i) out[i] /= z;
  }
  return make_op<T>(std::move(y), {x}, [R, D](Node<T>& self) {
    if (auto* g = self.parents[0]->grad_buffer())
      for (std::size_t r = 0; r < R; ++r) {
        const T* yv = self.value.data() + r * D;
        const T* dy = self.grad.data() + r * D;
        T dot{0};
        for (int i = 0; i < D; ++i) dot += dy[i] * yv[i];
        for (int i = 0; i < D; ++i) (*g)[r * D + i] += yv[i] * (dy[i] - dot);
      }
  });
}

// ---------------------------------------------------------------------------
// Convolution

/// 2-D convolution. x [N, Ci, H, W], w [Co, Ci, k, k], b [Co].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  using namespace detail;
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1] || ws[2] != ws[3] || b.shape() != Shape{ws[0]})
    throw ShapeError("conv2d: x " + shape_str(xs) + " w " + shape_str(ws) + " b " + shape_str(b.shape()));
  const int N = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
  const int Co = ws[0], k = ws[2];
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: input " + shape_str(xs) + " too small for kernel");
  const int K = Ci * k * k, P = Ho * Wo;
  const bool pointwise = (k == 1 && stride == 1 && pad == 0);
  Tensor<T> y(Shape{N, Co, Ho, Wo});
  // Columns are kept for the weight gradient when a graph is being recorded.
  const bool keep_cols = !pointwise && grad_mode() && w.requires_grad();
  auto saved = std::make_shared<std::vector<T>>();
  {
    CMapMat<T> Wm(w.value().data(), Co, K);
    Eigen::Map<const Vec<T>> bv(b.value().data(), Co);
    const std::size_t block = static_cast<std::size_t>(K) * P;
    if (!pointwise) saved->resize(keep_cols ? block * N : block);
    for (int n = 0; n < N; ++n) {
      const T* xn = x.value().data() + static_cast<std::size_t>(n) * Ci * H * W;
      MapMat<T> Y(y.data() + static_cast<std::size_t>(n) * Co * P, Co, P);
      if (pointwise) {
        Y.noalias() = Wm * CMapMat<T>(xn, K, P);
      } else {
        T* cols = saved->data() + (keep_cols ? block * n : 0);
        im2col(xn, Ci, H, W, k, stride, pad, Ho, Wo, cols);
        Y.noalias() = Wm * CMapMat<T>(cols, K, P);
      }
      Y.colwise() += bv;
    }
  }
  if (!keep_cols) saved->clear();
  return make_op<T>(std::move(y), {x, w, b}, [=](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    auto* gx = px.grad_buffer();
    auto* gw = pw.grad_buffer();
    auto* gb = pb.grad_buffer();
    CMapMat<T> Wm(pw.value.data(), Co, K);
    const std::size_t block = static_cast<std::size_t>(K) * P;
    Mat<T> cols(pointwise || !saved->empty() ? 0 : K, pointwise || !saved->empty() ? 0 : P);
    Mat<T> dcols(K, P);
    for (int n = 0; n < N; ++n) {
      CMapMat<T> dY(self.grad.data() + static_cast<std::size_t>(n) * Co * P, Co, P);
      const T* xn = px.value.data() + static_cast<std::size_t>(n) * Ci * H * W;
      if (gb) Eigen::Map<Vec<T>>(gb->data(), Co) += dY.rowwise().sum();
      if (gw) {
        if (pointwise) {
          MapMat<T>(gw->data(), Co, K).noalias() += dY * CMapMat<T>(xn, K, P).transpose();
        } else if (!saved->empty()) {
          MapMat<T>(gw->data(), Co, K).noalias() += dY * CMapMat<T>(saved->data() + block * n, K, P).transpose();
        } else {
          im2col(xn, Ci, H, W, k, stride, pad, Ho, Wo, cols.data());
          MapMat<T>(gw->data(), Co, K).noalias() += dY * cols.transpose();
        }
      }
      if (gx) {
        T* gxn = gx->data() + static_cast<std::size_t>(n) * Ci * H * W;
        if (pointwise) {
          MapMat<T>(gxn, K, P).noalias() += Wm.transpose() * dY;
        } else {
          dcols.noalias() = Wm.transpose() * dY;
          col2im_add(dcols.data(), Ci, H, W, k, stride, pad, Ho, Wo, gxn);
        }
      }
    }
  });
}

/// Nearest-neighbour 2x spatial upsampling of [N, C, H, W].
template <class T>
Var<T> upsample2x(const Var<T>& x) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeError("upsample2x expects rank 4, got " + shape_str(s));
  const int NC = s[0] * s[1], H = s[2], W = s[3];
  Tensor<T> y(Shape{s[0], s[1], 2 * H, 2 * W});
  for (int p = 0; p < NC; ++p)
    for (int i = 0; i < 2 * H; ++i)
      for (int j = 0; j < 2 * W; ++j)
        y[(static_cast<std::size_t>(p) * 2 * H + i) * 2 * W + j] = x.value()[(static_cast<std::size_t>(p) * H + i / 2) * W + j / 2];
  return make_op<T>(std::move(y), {x}, [NC, H, W](Node<T>& self) {
    if (auto* g = self.parents[0]->grad_buffer())
      for (int p = 0; p < NC; ++p)
        for (int i = 0; i < 2 * H; ++i)
          for (int j = 0; j < 2 * W; ++j)
            (*g)[(static_cast<std::size_t>(p) * H + i / 2) * W + j / 2] +=
                self.grad[(static_cast<std::size_t>(p) * 2 * H + i) * 2 * W + j];
  });
}

}  // namespace curatune::ag
