#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <tuple>
#include <type_traits>
#include <vector>

#include "jepa3d/diff/autodiff.hpp"
#include "jepa3d/diff/gemm.hpp"
#include "jepa3d/random.hpp"

// Differentiable operators. Every op validates shapes before computing and
// records a backward closure only when some input requires a gradient.

namespace jepa3d {

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcast-compatible");
    out[i] = std::max(da, db);
  }
  return out;
}

// True when `in`, ignoring leading ones, equals the trailing dims of `out`.
inline bool is_trailing(const Shape& in, const Shape& out) {
  std::size_t first = 0;
  while (first < in.size() && in[first] == 1) ++first;
  const std::size_t len = in.size() - first;
  if (len > out.size()) return false;
  return std::equal(in.begin() + static_cast<long>(first), in.end(), out.end() - static_cast<long>(len));
}

inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  const std::size_t off = out.size() - in.size();
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    if (in[i] != 1) strides[i + off] = s;
    s *= in[i];
  }
  return strides;
}

// Calls f(out_index, a_index, b_index) for every element of `out`.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
  const std::size_t n = shape_numel(out);
  const std::size_t na = shape_numel(a);
  const std::size_t nb = shape_numel(b);
  if (na == n && nb == n) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  if (na == n && is_trailing(b, out)) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i % nb);
    return;
  }
  if (nb == n && is_trailing(a, out)) {
    for (std::size_t i = 0; i < n; ++i) f(i, i % na, i);
    return;
  }
  const auto sa = broadcast_strides(a, out);
  const auto sb = broadcast_strides(b, out);
  const std::size_t r = out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

// Splits a shape around `axis` into (outer, length, inner) extents.
inline std::tuple<std::size_t, std::size_t, std::size_t> split_axis(const Shape& s, std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, s[axis], inner};
}

template <class T>
void require_finite(const Tensor<T>& t, const char* op, const char* what) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i]))
      throw NumericError(std::string(op) + ": non-finite " + what + " at index " + std::to_string(i));
}

template <class T, class Fwd, class GradA, class GradB>
Var<T> binary(const char* op, const Var<T>& a, const Var<T>& b, Fwd fwd, GradA grad_a, GradB grad_b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape(), op);
  Tensor<T> out(out_shape);
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  for_each_broadcast(out_shape, a.shape(), b.shape(),
                     [&](std::size_t i, std::size_t ia, std::size_t ib) { po[i] = fwd(pa[ia], pb[ib]); });
  return record<T>(op, std::move(out), {a, b}, [grad_a, grad_b](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    const T* g = self.grad.data();
    const T* xa = na.value.data();
    const T* xb = nb.value.data();
    T* ga = na.requires_grad ? na.grad_buffer().data() : nullptr;
    T* gb = nb.requires_grad ? nb.grad_buffer().data() : nullptr;
    for_each_broadcast(self.value.shape(), na.value.shape(), nb.value.shape(),
                       [&](std::size_t i, std::size_t ia, std::size_t ib) {
                         if (ga) ga[ia] += grad_a(xa[ia], xb[ib], g[i]);
                         if (gb) gb[ib] += grad_b(xa[ia], xb[ib], g[i]);
                       });
  });
}

}  // namespace detail

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T g) { return g; }, [](T, T, T g) { return g; });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T g) { return g; }, [](T, T, T g) { return -g; });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T g) { return g * y; },
      [](T x, T, T g) { return g * x; });
}

template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
  return add(a, b);
}
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
  return sub(a, b);
}
template <class T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) {
  return mul(a, b);
}

template <class T>
Var<T> scale(const Var<T>& x, T s) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v *= s;
  return record<T>("scale", std::move(out), {x}, [s](Node<T>& self) {
    auto& in = *self.inputs[0];
    T* g = in.grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
  });
}

// Batched matrix product over the last two dims; leading dims broadcast.
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw ShapeError("matmul: operands need rank >= 2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t m = a.dim(-2), k = a.dim(-1), kb = b.dim(-2), n = b.dim(-1);
  if (k != kb)
    throw ShapeError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);

  // Rank-2 right operand: fold every leading dim of `a` into the row count.
  if (batch_b.empty()) {
    const std::size_t rows = a.size() / k;
    Shape out_shape = a.shape();
    out_shape.back() = n;
    Tensor<T> out(out_shape);
    detail::gemm(a.value().data(), b.value().data(), out.data(), rows, k, n, false, false, false);
    return record<T>("matmul", std::move(out), {a, b}, [rows, k, n](Node<T>& self) {
      auto& na = *self.inputs[0];
      auto& nb = *self.inputs[1];
      if (na.requires_grad)
        detail::gemm(self.grad.data(), nb.value.data(), na.grad_buffer().data(), rows, n, k, false, true, true);
      if (nb.requires_grad)
        detail::gemm(na.value.data(), self.grad.data(), nb.grad_buffer().data(), k, rows, n, true, false, true);
    });
  }

  const Shape batch = detail::broadcast_shape(batch_a, batch_b, "matmul");
  std::vector<std::array<std::size_t, 3>> pairs;
  pairs.reserve(shape_numel(batch));
  detail::for_each_broadcast(batch, batch_a, batch_b, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    pairs.push_back({i, ia, ib});
  });
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<T> out(out_shape);
  for (const auto& [io, ia, ib] : pairs)
    detail::gemm(a.value().data() + ia * m * k, b.value().data() + ib * k * n, out.data() + io * m * n, m, k, n,
                 false, false, false);
  return record<T>("matmul", std::move(out), {a, b}, [pairs, m, k, n](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    for (const auto& [io, ia, ib] : pairs) {
      const T* g = self.grad.data() + io * m * n;
      if (na.requires_grad)
        detail::gemm(g, nb.value.data() + ib * k * n, na.grad_buffer().data() + ia * m * k, m, n, k, false, true,
                     true);
      if (nb.requires_grad)
        detail::gemm(na.value.data() + ia * m * k, g, nb.grad_buffer().data() + ib * k * n, k, m, n, true, false,
                     true);
    }
  });
}

// x[..., in] * weight[in, out] + bias[out]. `bias` may be undefined.
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.dim(-1) != weight.dim(0))
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  const std::size_t in = weight.dim(0), out_dim = weight.dim(1), rows = x.size() / in;
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != out_dim))
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  Tensor<T> out(out_shape);
  detail::gemm(x.value().data(), weight.value().data(), out.data(), rows, in, out_dim, false, false, false);
  if (has_bias) {
    const T* pb = bias.value().data();
    T* po = out.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < out_dim; ++j) po[r * out_dim + j] += pb[j];
  }
  std::vector<Var<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return record<T>("linear", std::move(out), std::move(inputs), [rows, in, out_dim](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& nw = *self.inputs[1];
    const T* g = self.grad.data();
    if (nx.requires_grad)
      detail::gemm(g, nw.value.data(), nx.grad_buffer().data(), rows, out_dim, in, false, true, true);
    if (nw.requires_grad)
      detail::gemm(nx.value.data(), g, nw.grad_buffer().data(), in, rows, out_dim, true, false, true);
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      T* gb = self.inputs[2]->grad_buffer().data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[r * out_dim + j];
    }
  });
}

namespace detail {

// Rational tanh for float, a few ulp from std::tanh and branch-free so the
// loops vectorize. Doubles use the library call.
template <class T>
inline T tanh_fast(T x) {
  if constexpr (std::is_same_v<T, float>) {
    const float c = std::min(7.90531110763549805f, std::max(-7.90531110763549805f, x));
    const float x2 = c * c;
    float p = -2.76076847742355e-16f;
    p = p * x2 + 2.00018790482477e-13f;
    p = p * x2 - 8.60467152213735e-11f;
    p = p * x2 + 5.12229709037114e-08f;
    p = p * x2 + 1.48572235717979e-05f;
    p = p * x2 + 6.37261928875436e-04f;
    p = p * x2 + 4.89352455891786e-03f;
    p = p * c;
    float q = 1.19825839466702e-06f;
    q = q * x2 + 1.18534705686654e-04f;
    q = q * x2 + 2.26843463243900e-03f;
    q = q * x2 + 4.89352518554385e-03f;
    return p / q;
  } else {
    return std::tanh(x);
  }
}

}  // namespace detail

// Tanh-approximation GELU.
template <class T>
Var<T> gelu(const Var<T>& x) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2 / pi)
  constexpr T a = T(0.044715);
  Tensor<T> out(x.shape());
  std::vector<T> th(out.size());
  const T* px = x.value().data();
  T* po = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const T v = px[i];
    th[i] = detail::tanh_fast(c * (v + a * v * v * v));
  }
  for (std::size_t i = 0; i < n; ++i) po[i] = T(0.5) * px[i] * (T(1) + th[i]);
  return record<T>("gelu", std::move(out), {x}, [th = std::move(th)](Node<T>& self) {
    auto& in = *self.inputs[0];
    const T* px = in.value.data();
    const T* pg = self.grad.data();
    T* g = in.grad_buffer().data();
    const std::size_t n = self.grad.size();
    for (std::size_t i = 0; i < n; ++i) {
      const T v = px[i];
      const T t = th[i];
      const T d = T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * c * (T(1) + T(3) * a * v * v);
      g[i] += pg[i] * d;
    }
  });
}

template <class T>
Var<T> softmax(const Var<T>& x, long axis = -1) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "softmax");
  detail::require_finite(x.value(), "softmax", "input");
  const auto [outer, len, inner] = detail::split_axis(x.shape(), ax);
  Tensor<T> out(x.shape());
  const T* px = x.value().data();
  T* po = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = px[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, px[base + j * inner]);
      T sum = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(px[base + j * inner] - mx);
        po[base + j * inner] = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      for (std::size_t j = 0; j < len; ++j) po[base + j * inner] *= inv;
    }
  return record<T>("softmax", std::move(out), {x}, [outer, len, inner](Node<T>& self) {
    auto& in_node = *self.inputs[0];
    const T* y = self.value.data();
    const T* g = self.grad.data();
    T* gx = in_node.grad_buffer().data();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = 0;
        for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t p = base + j * inner;
          gx[p] += y[p] * (g[p] - dot);
        }
      }
  });
}

// Normalizes over the last dim with epsilon 1e-5, then applies gain and bias.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5)) {
  const std::size_t c = x.dim(-1);
  if (gain.rank() != 1 || gain.dim(0) != c || bias.rank() != 1 || bias.dim(0) != c)
    throw ShapeError("layer_norm: input " + shape_str(x.shape()) + " vs gain " + shape_str(gain.shape()) +
                     " / bias " + shape_str(bias.shape()));
  const std::size_t rows = x.size() / c;
  Tensor<T> out(x.shape());
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(rows);
  const T* px = x.value().data();
  const T* pg = gain.value().data();
  const T* pb = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * c;
    double mean = 0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(c);
    const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    inv_std[r] = inv;
    for (std::size_t j = 0; j < c; ++j) {
      const T h = static_cast<T>(row[j] - mean) * inv;
      xhat[r * c + j] = h;
      out[r * c + j] = h * pg[j] + pb[j];
    }
  }
  return record<T>("layer_norm", std::move(out), {x, gain, bias},
                   [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, c](Node<T>& self) {
                     auto& nx = *self.inputs[0];
                     auto& ng = *self.inputs[1];
                     auto& nb = *self.inputs[2];
                     const T* g = self.grad.data();
                     const T* pg = ng.value.data();
                     if (ng.requires_grad) {
                       T* gg = ng.grad_buffer().data();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < c; ++j) gg[j] += g[r * c + j] * xhat[r * c + j];
                     }
                     if (nb.requires_grad) {
                       T* gb = nb.grad_buffer().data();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
                     }
                     if (nx.requires_grad) {
                       T* gx = nx.grad_buffer().data();
                       for (std::size_t r = 0; r < rows; ++r) {
                         double mean_d = 0, mean_dx = 0;
                         for (std::size_t j = 0; j < c; ++j) {
                           const double d = static_cast<double>(g[r * c + j]) * pg[j];
                           mean_d += d;
                           mean_dx += d * xhat[r * c + j];
                         }
                         mean_d /= static_cast<double>(c);
                         mean_dx /= static_cast<double>(c);
                         for (std::size_t j = 0; j < c; ++j) {
                           const double d = static_cast<double>(g[r * c + j]) * pg[j];
                           gx[r * c + j] += static_cast<T>(inv_std[r] * (d - mean_d - xhat[r * c + j] * mean_dx));
                         }
                       }
                     }
                   });
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return record<T>("reshape", std::move(out), {x},
                   [](Node<T>& self) { self.inputs[0]->accumulate(self.grad.values()); });
}

// Reorders dimensions: out.shape[i] = x.shape[axes[i]].
template <class T>
Var<T> permute(const Var<T>& x, std::vector<std::size_t> axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) throw ShapeError("permute: axes do not match rank of " + shape_str(x.shape()));
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) throw ShapeError("permute: invalid axis list for " + shape_str(x.shape()));
    seen[a] = true;
  }
  Shape out_shape(r);
  std::vector<std::size_t> in_strides(r);
  std::size_t s = 1;
  for (std::size_t i = r; i-- > 0;) {
    in_strides[i] = s;
    s *= x.shape()[i];
  }
  std::vector<std::size_t> src_strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = x.shape()[axes[i]];
    src_strides[i] = in_strides[axes[i]];
  }
  // src[i] = input offset of output element i.
  const std::size_t n = x.size();
  std::vector<std::size_t> src(n);
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      src[i] = off;
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += src_strides[d];
        if (idx[d] < out_shape[d]) break;
        off -= src_strides[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  }
  Tensor<T> out(out_shape);
  const T* px = x.value().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = px[src[i]];
  return record<T>("permute", std::move(out), {x}, [src = std::move(src)](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
  });
}

template <class T>
Var<T> sum(const Var<T>& x) {
  double acc = 0;
  for (auto v : x.value().values()) acc += v;
  return record<T>("sum", Tensor<T>::scalar(static_cast<T>(acc)), {x}, [](Node<T>& self) {
    const T g = self.grad[0];
    for (auto& v : self.inputs[0]->grad_buffer().values()) v += g;
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

namespace detail {

inline Shape reduced_shape(const Shape& s, std::size_t axis, bool keepdim) {
  Shape out = s;
  if (keepdim)
    out[axis] = 1;
  else
    out.erase(out.begin() + static_cast<long>(axis));
  return out;
}

}  // namespace detail

template <class T>
Var<T> sum(const Var<T>& x, long axis, bool keepdim = false) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "sum");
  const auto [outer, len, inner] = detail::split_axis(x.shape(), ax);
  Tensor<T> out(detail::reduced_shape(x.shape(), ax, keepdim));
  const T* px = x.value().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < len; ++j)
      for (std::size_t in = 0; in < inner; ++in) out[o * inner + in] += px[(o * len + j) * inner + in];
  return record<T>("sum_axis", std::move(out), {x}, [outer, len, inner](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < len; ++j)
        for (std::size_t in = 0; in < inner; ++in) g[(o * len + j) * inner + in] += self.grad[o * inner + in];
  });
}

template <class T>
Var<T> mean(const Var<T>& x, long axis, bool keepdim = false) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "mean");
  return scale(sum(x, axis, keepdim), T(1) / static_cast<T>(x.shape()[ax]));
}

// Maximum along an axis; the gradient routes to the first maximal element.
template <class T>
Var<T> max(const Var<T>& x, long axis, bool keepdim = false) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "max");
  const auto [outer, len, inner] = detail::split_axis(x.shape(), ax);
  Tensor<T> out(detail::reduced_shape(x.shape(), ax, keepdim));
  std::vector<std::size_t> arg(outer * inner);
  const T* px = x.value().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t best = (o * len) * inner + in;
      for (std::size_t j = 1; j < len; ++j) {
        const std::size_t p = (o * len + j) * inner + in;
        if (px[p] > px[best]) best = p;
      }
      arg[o * inner + in] = best;
      out[o * inner + in] = px[best];
    }
  return record<T>("max", std::move(out), {x}, [arg = std::move(arg)](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
  });
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, long axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t ax = normalize_axis(axis, parts[0].rank(), "concat");
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = parts[0].shape();
    if (a.size() != b.size()) throw ShapeError("concat: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    a[ax] = b[ax] = 0;
    if (a != b) throw ShapeError("concat: shapes " + shape_str(p.shape()) + " and " + shape_str(parts[0].shape()) +
                                 " differ off the concat axis");
    out_shape[ax] += p.shape()[ax];
  }
  const auto [outer, total, inner] = detail::split_axis(out_shape, ax);
  Tensor<T> out(out_shape);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[ax] * inner;
    const T* src = p.value().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(src + o * w, src + (o + 1) * w, out.data() + o * total * inner + offset);
    widths.push_back(w);
    offset += w;
  }
  return record<T>("concat", std::move(out), parts, [widths, outer, row = total * inner](Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      auto& in = *self.inputs[k];
      if (in.requires_grad) {
        T* g = in.grad_buffer().data();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[k]; ++i) g[o * widths[k] + i] += self.grad[o * row + offset + i];
      }
      offset += widths[k];
    }
  });
}

template <class T>
Var<T> broadcast_to(const Var<T>& x, const Shape& shape) {
  if (detail::broadcast_shape(x.shape(), shape, "broadcast_to") != shape)
    throw ShapeError("broadcast_to: cannot expand " + shape_str(x.shape()) + " to " + shape_str(shape));
  Tensor<T> out(shape);
  const T* px = x.value().data();
  detail::for_each_broadcast(shape, x.shape(), shape,
                             [&](std::size_t i, std::size_t ia, std::size_t) { out[i] = px[ia]; });
  return record<T>("broadcast_to", std::move(out), {x}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    T* g = in.grad_buffer().data();
    detail::for_each_broadcast(self.value.shape(), in.value.shape(), self.value.shape(),
                               [&](std::size_t i, std::size_t ia, std::size_t) { g[ia] += self.grad[i]; });
  });
}

// Gathers slices along axis 0.
template <class T>
Var<T> index_select(const Var<T>& x, std::span<const std::size_t> indices) {
  if (x.rank() < 1 || indices.empty()) throw ShapeError("index_select: need rank >= 1 and a nonempty index list");
  const std::size_t n = x.dim(0);
  const std::size_t row = x.size() / n;
  for (auto i : indices)
    if (i >= n)
      throw ShapeError("index_select: index " + std::to_string(i) + " out of range for " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[0] = indices.size();
  Tensor<T> out(out_shape);
  const T* px = x.value().data();
  for (std::size_t r = 0; r < indices.size(); ++r)
    std::copy(px + indices[r] * row, px + (indices[r] + 1) * row, out.data() + r * row);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return record<T>("index_select", std::move(out), {x}, [idx = std::move(idx), row](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < row; ++j) g[idx[r] * row + j] += self.grad[r * row + j];
  });
}

// Query rows [q_begin, q_begin + q_len) attend to key/value rows
// [kv_begin, kv_begin + kv_len) of a packed batch.
struct AttentionSpan {
  std::size_t q_begin = 0, q_len = 0, kv_begin = 0, kv_len = 0;
};

// Scaled dot-product attention over packed sequences: q [Nq, C], k and v
// [Nk, C], C split into `heads` equal slices. Spans must cover every query
// row exactly once. Each span is computed the same way wherever it sits in
// the batch, so packing never changes a sequence's result.
template <class T>
Var<T> segment_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads,
                         std::vector<AttentionSpan> spans) {
  if (q.rank() != 2 || k.rank() != 2 || v.shape() != k.shape() || q.dim(1) != k.dim(1))
    throw ShapeError("attention: query " + shape_str(q.shape()) + ", key " + shape_str(k.shape()) + ", value " +
                     shape_str(v.shape()) + " are inconsistent");
  const std::size_t nq = q.dim(0), nk = k.dim(0), dim = q.dim(1);
  if (heads == 0 || dim % heads != 0)
    throw ConfigError("attention: width " + std::to_string(dim) + " not divisible by " + std::to_string(heads) + " heads");
  std::vector<bool> covered(nq, false);
  for (const auto& s : spans) {
    if (s.q_len == 0 || s.kv_len == 0 || s.q_begin + s.q_len > nq || s.kv_begin + s.kv_len > nk)
      throw ShapeError("attention: span out of range");
    for (std::size_t i = s.q_begin; i < s.q_begin + s.q_len; ++i) {
      if (covered[i]) throw ShapeError("attention: query row " + std::to_string(i) + " in two spans");
      covered[i] = true;
    }
  }
  for (std::size_t i = 0; i < nq; ++i)
    if (!covered[i]) throw ShapeError("attention: query row " + std::to_string(i) + " in no span");

  const std::size_t hd = dim / heads;
  const T sc = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
  std::vector<std::size_t> p_off(spans.size());
  std::size_t p_total = 0;
  for (std::size_t s = 0; s < spans.size(); ++s) {
    p_off[s] = p_total;
    p_total += heads * spans[s].q_len * spans[s].kv_len;
  }
  std::vector<T> probs(p_total);
  Tensor<T> out({nq, dim});
  const T *pq = q.value().data(), *pk = k.value().data(), *pv = v.value().data();
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const auto& sp = spans[s];
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < sp.q_len; ++i) {
        const T* qi = pq + (sp.q_begin + i) * dim + h * hd;
        T* p = probs.data() + p_off[s] + (h * sp.q_len + i) * sp.kv_len;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < sp.kv_len; ++j) {
          const T* kj = pk + (sp.kv_begin + j) * dim + h * hd;
          T d = 0;
          for (std::size_t c = 0; c < hd; ++c) d += qi[c] * kj[c];
          p[j] = d * sc;
          mx = std::max(mx, p[j]);
        }
        if (!std::isfinite(mx)) throw NumericError("attention: non-finite score");
        T sum = 0;
        for (std::size_t j = 0; j < sp.kv_len; ++j) {
          p[j] = std::exp(p[j] - mx);
          sum += p[j];
        }
        const T inv = T(1) / sum;
        T* o = out.data() + (sp.q_begin + i) * dim + h * hd;
        for (std::size_t j = 0; j < sp.kv_len; ++j) {
          p[j] *= inv;
          const T* vj = pv + (sp.kv_begin + j) * dim + h * hd;
          for (std::size_t c = 0; c < hd; ++c) o[c] += p[j] * vj[c];
        }
      }
  }
  return record<T>(
      "attention", std::move(out), {q, k, v},
      [spans = std::move(spans), p_off = std::move(p_off), probs = std::move(probs), heads, hd, dim, sc](Node<T>& self) {
        Node<T>& qn = *self.inputs[0];
        Node<T>& kn = *self.inputs[1];
        Node<T>& vn = *self.inputs[2];
        T* gq = qn.requires_grad ? qn.grad_buffer().data() : nullptr;
        T* gk = kn.requires_grad ? kn.grad_buffer().data() : nullptr;
        T* gv = vn.requires_grad ? vn.grad_buffer().data() : nullptr;
        const T *pq = qn.value.data(), *pk = kn.value.data(), *pv = vn.value.data(), *go = self.grad.data();
        std::vector<T> ds;
        for (std::size_t s = 0; s < spans.size(); ++s) {
          const auto& sp = spans[s];
          ds.resize(sp.kv_len);
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < sp.q_len; ++i) {
              const T* p = probs.data() + p_off[s] + (h * sp.q_len + i) * sp.kv_len;
              const T* gi = go + (sp.q_begin + i) * dim + h * hd;
              T dot = 0;
              for (std::size_t j = 0; j < sp.kv_len; ++j) {
                const std::size_t row = (sp.kv_begin + j) * dim + h * hd;
                T dp = 0;
                for (std::size_t c = 0; c < hd; ++c) dp += gi[c] * pv[row + c];
                if (gv)
                  for (std::size_t c = 0; c < hd; ++c) gv[row + c] += p[j] * gi[c];
                ds[j] = dp;
                dot += dp * p[j];
              }
              const std::size_t qrow = (sp.q_begin + i) * dim + h * hd;
              for (std::size_t j = 0; j < sp.kv_len; ++j) {
                const T d = p[j] * (ds[j] - dot) * sc;
                const std::size_t row = (sp.kv_begin + j) * dim + h * hd;
                if (gq)
                  for (std::size_t c = 0; c < hd; ++c) gq[qrow + c] += d * pk[row + c];
                if (gk)
                  for (std::size_t c = 0; c < hd; ++c) gk[row + c] += d * pq[qrow + c];
              }
            }
        }
      });
}

// Inverted dropout: kept elements are scaled by 1 / (1 - p).
template <class T>
Var<T> dropout(const Var<T>& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: probability must lie in [0, 1)");
  if (p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < p ? T(0) : keep_scale;
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * mask[i];
  return record<T>("dropout", std::move(out), {x}, [mask = std::move(mask)](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < mask.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

// Per-row cosine distance 1 - s.t / (|s| |t|), each norm clamped below at eps.
// The target is treated as a constant: no gradient ever reaches it.
template <class T>
Var<T> cosine_distance_rows(const Var<T>& pred, const Tensor<T>& target, double eps = 1e-8) {
  if (pred.rank() != 2 || pred.shape() != target.shape())
    throw ShapeError("cosine_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                     shape_str(target.shape()));
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (std::isnan(pred.value()[i])) throw NumericError("cosine_loss: NaN in prediction at index " + std::to_string(i));
  for (std::size_t i = 0; i < target.size(); ++i)
    if (std::isnan(target[i])) throw NumericError("cosine_loss: NaN in target at index " + std::to_string(i));
  const std::size_t n = pred.dim(0), d = pred.dim(1);
  Tensor<T> out(Shape{n});
  std::vector<double> cosines(n), norm_s(n), norm_t(n);
  const T* ps = pred.value().data();
  const T* pt = target.data();
  for (std::size_t r = 0; r < n; ++r) {
    double st = 0, ss = 0, tt = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double s = ps[r * d + j], t = pt[r * d + j];
      st += s * t;
      ss += s * s;
      tt += t * t;
    }
    norm_s[r] = std::max(std::sqrt(ss), eps);
    norm_t[r] = std::max(std::sqrt(tt), eps);
    cosines[r] = st / (norm_s[r] * norm_t[r]);
    out[r] = static_cast<T>(1.0 - std::clamp(cosines[r], -1.0, 1.0));
  }
  return record<T>("cosine_distance", std::move(out), {pred},
                   [target, cosines = std::move(cosines), norm_s = std::move(norm_s), norm_t = std::move(norm_t), n,
                    d, eps](Node<T>& self) {
                     auto& in = *self.inputs[0];
                     const T* ps = in.value.data();
                     const T* pt = target.data();
                     T* g = in.grad_buffer().data();
                     for (std::size_t r = 0; r < n; ++r) {
                       const double up = static_cast<double>(self.grad[r]);
                       const double a = 1.0 / (norm_s[r] * norm_t[r]);
                       // a clamped norm is constant
                       const double b = norm_s[r] > eps ? cosines[r] / (norm_s[r] * norm_s[r]) : 0.0;
                       for (std::size_t j = 0; j < d; ++j)
                         g[r * d + j] += static_cast<T>(-up * (pt[r * d + j] * a - ps[r * d + j] * b));
                     }
                   });
}

// Mean softmax cross-entropy of logits[n, classes] against integer labels.
template <class T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " + std::to_string(labels.size()) +
                     " labels");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  for (auto l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= c)
      throw ConfigError("cross_entropy: label " + std::to_string(l) + " outside head with " + std::to_string(c) +
                        " classes");
  detail::require_finite(logits.value(), "cross_entropy", "logit");
  std::vector<T> probs(n * c);
  double loss = 0;
  const T* px = logits.value().data();
  for (std::size_t r = 0; r < n; ++r) {
    T mx = px[r * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, px[r * c + j]);
    double z = 0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(px[r * c + j] - mx));
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] = static_cast<T>(std::exp(px[r * c + j] - mx) / z);
    loss += std::log(z) + mx - px[r * c + static_cast<std::size_t>(labels[r])];
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return record<T>("cross_entropy", Tensor<T>::scalar(static_cast<T>(loss / static_cast<double>(n))), {logits},
                   [probs = std::move(probs), lab = std::move(lab), n, c](Node<T>& self) {
                     T* g = self.inputs[0]->grad_buffer().data();
                     const T up = self.grad[0] / static_cast<T>(n);
                     for (std::size_t r = 0; r < n; ++r)
                       for (std::size_t j = 0; j < c; ++j) {
                         const T onehot = static_cast<std::size_t>(lab[r]) == j ? T(1) : T(0);
                         g[r * c + j] += up * (probs[r * c + j] - onehot);
                       }
                   });
}

}  // namespace jepa3d
