#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecpm/autodiff.hpp"

namespace ecpm {

namespace detail {

[[noreturn]] inline void shape_fail(std::string_view kind, const Shape& a,
                                    const Shape& b = {}) {
  std::string msg = std::string(kind) + ": incompatible shapes " + shape_str(a);
  if (!b.empty()) msg += " and " + shape_str(b);
  throw Error(msg);
}

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) {
    T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
T softplus(T x) {
  return std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
}

// Splits a shape around `axis` into (outer, axis extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// out[i] = x[index[i]]; the backward pass scatter-adds.
template <typename T>
Var<T> remap(const char* kind, const Var<T>& x, Shape out_shape,
             std::vector<std::size_t> index) {
  Tensor<T> out(std::move(out_shape));
  const auto& xv = x.value();
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = xv[index[i]];
  return make_op<T>(kind, std::move(out), {x},
                    [index = std::move(index)](Node<T>& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      auto& g = p.grad_buffer();
                      for (std::size_t i = 0; i < index.size(); ++i) {
                        g[index[i]] += self.grad[i];
                      }
                    });
}

template <typename T, typename F, typename DF>
Var<T> unary(const char* kind, const Var<T>& x, F f, DF df) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_op<T>(kind, std::move(out), {x}, [df](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * df(p.value[i], self.value[i]);
    }
  });
}

}  // namespace detail

// ---- matrix products -------------------------------------------------------

// (m, k) x (k, n) -> (m, n)
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    detail::shape_fail("matmul", av.shape(), bv.shape());
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T* o = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const T s = av[i * k + p];
      const T* brow = &bv[p * n];
      for (std::size_t j = 0; j < n; ++j) o[j] += s * brow[j];
    }
  }
  return make_op<T>("matmul", std::move(out), {a, b},
                    [m, k, n](Node<T>& self) {
                      auto& pa = *self.parents[0];
                      auto& pb = *self.parents[1];
                      const auto& g = self.grad;
                      if (pa.requires_grad) {
                        auto& ga = pa.grad_buffer();
                        for (std::size_t i = 0; i < m; ++i)
                          for (std::size_t p = 0; p < k; ++p) {
                            T acc{0};
                            for (std::size_t j = 0; j < n; ++j)
                              acc += g[i * n + j] * pb.value[p * n + j];
                            ga[i * k + p] += acc;
                          }
                      }
                      if (pb.requires_grad) {
                        auto& gb = pb.grad_buffer();
                        for (std::size_t i = 0; i < m; ++i)
                          for (std::size_t p = 0; p < k; ++p) {
                            const T s = pa.value[i * k + p];
                            for (std::size_t j = 0; j < n; ++j)
                              gb[p * n + j] += s * g[i * n + j];
                          }
                      }
                    });
}

// Applies x (..., in) -> (..., out) with weight (in, out) and optional bias.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias = {}) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  if (xv.rank() < 1 || wv.rank() != 2 || xv.shape().back() != wv.dim(0)) {
    detail::shape_fail("linear", xv.shape(), wv.shape());
  }
  const std::size_t in = wv.dim(0), out_dim = wv.dim(1);
  const std::size_t rows = xv.size() / in;
  const bool has_bias = bias.defined();
  if (has_bias && (bias.value().rank() != 1 || bias.value().dim(0) != out_dim)) {
    detail::shape_fail("linear(bias)", bias.shape(), wv.shape());
  }
  Shape out_shape = xv.shape();
  out_shape.back() = out_dim;
  Tensor<T> out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    T* o = &out[r * out_dim];
    if (has_bias) {
      for (std::size_t j = 0; j < out_dim; ++j) o[j] = bias.value()[j];
    }
    const T* xr = &xv[r * in];
    for (std::size_t i = 0; i < in; ++i) {
      const T s = xr[i];
      const T* wr = &wv[i * out_dim];
      for (std::size_t j = 0; j < out_dim; ++j) o[j] += s * wr[j];
    }
  }
  std::vector<Var<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op<T>(
      "linear", std::move(out), std::move(inputs),
      [rows, in, out_dim, has_bias](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const auto& g = self.grad;
        if (px.requires_grad) {
          auto& gx = px.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            const T* gr = &g[r * out_dim];
            for (std::size_t i = 0; i < in; ++i) {
              const T* wr = &pw.value[i * out_dim];
              T acc{0};
              for (std::size_t j = 0; j < out_dim; ++j) acc += gr[j] * wr[j];
              gx[r * in + i] += acc;
            }
          }
        }
        if (pw.requires_grad) {
          auto& gw = pw.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            const T* gr = &g[r * out_dim];
            const T* xr = &px.value[r * in];
            for (std::size_t i = 0; i < in; ++i) {
              const T s = xr[i];
              T* gwr = &gw[i * out_dim];
              for (std::size_t j = 0; j < out_dim; ++j) gwr[j] += s * gr[j];
            }
          }
        }
        if (has_bias && self.parents[2]->requires_grad) {
          auto& gb = self.parents[2]->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < out_dim; ++j)
              gb[j] += g[r * out_dim + j];
        }
      });
}

// ---- element-wise ----------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) detail::shape_fail("add", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] + b.value()[i];
  return make_op<T>("add", std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) p->accumulate(self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) detail::shape_fail("sub", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] - b.value()[i];
  return make_op<T>("sub", std::move(out), {a, b}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad);
    auto& pb = *self.parents[1];
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) detail::shape_fail("mul", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] * b.value()[i];
  return make_op<T>("mul", std::move(out), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * pa.value[i];
    }
  });
}

// x + y where y's shape is a trailing suffix of x's shape (bias, positions).
template <typename T>
Var<T> add_broadcast(const Var<T>& x, const Var<T>& y) {
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  if (ys.size() > xs.size() ||
      !std::equal(ys.rbegin(), ys.rend(), xs.rbegin())) {
    detail::shape_fail("add_broadcast", xs, ys);
  }
  const std::size_t inner = y.size();
  Tensor<T> out(xs);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = x.value()[i] + y.value()[i % inner];
  return make_op<T>("add_broadcast", std::move(out), {x, y},
                    [inner](Node<T>& self) {
                      self.parents[0]->accumulate(self.grad);
                      auto& py = *self.parents[1];
                      if (py.requires_grad) {
                        auto& g = py.grad_buffer();
                        for (std::size_t i = 0; i < self.grad.size(); ++i)
                          g[i % inner] += self.grad[i];
                      }
                    });
}

template <typename T>
Var<T> scale(const Var<T>& x, T s) {
  return detail::unary<T>(
      "scale", x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T s) {
  return detail::unary<T>(
      "add_scalar", x, [s](T v) { return v + s; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> neg(const Var<T>& x) {
  return scale(x, T{-1});
}

template <typename T>
Var<T> silu(const Var<T>& x) {
  return detail::unary<T>(
      "silu", x, [](T v) { return v * detail::sigmoid(v); },
      [](T v, T) {
        T s = detail::sigmoid(v);
        return s * (T{1} + v * (T{1} - s));
      });
}

template <typename T>
Var<T> softplus(const Var<T>& x) {
  return detail::unary<T>(
      "softplus", x, [](T v) { return detail::softplus(v); },
      [](T v, T) { return detail::sigmoid(v); });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  return detail::unary<T>(
      "exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& x) {
  return detail::unary<T>(
      "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

// max(x, lo); gradient passes only where x > lo.
template <typename T>
Var<T> clamp_min(const Var<T>& x, T lo) {
  return detail::unary<T>(
      "clamp_min", x, [lo](T v) { return v > lo ? v : lo; },
      [lo](T v, T) { return v > lo ? T{1} : T{0}; });
}

// Value passes through; gradient is cut.
template <typename T>
Var<T> detach(const Var<T>& x) {
  return constant(x.value());
}

// ---- reductions and normalization -----------------------------------------

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc{0};
  for (T v : x.value().data()) acc += v;
  return make_op<T>("sum", Tensor<T>::scalar(acc), {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    const T s = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  if (x.size() == 0) throw Error("mean: empty tensor");
  return scale(sum(x), T{1} / static_cast<T>(x.size()));
}

// Softmax over the last axis.
template <typename T>
Var<T> softmax(const Var<T>& x) {
  const auto& xv = x.value();
  if (xv.rank() < 1) detail::shape_fail("softmax", xv.shape());
  const std::size_t n = xv.shape().back();
  const std::size_t rows = xv.size() / n;
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = &xv[r * n];
    T* o = &out[r * n];
    T mx = *std::max_element(xr, xr + n);
    T z{0};
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(xr[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return make_op<T>("softmax", std::move(out), {x}, [rows, n](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = &self.value[r * n];
      const T* gy = &self.grad[r * n];
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (gy[j] - dot);
    }
  });
}

// Root-mean-square normalization over the last axis with a learned gain.
template <typename T>
Var<T> rms_norm(const Var<T>& x, const Var<T>& gain, T eps) {
  const auto& xv = x.value();
  const std::size_t n = gain.size();
  if (xv.rank() < 1 || xv.shape().back() != n || gain.value().rank() != 1) {
    detail::shape_fail("rms_norm", xv.shape(), gain.shape());
  }
  const std::size_t rows = xv.size() / n;
  Tensor<T> out(xv.shape());
  std::vector<T> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = &xv[r * n];
    T ms{0};
    for (std::size_t j = 0; j < n; ++j) ms += xr[j] * xr[j];
    ms /= static_cast<T>(n);
    inv[r] = T{1} / std::sqrt(ms + eps);
    for (std::size_t j = 0; j < n; ++j)
      out[r * n + j] = xr[j] * inv[r] * gain.value()[j];
  }
  return make_op<T>(
      "rms_norm", std::move(out), {x, gain},
      [rows, n, inv = std::move(inv)](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        const auto& gy = self.grad;
        if (pg.requires_grad) {
          auto& gg = pg.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j)
              gg[j] += gy[r * n + j] * px.value[r * n + j] * inv[r];
        }
        if (px.requires_grad) {
          auto& gx = px.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            T dot{0};
            for (std::size_t j = 0; j < n; ++j) {
              const T xh = px.value[r * n + j] * inv[r];
              dot += gy[r * n + j] * pg.value[j] * xh;
            }
            dot /= static_cast<T>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const T xh = px.value[r * n + j] * inv[r];
              gx[r * n + j] += inv[r] * (gy[r * n + j] * pg.value[j] - xh * dot);
            }
          }
        }
      });
}

// ---- layout ops ------------------------------------------------------------

template <typename T>
Var<T> flip(const Var<T>& x, std::size_t axis) {
  if (axis >= x.value().rank()) detail::shape_fail("flip", x.shape());
  auto s = detail::split_axis(x.shape(), axis);
  std::vector<std::size_t> index(x.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t a = 0; a < s.extent; ++a)
      for (std::size_t i = 0; i < s.inner; ++i)
        index[(o * s.extent + a) * s.inner + i] =
            (o * s.extent + (s.extent - 1 - a)) * s.inner + i;
  return detail::remap<T>("flip", x, x.shape(), std::move(index));
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start,
             std::size_t length) {
  if (axis >= x.value().rank() || start + length > x.dim(axis)) {
    detail::shape_fail("slice", x.shape());
  }
  auto s = detail::split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<std::size_t> index;
  index.reserve(s.outer * length * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t a = 0; a < length; ++a)
      for (std::size_t i = 0; i < s.inner; ++i)
        index.push_back((o * s.extent + start + a) * s.inner + i);
  return detail::remap<T>("slice", x, std::move(out_shape), std::move(index));
}

// Selects entries along `axis` in the order given by `order` (index_select).
template <typename T>
Var<T> gather(const Var<T>& x, std::size_t axis,
              const std::vector<std::size_t>& order) {
  if (axis >= x.value().rank()) detail::shape_fail("gather", x.shape());
  auto s = detail::split_axis(x.shape(), axis);
  for (std::size_t idx : order) {
    if (idx >= s.extent) throw Error("gather: index out of range");
  }
  Shape out_shape = x.shape();
  out_shape[axis] = order.size();
  std::vector<std::size_t> index;
  index.reserve(s.outer * order.size() * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t src : order)
      for (std::size_t i = 0; i < s.inner; ++i)
        index.push_back((o * s.extent + src) * s.inner + i);
  return detail::remap<T>("gather", x, std::move(out_shape), std::move(index));
}

// (..., 1) -> (..., n) by repetition.
template <typename T>
Var<T> expand_last(const Var<T>& x, std::size_t n) {
  if (x.value().rank() < 1 || x.shape().back() != 1) {
    detail::shape_fail("expand_last", x.shape());
  }
  Shape out_shape = x.shape();
  out_shape.back() = n;
  std::vector<std::size_t> index(x.size() * n);
  for (std::size_t r = 0; r < x.size(); ++r)
    for (std::size_t j = 0; j < n; ++j) index[r * n + j] = r;
  return detail::remap<T>("expand_last", x, std::move(out_shape),
                          std::move(index));
}

// Same data, new shape.
template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  if (shape_size(shape) != x.size()) detail::shape_fail("reshape", x.shape(), shape);
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return make_op<T>("reshape", std::move(out), {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw Error("concat: no inputs");
  const Shape& ref = xs[0].shape();
  if (axis >= ref.size()) detail::shape_fail("concat", ref);
  std::size_t total = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != ref.size()) detail::shape_fail("concat", ref, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != ref[i]) detail::shape_fail("concat", ref, s);
    }
    total += s[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  auto so = detail::split_axis(out_shape, axis);
  Tensor<T> out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& x : xs) {
    offsets.push_back(off);
    const std::size_t ext = x.dim(axis);
    for (std::size_t o = 0; o < so.outer; ++o)
      for (std::size_t a = 0; a < ext; ++a)
        for (std::size_t i = 0; i < so.inner; ++i)
          out[(o * so.extent + off + a) * so.inner + i] =
              x.value()[(o * ext + a) * so.inner + i];
    off += ext;
  }
  return make_op<T>(
      "concat", std::move(out), xs,
      [so, offsets = std::move(offsets), axis](Node<T>& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
          auto& p = *self.parents[k];
          if (!p.requires_grad) continue;
          auto& g = p.grad_buffer();
          const std::size_t ext = p.value.dim(axis);
          for (std::size_t o = 0; o < so.outer; ++o)
            for (std::size_t a = 0; a < ext; ++a)
              for (std::size_t i = 0; i < so.inner; ++i)
                g[(o * ext + a) * so.inner + i] +=
                    self.grad[(o * so.extent + offsets[k] + a) * so.inner + i];
        }
      });
}

// ---- convolutions ----------------------------------------------------------

// Depthwise causal 1-D convolution over the sequence axis.
// x (B, L, C), weight (C, K), bias (C); zero left padding of K-1.
template <typename T>
Var<T> conv1d_causal(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  if (xv.rank() != 3 || wv.rank() != 2 || wv.dim(0) != xv.dim(2) ||
      bias.size() != xv.dim(2)) {
    detail::shape_fail("conv1d_causal", xv.shape(), wv.shape());
  }
  const std::size_t B = xv.dim(0), L = xv.dim(1), C = xv.dim(2), K = wv.dim(1);
  Tensor<T> out(xv.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < L; ++t) {
      T* o = &out[(b * L + t) * C];
      for (std::size_t c = 0; c < C; ++c) o[c] = bias.value()[c];
      for (std::size_t j = 0; j < K; ++j) {
        if (t + j + 1 < K) continue;
        const std::size_t s = t + j + 1 - K;
        const T* xr = &xv[(b * L + s) * C];
        for (std::size_t c = 0; c < C; ++c) o[c] += wv[c * K + j] * xr[c];
      }
    }
  return make_op<T>(
      "conv1d_causal", std::move(out), {x, weight, bias},
      [B, L, C, K](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto& g = self.grad;
        Tensor<T>* gx = px.requires_grad ? &px.grad_buffer() : nullptr;
        Tensor<T>* gw = pw.requires_grad ? &pw.grad_buffer() : nullptr;
        Tensor<T>* gb = pb.requires_grad ? &pb.grad_buffer() : nullptr;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t t = 0; t < L; ++t) {
            const T* gr = &g[(b * L + t) * C];
            if (gb)
              for (std::size_t c = 0; c < C; ++c) (*gb)[c] += gr[c];
            for (std::size_t j = 0; j < K; ++j) {
              if (t + j + 1 < K) continue;
              const std::size_t s = t + j + 1 - K;
              for (std::size_t c = 0; c < C; ++c) {
                if (gx) (*gx)[(b * L + s) * C + c] += pw.value[c * K + j] * gr[c];
                if (gw) (*gw)[c * K + j] += px.value[(b * L + s) * C + c] * gr[c];
              }
            }
          }
      });
}

// Non-overlapping patch extraction: (B, C, H, W) -> (B, (H/k)(W/k), C*k*k),
// tokens row-major over the patch grid, features ordered (c, dy, dx).
template <typename T>
Var<T> im2col(const Var<T>& x, std::size_t kernel) {
  const auto& xs = x.shape();
  if (xs.size() != 4 || kernel == 0 || xs[2] % kernel || xs[3] % kernel) {
    throw Error("im2col: side " + shape_str(xs) +
                " not divisible by kernel " + std::to_string(kernel));
  }
  const std::size_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const std::size_t gh = H / kernel, gw = W / kernel;
  const std::size_t F = C * kernel * kernel;
  std::vector<std::size_t> index;
  index.reserve(B * gh * gw * F);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t py = 0; py < gh; ++py)
      for (std::size_t px = 0; px < gw; ++px)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dy = 0; dy < kernel; ++dy)
            for (std::size_t dx = 0; dx < kernel; ++dx)
              index.push_back(((b * C + c) * H + py * kernel + dy) * W +
                              px * kernel + dx);
  return detail::remap<T>("im2col", x, Shape{B, gh * gw, F}, std::move(index));
}

// ---- generic dispatch ------------------------------------------------------

struct OpAttrs {
  std::size_t axis = 0;
  std::size_t kernel = 1;
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t repeat = 1;
  double scalar = 0.0;
  double eps = 1e-12;
  std::vector<std::size_t> order;
};

// String-keyed entry point over the registered primitives.
template <typename T>
Var<T> primitive(std::string_view kind, const std::vector<Var<T>>& in,
                 const OpAttrs& attrs = {}) {
  auto need = [&](std::size_t n) {
    if (in.size() < n) {
      throw Error(std::string(kind) + ": expected " + std::to_string(n) +
                  " inputs, got " + std::to_string(in.size()));
    }
  };
  if (kind == "matmul") { need(2); return matmul(in[0], in[1]); }
  if (kind == "linear") {
    need(2);
    return in.size() > 2 ? linear(in[0], in[1], in[2]) : linear(in[0], in[1]);
  }
  if (kind == "add") { need(2); return add(in[0], in[1]); }
  if (kind == "sub") { need(2); return sub(in[0], in[1]); }
  if (kind == "mul") { need(2); return mul(in[0], in[1]); }
  if (kind == "add_broadcast") { need(2); return add_broadcast(in[0], in[1]); }
  if (kind == "scale") { need(1); return scale(in[0], static_cast<T>(attrs.scalar)); }
  if (kind == "silu") { need(1); return silu(in[0]); }
  if (kind == "softplus") { need(1); return softplus(in[0]); }
  if (kind == "exp") { need(1); return exp(in[0]); }
  if (kind == "log") { need(1); return log(in[0]); }
  if (kind == "softmax") { need(1); return softmax(in[0]); }
  if (kind == "sum") { need(1); return sum(in[0]); }
  if (kind == "mean") { need(1); return mean(in[0]); }
  if (kind == "rms_norm") {
    need(2);
    return rms_norm(in[0], in[1], static_cast<T>(attrs.eps));
  }
  if (kind == "flip") { need(1); return flip(in[0], attrs.axis); }
  if (kind == "slice") {
    need(1);
    return slice(in[0], attrs.axis, attrs.start, attrs.length);
  }
  if (kind == "gather") { need(1); return gather(in[0], attrs.axis, attrs.order); }
  if (kind == "expand_last") { need(1); return expand_last(in[0], attrs.repeat); }
  if (kind == "concat") { need(1); return concat(in, attrs.axis); }
  if (kind == "conv1d_causal") { need(3); return conv1d_causal(in[0], in[1], in[2]); }
  if (kind == "im2col") { need(1); return im2col(in[0], attrs.kernel); }
  throw Error("unknown primitive kind '" + std::string(kind) + "'");
}

}  // namespace ecpm
