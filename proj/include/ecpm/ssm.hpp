#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ecpm/ops.hpp"
#include "ecpm/rng.hpp"

namespace ecpm::ssm {

// Learnable parameters of one selective SSM over D channels with an
// N-dimensional diagonal state per channel.
//
// The transition is stored as log-magnitudes: A = -exp(a_log), so the
// discrete gains exp(delta * A) stay in (0, 1) whenever delta > 0.
template <typename T>
struct Params {
  std::size_t channels = 0;
  std::size_t state = 0;
  Var<T> a_log;       // (D, N)
  Var<T> w_b;         // (D, N), realizes s_B
  Var<T> w_c;         // (D, N), realizes s_C
  Var<T> w_delta;     // (D, 1), rank-1 step projection
  Var<T> delta_bias;  // (D)

  // A_{d,n} = -(n + 1); step bias places softplus(bias) in [1e-3, 1e-1].
  static Params init(std::size_t channels, std::size_t state, Rng& rng) {
    Params p;
    p.channels = channels;
    p.state = state;
    Tensor<T> a({channels, state});
    for (std::size_t d = 0; d < channels; ++d)
      for (std::size_t n = 0; n < state; ++n)
        a[d * state + n] = static_cast<T>(std::log(static_cast<double>(n + 1)));
    p.a_log = parameter(std::move(a));
    const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(channels)));
    p.w_b = parameter(uniform_tensor<T>({channels, state}, -bound, bound, rng));
    p.w_c = parameter(uniform_tensor<T>({channels, state}, -bound, bound, rng));
    p.w_delta = parameter(uniform_tensor<T>({channels, 1}, -bound, bound, rng));
    Tensor<T> bias({channels});
    std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
    for (auto& v : bias.data()) {
      const double dt = std::exp(u(rng));
      v = static_cast<T>(dt + std::log(-std::expm1(-dt)));  // softplus^-1
    }
    p.delta_bias = parameter(std::move(bias));
    return p;
  }
};

// Input-dependent B, C and step sizes for a (batch, L, D) sequence.
template <typename T>
struct Selection {
  Var<T> b;      // (batch, L, N)
  Var<T> c;      // (batch, L, N)
  Var<T> delta;  // (batch, L, D), strictly positive
};

template <typename T>
Selection<T> select_params(const Var<T>& x, const Params<T>& p) {
  if (x.value().rank() != 3 || x.dim(2) != p.channels) {
    throw Error("select_params: input " + shape_str(x.shape()) +
                " does not match " + std::to_string(p.channels) + " channels");
  }
  Selection<T> s;
  s.b = linear(x, p.w_b);
  s.c = linear(x, p.w_c);
  auto raw = expand_last(linear(x, p.w_delta), p.channels);
  s.delta = softplus(add_broadcast(raw, p.delta_bias));
  return s;
}

template <typename T>
Var<T> transition(const Params<T>& p) {
  return neg(exp(p.a_log));
}

// Materialized discretization. a_bar and b_bar are (batch, L, D, N),
// c is (batch, L, N).
template <typename T>
struct Discrete {
  std::size_t batch = 0, length = 0, channels = 0, state = 0;
  Tensor<T> a_bar;
  Tensor<T> b_bar;
  Tensor<T> c;
};

// Zero-order hold on the transition, A_bar = exp(delta A), with the
// first-order input weight B_bar = delta B. The exact ZOH input weight,
// (delta A)^-1 (A_bar - I) delta B, is not used.
template <typename T>
Discrete<T> discretize(const Tensor<T>& a, const Tensor<T>& b_seq,
                       const Tensor<T>& c_seq, const Tensor<T>& delta) {
  if (a.rank() != 2 || b_seq.rank() != 3 || delta.rank() != 3 ||
      c_seq.shape() != b_seq.shape() || delta.dim(2) != a.dim(0) ||
      b_seq.dim(2) != a.dim(1) || delta.dim(0) != b_seq.dim(0) ||
      delta.dim(1) != b_seq.dim(1)) {
    throw Error("discretize: inconsistent shapes A" + shape_str(a.shape()) +
                " B" + shape_str(b_seq.shape()) + " delta" +
                shape_str(delta.shape()));
  }
  Discrete<T> d;
  d.batch = delta.dim(0);
  d.length = delta.dim(1);
  d.channels = a.dim(0);
  d.state = a.dim(1);
  const std::size_t N = d.state, D = d.channels;
  d.a_bar = Tensor<T>({d.batch, d.length, D, N});
  d.b_bar = Tensor<T>({d.batch, d.length, D, N});
  d.c = c_seq;
  for (std::size_t bt = 0; bt < d.batch * d.length; ++bt) {
    for (std::size_t ch = 0; ch < D; ++ch) {
      const T dt = delta[bt * D + ch];
      if (!(dt > T{0})) {
        throw Error("discretize: non-positive step " + std::to_string(dt));
      }
      for (std::size_t n = 0; n < N; ++n) {
        d.a_bar[(bt * D + ch) * N + n] = std::exp(dt * a[ch * N + n]);
        d.b_bar[(bt * D + ch) * N + n] = dt * b_seq[bt * N + n];
      }
    }
  }
  return d;
}

// Linear recurrence h_t = A_bar_t h_{t-1} + B_bar_t x_t, y_t = <C_t, h_t>,
// per channel, from h_0 = 0.
template <typename T>
Tensor<T> scan(const Tensor<T>& x, const Discrete<T>& d) {
  if (x.shape() != Shape{d.batch, d.length, d.channels}) {
    throw Error("scan: input " + shape_str(x.shape()) + " mismatches ssm");
  }
  const std::size_t L = d.length, D = d.channels, N = d.state;
  Tensor<T> y(x.shape());
  std::vector<T> h(N);
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t ch = 0; ch < D; ++ch) {
      std::fill(h.begin(), h.end(), T{0});
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t bt = b * L + t;
        const T u = x[bt * D + ch];
        T acc{0};
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t k = (bt * D + ch) * N + n;
          h[n] = d.a_bar[k] * h[n] + d.b_bar[k] * u;
          acc += d.c[bt * N + n] * h[n];
        }
        y[bt * D + ch] = acc;
      }
    }
  return y;
}

// Impulse-response kernel K[d][k] = sum_n C_n A_bar_{d,n}^k B_bar_{d,n} for
// a time-invariant system; returns (batch, D, L).
template <typename T>
Tensor<T> conv_kernel(const Discrete<T>& d) {
  const std::size_t L = d.length, D = d.channels, N = d.state;
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t t = 1; t < L; ++t) {
      const std::size_t bt = b * L + t, b0 = b * L;
      for (std::size_t i = 0; i < D * N; ++i) {
        if (d.a_bar[bt * D * N + i] != d.a_bar[b0 * D * N + i] ||
            d.b_bar[bt * D * N + i] != d.b_bar[b0 * D * N + i]) {
          throw Error("conv_oracle: system is time-varying");
        }
      }
      for (std::size_t n = 0; n < N; ++n) {
        if (d.c[bt * N + n] != d.c[b0 * N + n]) {
          throw Error("conv_oracle: system is time-varying");
        }
      }
    }
  Tensor<T> kernel({d.batch, D, L});
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t ch = 0; ch < D; ++ch)
      for (std::size_t k = 0; k < L; ++k) {
        T acc{0};
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t i = ((b * L) * D + ch) * N + n;
          acc += d.c[b * L * N + n] *
                 std::pow(d.a_bar[i], static_cast<T>(k)) * d.b_bar[i];
        }
        kernel[(b * D + ch) * L + k] = acc;
      }
  return kernel;
}

// y = x * K (causal), the convolutional form of a time-invariant scan.
template <typename T>
Tensor<T> conv_oracle(const Tensor<T>& x, const Discrete<T>& d) {
  if (x.shape() != Shape{d.batch, d.length, d.channels}) {
    throw Error("conv_oracle: input " + shape_str(x.shape()) + " mismatches ssm");
  }
  const auto kernel = conv_kernel(d);
  const std::size_t L = d.length, D = d.channels;
  Tensor<T> y(x.shape());
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t ch = 0; ch < D; ++ch)
      for (std::size_t t = 0; t < L; ++t) {
        T acc{0};
        for (std::size_t k = 0; k <= t; ++k)
          acc += kernel[(b * D + ch) * L + k] * x[(b * L + t - k) * D + ch];
        y[(b * L + t) * D + ch] = acc;
      }
  return y;
}

// Differentiable fused selective scan.
//   u, delta: (batch, L, D); a: (D, N); b, c: (batch, L, N)
// Performs the same arithmetic as discretize() followed by scan(), without
// materializing A_bar and B_bar.
template <typename T>
Var<T> selective_scan(const Var<T>& u, const Var<T>& delta, const Var<T>& a,
                      const Var<T>& b, const Var<T>& c) {
  const auto& us = u.shape();
  if (us.size() != 3 || delta.shape() != us || a.value().rank() != 2 ||
      a.dim(0) != us[2] || b.shape() != Shape{us[0], us[1], a.dim(1)} ||
      c.shape() != b.shape()) {
    throw Error("selective_scan: inconsistent shapes u" + shape_str(us) +
                " delta" + shape_str(delta.shape()) + " A" +
                shape_str(a.shape()) + " B" + shape_str(b.shape()) + " C" +
                shape_str(c.shape()));
  }
  const std::size_t Bn = us[0], L = us[1], D = us[2], N = a.dim(1);
  const auto& uv = u.value();
  const auto& dv = delta.value();
  const auto& av = a.value();
  const auto& bv = b.value();
  const auto& cv = c.value();
  Tensor<T> y(us);
  const bool record = grad_enabled() &&
                      (u.requires_grad() || delta.requires_grad() ||
                       a.requires_grad() || b.requires_grad() ||
                       c.requires_grad());
  // hidden states laid out (batch, D, L, N) for the backward sweep
  std::vector<T> states(record ? Bn * D * L * N : 0);
  std::vector<T> h(N);
  for (std::size_t bi = 0; bi < Bn; ++bi)
    for (std::size_t ch = 0; ch < D; ++ch) {
      std::fill(h.begin(), h.end(), T{0});
      const T* arow = &av[ch * N];
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t bt = bi * L + t;
        const T dt = dv[bt * D + ch];
        const T x = uv[bt * D + ch];
        const T* brow = &bv[bt * N];
        const T* crow = &cv[bt * N];
        T acc{0};
        for (std::size_t n = 0; n < N; ++n) {
          h[n] = std::exp(dt * arow[n]) * h[n] + (dt * brow[n]) * x;
          acc += crow[n] * h[n];
        }
        y[bt * D + ch] = acc;
        if (record) {
          std::copy(h.begin(), h.end(),
                    states.begin() + ((bi * D + ch) * L + t) * N);
        }
      }
    }
  return make_op<T>(
      "selective_scan", std::move(y), {u, delta, a, b, c},
      [Bn, L, D, N, states = std::move(states)](Node<T>& self) {
        auto& pu = *self.parents[0];
        auto& pd = *self.parents[1];
        auto& pa = *self.parents[2];
        auto& pb = *self.parents[3];
        auto& pc = *self.parents[4];
        Tensor<T>* gu = pu.requires_grad ? &pu.grad_buffer() : nullptr;
        Tensor<T>* gd = pd.requires_grad ? &pd.grad_buffer() : nullptr;
        Tensor<T>* ga = pa.requires_grad ? &pa.grad_buffer() : nullptr;
        Tensor<T>* gb = pb.requires_grad ? &pb.grad_buffer() : nullptr;
        Tensor<T>* gc = pc.requires_grad ? &pc.grad_buffer() : nullptr;
        const auto& gy = self.grad;
        std::vector<T> gh(N);
        for (std::size_t bi = 0; bi < Bn; ++bi)
          for (std::size_t ch = 0; ch < D; ++ch) {
            std::fill(gh.begin(), gh.end(), T{0});
            const T* arow = &pa.value[ch * N];
            for (std::size_t tt = L; tt-- > 0;) {
              const std::size_t bt = bi * L + tt;
              const T g = gy[bt * D + ch];
              const T dt = pd.value[bt * D + ch];
              const T x = pu.value[bt * D + ch];
              const T* brow = &pb.value[bt * N];
              const T* crow = &pc.value[bt * N];
              const T* hcur = &states[((bi * D + ch) * L + tt) * N];
              const T* hprev =
                  tt > 0 ? &states[((bi * D + ch) * L + tt - 1) * N] : nullptr;
              T g_dt{0}, g_x{0};
              for (std::size_t n = 0; n < N; ++n) {
                gh[n] += g * crow[n];
                if (gc) (*gc)[bt * N + n] += g * hcur[n];
                const T abar = std::exp(dt * arow[n]);
                const T hp = hprev ? hprev[n] : T{0};
                const T g_abar = gh[n] * hp;
                g_dt += g_abar * abar * arow[n] + gh[n] * brow[n] * x;
                if (ga) (*ga)[ch * N + n] += g_abar * abar * dt;
                if (gb) (*gb)[bt * N + n] += gh[n] * dt * x;
                g_x += gh[n] * dt * brow[n];
                gh[n] *= abar;
              }
              if (gd) (*gd)[bt * D + ch] += g_dt;
              if (gu) (*gu)[bt * D + ch] += g_x;
            }
          }
      });
}

// Full selective SSM over a (batch, L, D) sequence.
template <typename T>
Var<T> forward(const Var<T>& x, const Params<T>& p) {
  auto s = select_params(x, p);
  return selective_scan(x, s.delta, transition(p), s.b, s.c);
}

}  // namespace ecpm::ssm
