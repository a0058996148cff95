#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <string_view>
#include <vector>

#include "ecpm/ops.hpp"

namespace ecpm {

// Compares reverse-mode gradients of `fn` against central differences.
//
// `fn` maps a list of Vars to any-shaped output; for non-scalar outputs the
// full Jacobian is compared, one seeded backward pass per output entry. The
// numeric quotient divides by the representable step (x+h) - (x-h), so ops
// that are pure permutations compare exactly.
//
// Returns max |analytic - numeric| / max(|numeric|, 1e-8) over every input
// coordinate, or +inf when anything is non-finite.
template <typename Fn>
  requires std::invocable<Fn&, const std::vector<Var<double>>&>
double gradcheck(Fn&& fn, const std::vector<Tensor<double>>& inputs,
                 double step = 1e-5) {
  constexpr double inf = std::numeric_limits<double>::infinity();

  std::vector<Var<double>> params;
  params.reserve(inputs.size());
  for (const auto& t : inputs) params.push_back(parameter(t));
  Var<double> out = fn(params);
  const std::size_t n_out = out.size();

  // analytic[j][k] = d out_j / d (flattened input coordinate k)
  std::size_t n_in = 0;
  for (const auto& t : inputs) n_in += t.size();
  std::vector<std::vector<double>> analytic(n_out, std::vector<double>(n_in));
  for (std::size_t j = 0; j < n_out; ++j) {
    for (auto& p : params) p.zero_grad();
    Tensor<double> seed(out.shape());
    seed[j] = 1.0;
    backward_seeded(out, seed);
    std::size_t k = 0;
    for (auto& p : params) {
      for (std::size_t c = 0; c < p.size(); ++c, ++k) {
        analytic[j][k] = p.grad().empty() ? 0.0 : p.grad()[c];
      }
    }
  }

  auto evaluate = [&](const std::vector<Tensor<double>>& xs) {
    NoGradGuard guard;
    std::vector<Var<double>> cs;
    cs.reserve(xs.size());
    for (const auto& t : xs) cs.push_back(constant(t));
    return fn(cs).value();
  };

  double worst = 0.0;
  std::vector<Tensor<double>> probe = inputs;
  std::size_t k = 0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (std::size_t c = 0; c < probe[i].size(); ++c, ++k) {
      const double x0 = inputs[i][c];
      const double xp = x0 + step;
      const double xm = x0 - step;
      probe[i][c] = xp;
      auto yp = evaluate(probe);
      probe[i][c] = xm;
      auto ym = evaluate(probe);
      probe[i][c] = x0;
      const double h = xp - xm;
      for (std::size_t j = 0; j < n_out; ++j) {
        const double numeric = (yp[j] - ym[j]) / h;
        const double a = analytic[j][k];
        if (!std::isfinite(numeric) || !std::isfinite(a)) return inf;
        const double err =
            std::abs(a - numeric) / std::max(std::abs(numeric), 1e-8);
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

// Gradcheck of a single registered primitive.
inline double gradcheck(std::string_view kind,
                        const std::vector<Tensor<double>>& inputs,
                        const OpAttrs& attrs = {}, double step = 1e-5) {
  return gradcheck(
      [&](const std::vector<Var<double>>& in) {
        return primitive<double>(kind, in, attrs);
      },
      inputs, step);
}

// Same comparison for a scalar loss over live parameter Vars, perturbed in
// place. Suited to whole modules whose weights are not function inputs.
template <typename Fn>
  requires std::invocable<Fn&>
double gradcheck_params(Fn&& loss, const std::vector<Var<double>>& params,
                        double step = 1e-5) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (auto p : params) p.zero_grad();
  backward(loss());
  std::vector<Tensor<double>> analytic;
  for (const auto& p : params) {
    analytic.push_back(p.grad().empty() ? Tensor<double>(p.shape()) : p.grad());
  }
  auto evaluate = [&] {
    NoGradGuard guard;
    return loss().item();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    for (std::size_t c = 0; c < p.size(); ++c) {
      const double x0 = p.value()[c];
      const double xp = x0 + step, xm = x0 - step;
      p.mutable_value()[c] = xp;
      const double yp = evaluate();
      p.mutable_value()[c] = xm;
      const double ym = evaluate();
      p.mutable_value()[c] = x0;
      const double numeric = (yp - ym) / (xp - xm);
      const double a = analytic[i][c];
      if (!std::isfinite(numeric) || !std::isfinite(a)) return inf;
      worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(numeric), 1e-8));
    }
  }
  return worst;
}

}  // namespace ecpm
