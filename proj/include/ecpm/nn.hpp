#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ecpm/ops.hpp"
#include "ecpm/rng.hpp"

namespace ecpm::nn {

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
void append(ParamList<T>& out, const std::string& prefix, const ParamList<T>& in) {
  for (const auto& p : in) out.push_back({prefix + p.name, p.var});
}

template <typename T>
std::size_t scalar_count(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var.size();
  return n;
}

// Copies values (not nodes) from src into dst; names and shapes must match
// position by position.
template <typename T>
void assign_values(const ParamList<T>& dst, const ParamList<T>& src) {
  if (dst.size() != src.size()) {
    throw Error("assign_values: " + std::to_string(src.size()) + " tensors for " +
                std::to_string(dst.size()) + " parameters");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || dst[i].var.shape() != src[i].var.shape()) {
      throw Error("assign_values: '" + src[i].name + "' " + shape_str(src[i].var.shape()) +
                  " does not match '" + dst[i].name + "' " + shape_str(dst[i].var.shape()));
    }
    Var<T> d = dst[i].var;
    d.mutable_value() = src[i].var.value();
  }
}

// Module copy with its own parameter nodes.
template <typename M>
M clone(const M& m) {
  Rng scratch(0);
  M out = M::init(m.cfg, scratch);
  assign_values(out.params(), m.params());
  return out;
}

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
template <typename T>
struct Linear {
  Var<T> weight;  // (in, out)
  Var<T> bias;    // (out), may be undefined

  static Linear init(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true) {
    const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(in)));
    Linear l;
    l.weight = parameter(uniform_tensor<T>({in, out}, -bound, bound, rng));
    if (with_bias) l.bias = parameter(uniform_tensor<T>({out}, -bound, bound, rng));
    return l;
  }

  Var<T> operator()(const Var<T>& x) const { return linear(x, weight, bias); }

  ParamList<T> params() const {
    ParamList<T> p{{"weight", weight}};
    if (bias.defined()) p.push_back({"bias", bias});
    return p;
  }
};

}  // namespace ecpm::nn
