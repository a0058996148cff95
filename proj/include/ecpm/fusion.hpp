#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecpm/encoder.hpp"

namespace ecpm {

// Swaps the token at `index` (default: last) between two (B, L+1, D)
// sequences; every other token is untouched.
template <typename T>
std::pair<Var<T>, Var<T>> cross_exchange(const Var<T>& w, const Var<T>& W,
                                         std::optional<std::size_t> index = std::nullopt) {
  if (w.value().rank() != 3 || w.shape() != W.shape()) {
    throw Error("cross_exchange: sequence shapes " + shape_str(w.shape()) + " and " +
                shape_str(W.shape()) + " differ");
  }
  const std::size_t n = w.dim(1);
  const std::size_t at = index.value_or(n - 1);
  if (at >= n) throw Error("cross_exchange: token index out of range");
  auto swap_in = [&](const Var<T>& keep, const Var<T>& other) {
    std::vector<Var<T>> parts;
    if (at > 0) parts.push_back(slice(keep, 1, 0, at));
    parts.push_back(slice(other, 1, at, 1));
    if (at + 1 < n) parts.push_back(slice(keep, 1, at + 1, n - at - 1));
    return parts.size() == 1 ? parts[0] : concat(parts, 1);
  };
  return {swap_in(w, W), swap_in(W, w)};
}

template <typename T>
struct CrossMamba {
  std::vector<BpssBlock<T>> local, global;

  static CrossMamba init(const EncoderConfig& cfg, std::size_t depth, Rng& rng) {
    CrossMamba c;
    for (std::size_t i = 0; i < depth; ++i) c.local.push_back(BpssBlock<T>::init(cfg, rng));
    for (std::size_t i = 0; i < depth; ++i) c.global.push_back(BpssBlock<T>::init(cfg, rng));
    return c;
  }

  std::pair<Var<T>, Var<T>> operator()(const Var<T>& w, const Var<T>& W,
                                       std::optional<std::size_t> index = std::nullopt) const {
    auto [wx, Wx] = cross_exchange(w, W, index);
    return {run_blocks(local, wx), run_blocks(global, Wx)};
  }

  nn::ParamList<T> params() const {
    nn::ParamList<T> out;
    nn::append(out, "local.", block_params(local));
    nn::append(out, "global.", block_params(global));
    return out;
  }
};

// D -> D -> classes, SiLU between, softmax on top.
template <typename T>
struct Head {
  nn::Linear<T> hidden, out;

  static Head init(std::size_t d_model, std::size_t classes, Rng& rng) {
    return {nn::Linear<T>::init(d_model, d_model, rng), nn::Linear<T>::init(d_model, classes, rng)};
  }

  std::size_t classes() const { return out.weight.dim(1); }
  Var<T> logits(const Var<T>& c) const { return out(silu(hidden(c))); }
  Var<T> operator()(const Var<T>& c) const { return softmax(logits(c)); }

  nn::ParamList<T> params() const {
    nn::ParamList<T> p;
    nn::append(p, "hidden.", hidden.params());
    nn::append(p, "out.", out.params());
    return p;
  }
};

template <typename T>
Var<T> average_prediction(const Var<T>& y_local, const Var<T>& y_global) {
  if (y_local.shape() != y_global.shape()) {
    throw Error("classify: head outputs " + shape_str(y_local.shape()) + " and " +
                shape_str(y_global.shape()) + " disagree on class count");
  }
  return scale(add(y_local, y_global), T(0.5));
}

struct ModelConfig {
  EncoderConfig local{.patch = 16, .kernel = 1};
  EncoderConfig global{.patch = 32, .kernel = 2};
  std::size_t cross_depth = 1;
  std::size_t classes = 2;

  void validate() const {
    if (local.tokens() != global.tokens()) {
      throw Error("model: local and global branches emit " + std::to_string(local.tokens()) +
                  " vs " + std::to_string(global.tokens()) + " tokens");
    }
    if (local.d_model != global.d_model || local.class_index() != global.class_index()) {
      throw Error("model: branch widths or class positions differ");
    }
    if (classes < 1) throw Error("model: need at least one class");
  }
};

template <typename T>
struct Prediction {
  Var<T> y_local, y_global, y_mean;  // (B, classes) each
};

// Two encoders, Cross Mamba fusion and per-branch heads.
template <typename T>
struct Classifier {
  ModelConfig cfg;
  Encoder<T> local, global;
  CrossMamba<T> cross;
  Head<T> head_local, head_global;

  static Classifier init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    Classifier c;
    c.cfg = cfg;
    c.local = Encoder<T>::init(cfg.local, rng);
    c.global = Encoder<T>::init(cfg.global, rng);
    c.cross = CrossMamba<T>::init(cfg.local, cfg.cross_depth, rng);
    c.head_local = Head<T>::init(cfg.local.d_model, cfg.classes, rng);
    c.head_global = Head<T>::init(cfg.global.d_model, cfg.classes, rng);
    return c;
  }

  // Keeps the fusion blocks and heads, swaps in (pre-trained) encoders.
  static Classifier from_encoders(const ModelConfig& cfg, Encoder<T> local, Encoder<T> global,
                                  Rng& rng) {
    Classifier c = init(cfg, rng);
    c.local = std::move(local);
    c.global = std::move(global);
    return c;
  }

  Prediction<T> operator()(const Var<T>& x, const Var<T>& X) const {
    auto w = local(x);
    auto W = global(X);
    auto [wf, Wf] = cross(w, W, cfg.local.class_index());
    Prediction<T> p;
    p.y_local = head_local(local.class_feature(wf));
    p.y_global = head_global(global.class_feature(Wf));
    p.y_mean = average_prediction(p.y_local, p.y_global);
    return p;
  }

  nn::ParamList<T> params() const {
    nn::ParamList<T> out;
    nn::append(out, "local.", local.params());
    nn::append(out, "global.", global.params());
    nn::append(out, "cross.", cross.params());
    nn::append(out, "head_local.", head_local.params());
    nn::append(out, "head_global.", head_global.params());
    return out;
  }
};

}  // namespace ecpm
