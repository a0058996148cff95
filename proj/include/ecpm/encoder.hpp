#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ecpm/nn.hpp"
#include "ecpm/polsar.hpp"
#include "ecpm/ssm.hpp"

namespace ecpm {

enum class ScanOrder { spiral, raster };

inline const char* to_string(ScanOrder s) {
  return s == ScanOrder::spiral ? "spiral" : "raster";
}

// Clockwise inward spiral over a row-major rows x cols grid, starting at
// the top-left corner. Entry i is the flat index visited i-th.
inline std::vector<std::size_t> spiral_permutation(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw Error("spiral_permutation: empty grid");
  std::vector<std::size_t> order;
  order.reserve(rows * cols);
  std::ptrdiff_t top = 0, left = 0;
  std::ptrdiff_t bottom = static_cast<std::ptrdiff_t>(rows) - 1;
  std::ptrdiff_t right = static_cast<std::ptrdiff_t>(cols) - 1;
  auto push = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
    order.push_back(static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c));
  };
  while (top <= bottom && left <= right) {
    for (auto c = left; c <= right; ++c) push(top, c);
    ++top;
    for (auto r = top; r <= bottom; ++r) push(r, right);
    --right;
    if (top <= bottom) {
      for (auto c = right; c >= left; --c) push(bottom, c);
      --bottom;
    }
    if (left <= right) {
      for (auto r = bottom; r >= top; --r) push(r, left);
      ++left;
    }
  }
  return order;
}

inline std::vector<std::size_t> scan_permutation(ScanOrder scan, std::size_t rows,
                                                 std::size_t cols) {
  if (scan == ScanOrder::spiral) return spiral_permutation(rows, cols);
  std::vector<std::size_t> order(rows * cols);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return order;
}

// entry (t, 2i) = sin(t / 10000^(2i/D)), (t, 2i+1) = cos(...)
template <typename T>
Tensor<T> sinusoidal_positions(std::size_t length, std::size_t dim) {
  if (dim % 2) throw Error("sinusoidal_positions: dimension must be even, got " + std::to_string(dim));
  Tensor<T> table({length, dim});
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      const double angle = static_cast<double>(t) / freq;
      table[t * dim + 2 * i] = static_cast<T>(std::sin(angle));
      table[t * dim + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  return table;
}

struct EncoderConfig {
  std::size_t patch = 16;   // input side k (or K)
  std::size_t kernel = 1;   // patch-embedding kernel and stride
  std::size_t d_model = 192;
  std::size_t d_state = 16;
  std::size_t depth = 1;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  ScanOrder scan = ScanOrder::spiral;
  long class_pos = -1;  // insertion index of the class token; -1 = tail

  std::size_t grid() const {
    if (kernel == 0 || patch % kernel) {
      throw Error("encoder: patch side " + std::to_string(patch) +
                  " not divisible by kernel " + std::to_string(kernel));
    }
    return patch / kernel;
  }
  std::size_t tokens() const { return grid() * grid(); }
  std::size_t class_index() const {
    if (class_pos < 0) return tokens();
    if (static_cast<std::size_t>(class_pos) > tokens()) {
      throw Error("encoder: class position beyond sequence");
    }
    return static_cast<std::size_t>(class_pos);
  }
};

template <typename T>
struct PatchEmbed {
  std::size_t kernel = 1;
  nn::Linear<T> proj;  // (9 k^2) -> D

  static PatchEmbed init(std::size_t kernel, std::size_t d_model, Rng& rng) {
    return {kernel, nn::Linear<T>::init(polsar::kChannels * kernel * kernel, d_model, rng)};
  }

  // (B, 9, k, k) -> (B, (k/kernel)^2, D), tokens row-major over the grid.
  Var<T> operator()(const Var<T>& x) const { return proj(im2col(x, kernel)); }

  nn::ParamList<T> params() const {
    nn::ParamList<T> out;
    nn::append(out, "proj.", proj.params());
    return out;
  }
};

// Permutes tokens by `order`, inserts the class token at `class_index` and
// adds the (L+1, D) positional table to every position.
template <typename T>
Var<T> spiral_scan(const Var<T>& v, const Var<T>& class_token, const Var<T>& pos,
                   const std::vector<std::size_t>& order, std::size_t class_index) {
  if (v.value().rank() != 3) throw Error("spiral_scan: expected (B, L, D), got " + shape_str(v.shape()));
  const std::size_t B = v.dim(0), L = v.dim(1), D = v.dim(2);
  if (pos.shape() != Shape{L + 1, D}) {
    throw Error("spiral_scan: positional table " + shape_str(pos.shape()) +
                " does not match sequence of length " + std::to_string(L + 1));
  }
  if (order.size() != L || class_index > L || class_token.shape() != Shape{D}) {
    throw Error("spiral_scan: inconsistent order/class token");
  }
  auto seq = gather(v, 1, order);
  auto cls = add_broadcast(constant(Tensor<T>({B, 1, D})), class_token);
  std::vector<Var<T>> parts;
  if (class_index > 0) parts.push_back(slice(seq, 1, 0, class_index));
  parts.push_back(cls);
  if (class_index < L) parts.push_back(slice(seq, 1, class_index, L - class_index));
  return add_broadcast(concat(parts, 1), pos);
}

// Norm uses a tiny epsilon so unit-gain outputs keep unit RMS for inputs
// down to RMS 1e-3.
inline constexpr double kNormEps = 1e-12;

// Bidirectional selective-scan block with a shared gate and residual path.
template <typename T>
struct BpssBlock {
  nn::Linear<T> in_proj;    // D -> E
  nn::Linear<T> gate_proj;  // D -> E
  nn::Linear<T> out_proj;   // E -> D
  Var<T> norm_gain;         // (D)
  Var<T> conv_f_w, conv_f_b, conv_b_w, conv_b_b;  // (E, width), (E)
  ssm::Params<T> ssm_f, ssm_b;

  static BpssBlock init(const EncoderConfig& cfg, Rng& rng) {
    const std::size_t D = cfg.d_model, E = cfg.expand * cfg.d_model;
    BpssBlock b;
    b.in_proj = nn::Linear<T>::init(D, E, rng);
    b.gate_proj = nn::Linear<T>::init(D, E, rng);
    b.out_proj = nn::Linear<T>::init(E, D, rng);
    b.norm_gain = parameter(Tensor<T>({D}, T{1}));
    const T cb = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.conv_width)));
    b.conv_f_w = parameter(uniform_tensor<T>({E, cfg.conv_width}, -cb, cb, rng));
    b.conv_f_b = parameter(uniform_tensor<T>({E}, -cb, cb, rng));
    b.conv_b_w = parameter(uniform_tensor<T>({E, cfg.conv_width}, -cb, cb, rng));
    b.conv_b_b = parameter(uniform_tensor<T>({E}, -cb, cb, rng));
    b.ssm_f = ssm::Params<T>::init(E, cfg.d_state, rng);
    b.ssm_b = ssm::Params<T>::init(E, cfg.d_state, rng);
    return b;
  }

  Var<T> operator()(const Var<T>& v) const {
    if (v.value().rank() != 3 || v.dim(2) != norm_gain.size()) {
      throw Error("bpss_forward: input " + shape_str(v.shape()) + " does not match width " +
                  std::to_string(norm_gain.size()));
    }
    auto s = in_proj(v);
    auto fwd = ssm::forward(silu(conv1d_causal(s, conv_f_w, conv_f_b)), ssm_f);
    auto bwd = flip(ssm::forward(silu(conv1d_causal(flip(s, 1), conv_b_w, conv_b_b)), ssm_b), 1);
    auto gate = silu(gate_proj(rms_norm(v, norm_gain, static_cast<T>(kNormEps))));
    return add(out_proj(add(mul(fwd, gate), mul(bwd, gate))), v);
  }

  nn::ParamList<T> params() const {
    nn::ParamList<T> out;
    nn::append(out, "in_proj.", in_proj.params());
    nn::append(out, "gate_proj.", gate_proj.params());
    nn::append(out, "out_proj.", out_proj.params());
    out.push_back({"norm.gain", norm_gain});
    out.push_back({"conv_f.weight", conv_f_w});
    out.push_back({"conv_f.bias", conv_f_b});
    out.push_back({"conv_b.weight", conv_b_w});
    out.push_back({"conv_b.bias", conv_b_b});
    for (auto [tag, p] : {std::pair{"ssm_f.", &ssm_f}, std::pair{"ssm_b.", &ssm_b}}) {
      const std::string pre = tag;
      out.push_back({pre + "a_log", p->a_log});
      out.push_back({pre + "w_b", p->w_b});
      out.push_back({pre + "w_c", p->w_c});
      out.push_back({pre + "w_delta", p->w_delta});
      out.push_back({pre + "delta_bias", p->delta_bias});
    }
    return out;
  }
};

template <typename T>
Var<T> run_blocks(const std::vector<BpssBlock<T>>& blocks, Var<T> x) {
  for (const auto& b : blocks) x = b(x);
  return x;
}

template <typename T>
nn::ParamList<T> block_params(const std::vector<BpssBlock<T>>& blocks) {
  nn::ParamList<T> out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    nn::append(out, "blocks." + std::to_string(i) + ".", blocks[i].params());
  }
  return out;
}

// Patch -> (B, L+1, D) token features; the class feature sits at
// cfg.class_index() before and after the block stack.
template <typename T>
struct Encoder {
  EncoderConfig cfg;
  PatchEmbed<T> embed;
  Var<T> class_token;  // (D)
  Var<T> positions;    // fixed (L+1, D)
  std::vector<std::size_t> order;
  std::vector<BpssBlock<T>> blocks;

  static Encoder init(const EncoderConfig& cfg, Rng& rng) {
    Encoder e;
    e.cfg = cfg;
    const std::size_t g = cfg.grid();
    e.embed = PatchEmbed<T>::init(cfg.kernel, cfg.d_model, rng);
    e.class_token = parameter(normal_tensor<T>({cfg.d_model}, T(0.02), rng));
    e.positions = constant(sinusoidal_positions<T>(g * g + 1, cfg.d_model));
    e.order = scan_permutation(cfg.scan, g, g);
    for (std::size_t i = 0; i < cfg.depth; ++i) e.blocks.push_back(BpssBlock<T>::init(cfg, rng));
    cfg.class_index();
    return e;
  }

  Var<T> tokens(const Var<T>& patch) const {
    const auto& s = patch.shape();
    if (s.size() != 4 || s[1] != polsar::kChannels || s[2] != cfg.patch || s[3] != cfg.patch) {
      throw Error("encode: expected (B, 9, " + std::to_string(cfg.patch) + ", " +
                  std::to_string(cfg.patch) + ") patch, got " + shape_str(s));
    }
    return spiral_scan(embed(patch), class_token, positions, order, cfg.class_index());
  }

  Var<T> operator()(const Var<T>& patch) const { return run_blocks(blocks, tokens(patch)); }

  // (B, L+1, D) -> (B, D)
  Var<T> class_feature(const Var<T>& seq) const {
    auto c = slice(seq, 1, cfg.class_index(), 1);
    return reshape(c, Shape{seq.dim(0), seq.dim(2)});
  }

  nn::ParamList<T> params() const {
    nn::ParamList<T> out;
    nn::append(out, "embed.", embed.params());
    out.push_back({"class_token", class_token});
    nn::append(out, "", block_params(blocks));
    return out;
  }
};

}  // namespace ecpm
