#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecpm/rng.hpp"
#include "ecpm/tensor.hpp"

namespace ecpm::polsar {

using Complex = std::complex<double>;

inline constexpr std::size_t kChannels = 9;

// Reciprocal backscatter: S_HV == S_VH.
struct ScatteringMatrix {
  Complex hh, hv, vv;
};

struct PauliVector {
  std::array<Complex, 3> p{};
};

// 3x3 complex matrix, row-major.
struct CoherenceMatrix {
  std::array<Complex, 9> m{};

  Complex& operator()(std::size_t r, std::size_t c) { return m[r * 3 + c]; }
  const Complex& operator()(std::size_t r, std::size_t c) const {
    return m[r * 3 + c];
  }

  bool is_hermitian(double tol) const {
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c)
        if (std::abs((*this)(r, c) - std::conj((*this)(c, r))) > tol) return false;
    return true;
  }
};

struct CoherenceImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t looks = 1;  // provenance only
  bool normalized = false;
  std::vector<CoherenceMatrix> t;  // row-major pixels

  CoherenceMatrix& at(std::size_t r, std::size_t c) { return t[r * width + c]; }
  const CoherenceMatrix& at(std::size_t r, std::size_t c) const {
    return t[r * width + c];
  }
};

// Per-pixel class ids; 0 = unlabeled, 1..num_classes otherwise.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  std::vector<std::uint16_t> ids;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::size_t n)
      : height(h), width(w), num_classes(n), ids(h * w, 0) {}

  std::uint16_t at(std::size_t r, std::size_t c) const { return ids[r * width + c]; }

  void validate() const {
    if (ids.size() != height * width) throw Error("LabelMap: size mismatch");
    for (auto id : ids) {
      if (id > num_classes) {
        throw Error("LabelMap: id " + std::to_string(id) + " exceeds class count " +
                    std::to_string(num_classes));
      }
    }
  }
};

struct Pixel {
  std::size_t row = 0;
  std::size_t col = 0;
  std::uint16_t label = 0;
};

// Local (9, k, k) and global (9, K, K) windows sharing one center pixel.
template <typename T>
struct ViewPair {
  Tensor<T> local;
  Tensor<T> global;
  std::size_t row = 0;
  std::size_t col = 0;
  std::optional<std::uint16_t> label;
};

inline PauliVector pauli_vector(const ScatteringMatrix& s) {
  const double k = 1.0 / std::sqrt(2.0);
  return PauliVector{{k * (s.hh + s.vv), k * (s.hh - s.vv), k * 2.0 * s.hv}};
}

// (1/L) sum p p^H over the looks.
inline CoherenceMatrix coherence_accumulate(std::span<const PauliVector> looks) {
  if (looks.empty()) throw Error("coherence_accumulate: no looks");
  CoherenceMatrix t;
  for (const auto& v : looks)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) t(r, c) += v.p[r] * std::conj(v.p[c]);
  const double inv = 1.0 / static_cast<double>(looks.size());
  for (auto& z : t.m) z *= inv;
  return t;
}

// Upper-triangle channel slots: three real diagonals, three complex.
inline constexpr std::array<std::array<std::size_t, 2>, 6> kChannelSlots{
    {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}}};

// Z-scores the six upper-triangle channels independently over all pixels;
// the deviation uses the mean squared modulus so complex channels are
// scaled jointly. Lower triangle is rebuilt by conjugation.
inline CoherenceImage complex_zscore(const CoherenceImage& in) {
  CoherenceImage out = in;
  const std::size_t n = in.t.size();
  if (n == 0) throw Error("complex_zscore: empty image");
  for (std::size_t ch = 0; ch < kChannelSlots.size(); ++ch) {
    const auto [r, c] = kChannelSlots[ch];
    Complex mean{0.0, 0.0};
    for (const auto& px : in.t) mean += px(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& px : in.t) var += std::norm(px(r, c) - mean);
    double sd = std::sqrt(var / static_cast<double>(n));
    if (sd < 1e-12) {
      warn("complex_zscore: channel T" + std::to_string(r + 1) +
           std::to_string(c + 1) + " is constant; guarding deviation");
      sd = 1e-12;
    }
    for (auto& px : out.t) {
      px(r, c) = (px(r, c) - mean) / sd;
      if (r != c) px(c, r) = std::conj(px(r, c));
    }
  }
  out.normalized = true;
  return out;
}

// (9, H, W) raster: [T11 T22 T33 ReT12 ReT13 ReT23 ImT12 ImT13 ImT23].
inline Tensor<double> restructure(const CoherenceImage& img) {
  const std::size_t plane = img.height * img.width;
  Tensor<double> out({kChannels, img.height, img.width});
  for (std::size_t i = 0; i < plane; ++i) {
    const auto& t = img.t[i];
    out[0 * plane + i] = t(0, 0).real();
    out[1 * plane + i] = t(1, 1).real();
    out[2 * plane + i] = t(2, 2).real();
    out[3 * plane + i] = t(0, 1).real();
    out[4 * plane + i] = t(0, 2).real();
    out[5 * plane + i] = t(1, 2).real();
    out[6 * plane + i] = t(0, 1).imag();
    out[7 * plane + i] = t(0, 2).imag();
    out[8 * plane + i] = t(1, 2).imag();
  }
  return out;
}

// Inverse of restructure with Hermitian completion.
inline CoherenceImage from_raster(const Tensor<double>& raster, bool normalized) {
  if (raster.rank() != 3 || raster.dim(0) != kChannels) {
    throw Error("from_raster: expected (9, H, W), got " + shape_str(raster.shape()));
  }
  CoherenceImage img;
  img.height = raster.dim(1);
  img.width = raster.dim(2);
  img.normalized = normalized;
  const std::size_t plane = img.height * img.width;
  img.t.resize(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    auto& t = img.t[i];
    auto ch = [&](std::size_t c) { return raster[c * plane + i]; };
    t(0, 0) = ch(0);
    t(1, 1) = ch(1);
    t(2, 2) = ch(2);
    t(0, 1) = Complex(ch(3), ch(6));
    t(0, 2) = Complex(ch(4), ch(7));
    t(1, 2) = Complex(ch(5), ch(8));
    t(1, 0) = std::conj(t(0, 1));
    t(2, 0) = std::conj(t(0, 2));
    t(2, 1) = std::conj(t(1, 2));
  }
  return img;
}

namespace detail {

template <typename T>
void copy_window(const Tensor<double>& raster, std::size_t row, std::size_t col,
                 std::size_t side, T* dst) {
  const std::size_t H = raster.dim(1), W = raster.dim(2);
  const auto half = static_cast<std::ptrdiff_t>(side / 2);
  for (std::size_t c = 0; c < kChannels; ++c)
    for (std::size_t i = 0; i < side; ++i) {
      const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(row) - half +
                               static_cast<std::ptrdiff_t>(i);
      for (std::size_t j = 0; j < side; ++j) {
        const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(col) - half +
                                 static_cast<std::ptrdiff_t>(j);
        T v{0};
        if (r >= 0 && q >= 0 && r < static_cast<std::ptrdiff_t>(H) &&
            q < static_cast<std::ptrdiff_t>(W)) {
          v = static_cast<T>(raster[(c * H + static_cast<std::size_t>(r)) * W +
                                    static_cast<std::size_t>(q)]);
        }
        dst[(c * side + i) * side + j] = v;
      }
    }
}

}  // namespace detail

// Windows centered so the pixel lands at (k/2, k/2) and (K/2, K/2); outside
// the image is zero.
template <typename T>
ViewPair<T> extract_views(const Tensor<double>& raster, std::size_t row,
                          std::size_t col, std::size_t k, std::size_t K) {
  if (raster.rank() != 3 || raster.dim(0) != kChannels) {
    throw Error("extract_views: expected (9, H, W), got " + shape_str(raster.shape()));
  }
  if (k >= K) {
    throw Error("extract_views: local size " + std::to_string(k) +
                " must be smaller than global size " + std::to_string(K));
  }
  if (row >= raster.dim(1) || col >= raster.dim(2)) {
    throw Error("extract_views: center outside image");
  }
  ViewPair<T> v;
  v.row = row;
  v.col = col;
  v.local = Tensor<T>({kChannels, k, k});
  v.global = Tensor<T>({kChannels, K, K});
  detail::copy_window(raster, row, col, k, v.local.data().data());
  detail::copy_window(raster, row, col, K, v.global.data().data());
  return v;
}

// Source coordinate for output (i, j) of dihedral transform `index` on an
// n x n grid. 0..3 rotate clockwise by 0/90/180/270 degrees; 4..7 apply the
// same rotations to the mirrored (left-right) patch.
inline std::pair<std::size_t, std::size_t> dihedral_source(std::size_t index,
                                                           std::size_t n,
                                                           std::size_t i,
                                                           std::size_t j) {
  std::size_t r = i, c = j;
  // undo the rotation: clockwise r90 has out(i, j) = in(n-1-j, i)
  for (std::size_t q = 0; q < index % 4; ++q) {
    const std::size_t nr = n - 1 - c, nc = r;
    r = nr;
    c = nc;
  }
  if (index >= 4) c = n - 1 - c;
  return {r, c};
}

// One of the eight dihedral transforms of a (C, n, n) patch or a
// (B, C, n, n) batch (same transform for every item).
template <typename T>
Tensor<T> augment(const Tensor<T>& patch, std::size_t index) {
  if (index > 7) throw Error("augment: index " + std::to_string(index) + " out of 0..7");
  const auto& s = patch.shape();
  if (s.size() < 2 || s[s.size() - 1] != s[s.size() - 2]) {
    throw Error("augment: patch must be square, got " + shape_str(s));
  }
  if (index == 0) return patch;
  const std::size_t n = s.back();
  const std::size_t planes = patch.size() / (n * n);
  Tensor<T> out(s);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto [r, c] = dihedral_source(index, n, i, j);
      for (std::size_t p = 0; p < planes; ++p)
        out[(p * n + i) * n + j] = patch[(p * n + r) * n + c];
    }
  return out;
}

// Per-class sampling without replacement of max(1, round(rate * count))
// pixels. Returned grouped by class, each group in draw order.
inline std::vector<Pixel> sample_labels(const LabelMap& labels, double rate,
                                        std::uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw Error("sample_labels: rate must lie in (0, 1], got " + std::to_string(rate));
  }
  labels.validate();
  std::vector<std::vector<std::size_t>> members(labels.num_classes + 1);
  for (std::size_t i = 0; i < labels.ids.size(); ++i) {
    if (labels.ids[i]) members[labels.ids[i]].push_back(i);
  }
  Rng rng(seed);
  std::vector<Pixel> out;
  for (std::size_t cls = 1; cls <= labels.num_classes; ++cls) {
    auto& pool = members[cls];
    if (pool.empty()) {
      warn("sample_labels: class " + std::to_string(cls) + " has no pixels; skipped");
      continue;
    }
    const auto want = static_cast<std::size_t>(
        std::max(1.0, std::round(rate * static_cast<double>(pool.size()))));
    const std::size_t take = std::min(want, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      out.push_back(Pixel{pool[i] / labels.width, pool[i] % labels.width,
                          static_cast<std::uint16_t>(cls)});
    }
  }
  return out;
}

// Every labeled pixel, row-major.
inline std::vector<Pixel> labeled_pixels(const LabelMap& labels) {
  std::vector<Pixel> out;
  for (std::size_t i = 0; i < labels.ids.size(); ++i) {
    if (labels.ids[i]) out.push_back(Pixel{i / labels.width, i % labels.width, labels.ids[i]});
  }
  return out;
}

}  // namespace ecpm::polsar
