#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecpm/polsar.hpp"

namespace ecpm::polsar {

// Versioned class-covariance fixture for the synthetic generator. Each entry
// is the upper triangle [T11 T22 T33 T12 T13 T23] of a Hermitian
// positive-definite mean coherence matrix. Dominant Pauli channels differ
// between classes; off-diagonal correlations make pairs that share a
// dominant channel separable only jointly.
inline constexpr int kSynthFixtureVersion = 1;

struct ClassCovariance {
  double t11, t22, t33;
  Complex t12, t13, t23;

  CoherenceMatrix matrix() const {
    CoherenceMatrix m;
    m(0, 0) = t11;
    m(1, 1) = t22;
    m(2, 2) = t33;
    m(0, 1) = t12;
    m(0, 2) = t13;
    m(1, 2) = t23;
    m(1, 0) = std::conj(t12);
    m(2, 0) = std::conj(t13);
    m(2, 1) = std::conj(t23);
    return m;
  }
};

inline const std::array<ClassCovariance, 8>& synth_fixture() {
  using C = Complex;
  static const std::array<ClassCovariance, 8> table{{
      {1.00, 0.30, 0.20, C(0.15, 0.05), C(0.05, 0.00), C(0.02, 0.01)},   // surface
      {0.35, 1.00, 0.25, C(-0.10, 0.10), C(0.00, 0.03), C(0.05, -0.02)}, // double bounce
      {0.40, 0.35, 0.90, C(0.02, 0.00), C(0.10, -0.05), C(0.08, 0.04)},  // volume
      {0.75, 0.60, 0.45, C(0.25, -0.15), C(0.05, 0.05), C(-0.05, 0.00)}, // mixed
      {0.55, 0.25, 0.55, C(0.00, 0.10), C(0.20, 0.10), C(0.00, 0.05)},
      {0.30, 0.70, 0.70, C(0.05, 0.00), C(0.00, 0.00), C(0.25, 0.15)},
      {1.20, 0.80, 0.30, C(-0.30, 0.00), C(0.05, -0.05), C(0.00, 0.00)},
      {0.50, 0.50, 0.50, C(0.00, 0.00), C(0.00, 0.00), C(0.00, 0.00)},
  }};
  return table;
}

// Lower-triangular L with L L^H = m; throws when m is not positive
// semidefinite (negative pivot). Zero pivots give a zero column.
inline std::array<Complex, 9> cholesky3(const CoherenceMatrix& m) {
  if (!m.is_hermitian(1e-12)) throw Error("synth: covariance is not Hermitian");
  std::array<Complex, 9> l{};
  for (std::size_t j = 0; j < 3; ++j) {
    double d = m(j, j).real();
    for (std::size_t k = 0; k < j; ++k) d -= std::norm(l[j * 3 + k]);
    if (d < -1e-12) throw Error("synth: requested covariance is not positive semidefinite");
    const double piv = std::sqrt(std::max(d, 0.0));
    l[j * 3 + j] = piv;
    for (std::size_t i = j + 1; i < 3; ++i) {
      Complex s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l[i * 3 + k] * std::conj(l[j * 3 + k]);
      if (piv > 1e-15) {
        l[i * 3 + j] = s / piv;
      } else if (std::abs(s) > 1e-12) {
        throw Error("synth: requested covariance is not positive semidefinite");
      }
    }
  }
  return l;
}

struct SynthSpec {
  std::size_t num_classes = 4;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t looks = 4;
  double noise = 1.0;          // 0 = exact class mean, 1 = full speckle
  std::uint64_t seed = 0;
  std::size_t block = 0;       // square tile side; 0 = one rectangle per class
  double salt = 0.005;         // fraction of single-pixel intrusions
  std::vector<CoherenceMatrix> covariances;  // overrides the fixture
};

struct SynthResult {
  CoherenceImage image;
  LabelMap labels;
};

// Block-layout synthetic scene. Each pixel's T is the looks-average of
// outer products of complex Gaussian Pauli draws with its class covariance,
// blended toward the class mean by `noise`.
inline SynthResult synth_polsar(const SynthSpec& spec) {
  if (spec.num_classes < 2) throw Error("synth: need at least 2 classes");
  if (spec.height == 0 || spec.width == 0) throw Error("synth: empty image");
  if (spec.looks == 0) throw Error("synth: looks must be >= 1");
  if (!(spec.noise >= 0.0 && spec.noise <= 1.0)) {
    throw Error("synth: noise scale must lie in [0, 1]");
  }
  if (!(spec.salt >= 0.0 && spec.salt <= 0.01)) {
    throw Error("synth: salt fraction must lie in [0, 0.01]");
  }
  std::vector<CoherenceMatrix> cov = spec.covariances;
  if (cov.empty()) {
    const auto& fx = synth_fixture();
    if (spec.num_classes > fx.size()) {
      throw Error("synth: fixture v" + std::to_string(kSynthFixtureVersion) +
                  " defines only " + std::to_string(fx.size()) + " classes");
    }
    for (std::size_t c = 0; c < spec.num_classes; ++c) cov.push_back(fx[c].matrix());
  }
  if (cov.size() != spec.num_classes) {
    throw Error("synth: covariance count does not match class count");
  }
  std::vector<std::array<Complex, 9>> chol;
  for (const auto& c : cov) chol.push_back(cholesky3(c));

  Rng rng(spec.seed);
  const std::size_t H = spec.height, W = spec.width;
  // Default: one rectangle per class on a near-square grid; `block` > 0
  // tiles square blocks instead, classes dealt round-robin.
  std::size_t gh, gw;
  if (spec.block) {
    gh = (H + spec.block - 1) / spec.block;
    gw = (W + spec.block - 1) / spec.block;
  } else {
    gw = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(spec.num_classes))));
    gh = (spec.num_classes + gw - 1) / gw;
  }
  auto cell_row = [&](std::size_t r) { return spec.block ? r / spec.block : r * gh / H; };
  auto cell_col = [&](std::size_t c) { return spec.block ? c / spec.block : c * gw / W; };
  std::vector<std::uint16_t> assign(gh * gw);
  for (std::size_t i = 0; i < assign.size(); ++i) {
    assign[i] = static_cast<std::uint16_t>(i % spec.num_classes + 1);
  }
  std::shuffle(assign.begin(), assign.end(), rng);

  SynthResult res;
  res.labels = LabelMap(H, W, spec.num_classes);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c)
      res.labels.ids[r * W + c] = assign[cell_row(r) * gw + cell_col(c)];

  const auto salt = static_cast<std::size_t>(std::floor(spec.salt * static_cast<double>(H * W)));
  std::uniform_int_distribution<std::size_t> any_pixel(0, H * W - 1);
  std::uniform_int_distribution<std::size_t> shift(1, spec.num_classes - 1);
  for (std::size_t s = 0; s < salt; ++s) {
    const std::size_t i = any_pixel(rng);
    const std::size_t cur = res.labels.ids[i] - 1;
    res.labels.ids[i] = static_cast<std::uint16_t>((cur + shift(rng)) % spec.num_classes + 1);
  }

  res.image.height = H;
  res.image.width = W;
  res.image.looks = spec.looks;
  res.image.t.resize(H * W);
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
  std::vector<PauliVector> looks(spec.looks);
  for (std::size_t i = 0; i < H * W; ++i) {
    const std::size_t cls = res.labels.ids[i] - 1;
    const auto& l = chol[cls];
    for (auto& v : looks) {
      std::array<Complex, 3> z;
      for (auto& zi : z) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        zi = Complex(re, im);
      }
      for (std::size_t r = 0; r < 3; ++r) {
        Complex acc{0.0, 0.0};
        for (std::size_t k = 0; k <= r; ++k) acc += l[r * 3 + k] * z[k];
        v.p[r] = acc;
      }
    }
    const auto sample = coherence_accumulate(looks);
    auto& t = res.image.t[i];
    for (std::size_t k = 0; k < 9; ++k) {
      t.m[k] = cov[cls].m[k] + spec.noise * (sample.m[k] - cov[cls].m[k]);
    }
  }
  return res;
}

}  // namespace ecpm::polsar
