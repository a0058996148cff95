#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "ecpm/encoder.hpp"
#include "ecpm/gradcheck.hpp"

using namespace ecpm;

namespace {

// Independent spiral: walk with a direction vector, turn right on
// hitting a wall or a visited cell.
std::vector<std::size_t> turtle_spiral(std::size_t rows, std::size_t cols) {
  std::vector<bool> seen(rows * cols, false);
  std::vector<std::size_t> out;
  const int dr[4] = {0, 1, 0, -1}, dc[4] = {1, 0, -1, 0};
  int r = 0, c = 0, dir = 0;
  for (std::size_t step = 0; step < rows * cols; ++step) {
    out.push_back(r * cols + c);
    seen[r * cols + c] = true;
    int nr = r + dr[dir], nc = c + dc[dir];
    if (nr < 0 || nc < 0 || nr >= int(rows) || nc >= int(cols) || seen[nr * cols + nc]) {
      dir = (dir + 1) % 4;
      nr = r + dr[dir];
      nc = c + dc[dir];
    }
    r = nr;
    c = nc;
  }
  return out;
}

EncoderConfig tiny_cfg(std::size_t patch, std::size_t kernel, std::size_t d = 4) {
  EncoderConfig cfg;
  cfg.patch = patch;
  cfg.kernel = kernel;
  cfg.d_model = d;
  cfg.d_state = 3;
  cfg.depth = 1;
  return cfg;
}

}  // namespace

TEST(Spiral, SmallGrids) {
  EXPECT_EQ(spiral_permutation(1, 1), std::vector<std::size_t>{0});
  EXPECT_EQ(spiral_permutation(3, 3), (std::vector<std::size_t>{0, 1, 2, 5, 8, 7, 6, 3, 4}));
}

TEST(Spiral, SixteenEndsNextToCenter) {
  auto s = spiral_permutation(16, 16);
  EXPECT_EQ(s.back(), 135u);
  EXPECT_EQ(s.back() / 16, 8u);
  EXPECT_EQ(s.back() % 16, 7u);
}

TEST(Spiral, BijectionAndTurtleAgreementUpTo32) {
  for (std::size_t r = 1; r <= 32; ++r)
    for (std::size_t c = 1; c <= 32; ++c) {
      auto s = spiral_permutation(r, c);
      ASSERT_EQ(s.size(), r * c);
      std::vector<std::size_t> sorted = s;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < sorted.size(); ++i) ASSERT_EQ(sorted[i], i);
      ASSERT_EQ(s, turtle_spiral(r, c)) << r << "x" << c;
    }
}

TEST(Spiral, TailPosition) {
  for (std::size_t n = 1; n <= 31; n += 2) {
    EXPECT_EQ(spiral_permutation(n, n).back(), (n / 2) * n + n / 2);
  }
  for (std::size_t n : {2u, 4u, 8u, 16u, 32u}) {
    EXPECT_EQ(spiral_permutation(n, n).back(), (n / 2) * n + n / 2 - 1);
  }
}

TEST(Positions, Table) {
  EXPECT_THROW(sinusoidal_positions<double>(4, 3), Error);
  auto p = sinusoidal_positions<double>(512, 8);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(p[i], i % 2 ? 1.0 : 0.0);
  for (double v : p.data()) {
    EXPECT_LE(v, 1.0);
    EXPECT_GE(v, -1.0);
  }
  EXPECT_NEAR(p.at({3, 2}), std::sin(3.0 / std::pow(10000.0, 2.0 / 8.0)), 1e-15);
  EXPECT_NEAR(p.at({3, 3}), std::cos(3.0 / std::pow(10000.0, 2.0 / 8.0)), 1e-15);
  for (std::size_t a = 0; a < 512; ++a)
    for (std::size_t b = a + 1; b < 512; ++b) {
      bool same = true;
      for (std::size_t i = 0; i < 8 && same; ++i) same = p.at({a, i}) == p.at({b, i});
      ASSERT_FALSE(same) << a << " " << b;
    }
}

TEST(PatchEmbed, SequenceLengths) {
  Rng rng(1);
  EXPECT_EQ(tiny_cfg(16, 1).tokens(), 256u);
  EXPECT_EQ(tiny_cfg(32, 2).tokens(), 256u);
  EXPECT_THROW(tiny_cfg(15, 2).tokens(), Error);
  auto e = PatchEmbed<double>::init(2, 4, rng);
  auto x = constant(uniform_tensor<double>({1, 9, 32, 32}, -1, 1, rng));
  EXPECT_EQ(e(x).shape(), (Shape{1, 256, 4}));
}

TEST(PatchEmbed, IdentityOnSinglePixel) {
  PatchEmbed<double> e;
  e.kernel = 1;
  Tensor<double> eye({9, 9});
  for (std::size_t i = 0; i < 9; ++i) eye[i * 9 + i] = 1.0;
  e.proj.weight = constant(eye);
  Tensor<double> px({1, 9, 1, 1});
  for (std::size_t i = 0; i < 9; ++i) px[i] = 0.5 * double(i) - 1.0;
  auto y = e(constant(px));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 9}));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y.value()[i], px[i]);
}

TEST(SpiralScan, ShapeZeroTailAndRoundTrip) {
  Rng rng(2);
  const std::size_t B = 2, g = 4, L = g * g, D = 6;
  auto v = uniform_tensor<double>({B, L, D}, -1, 1, rng);
  auto order = spiral_permutation(g, g);
  auto zero_cls = constant(Tensor<double>({D}));
  auto pos = sinusoidal_positions<double>(L + 1, D);
  auto zero_pos = constant(Tensor<double>({L + 1, D}));

  auto s0 = spiral_scan(constant(v), zero_cls, zero_pos, order, L);
  ASSERT_EQ(s0.shape(), (Shape{B, L + 1, D}));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t d = 0; d < D; ++d) EXPECT_EQ(s0.value().at({b, L, d}), 0.0);

  auto s = spiral_scan(constant(v), zero_cls, constant(pos), order, L);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t d = 0; d < D; ++d) {
        EXPECT_NEAR(s.value().at({b, i, d}) - pos.at({i, d}), v.at({b, order[i], d}), 1e-15);
      }
  EXPECT_THROW(spiral_scan(constant(v), zero_cls, constant(Tensor<double>({L, D})), order, L),
               Error);
}

TEST(SpiralScan, ClassPositionKnob) {
  Rng rng(3);
  const std::size_t L = 9, D = 2;
  auto v = constant(uniform_tensor<double>({1, L, D}, -1, 1, rng));
  auto cls = constant(Tensor<double>({D}, 7.0));
  auto zero_pos = constant(Tensor<double>({L + 1, D}));
  auto s = spiral_scan(v, cls, zero_pos, spiral_permutation(3, 3), 4);
  EXPECT_EQ(s.value().at({0, 4, 0}), 7.0);
  EXPECT_EQ(s.value().at({0, 5, 0}), v.value().at({0, 8, 0}));
}

TEST(Bpss, ZeroOutputProjectionIsResidual) {
  Rng rng(4);
  auto cfg = tiny_cfg(3, 1);
  auto block = BpssBlock<double>::init(cfg, rng);
  block.out_proj.weight = constant(Tensor<double>(block.out_proj.weight.shape()));
  block.out_proj.bias = constant(Tensor<double>(block.out_proj.bias.shape()));
  auto v = uniform_tensor<double>({2, 10, 4}, -1, 1, rng);
  auto y = block(constant(v));
  EXPECT_EQ(y.value(), v);
}

TEST(Bpss, ShapeAndErrors) {
  Rng rng(5);
  auto block = BpssBlock<double>::init(tiny_cfg(3, 1), rng);
  auto v = constant(uniform_tensor<double>({3, 7, 4}, -1, 1, rng));
  EXPECT_EQ(block(v).shape(), v.shape());
  EXPECT_THROW(block(constant(Tensor<double>({1, 7, 5}))), Error);
}

// Evaluated away from the tiny init step sizes, where A-gradients sit
// near 1e-9 and central differences are pure roundoff.
TEST(Bpss, Gradcheck) {
  Rng rng(6);
  auto block = BpssBlock<double>::init(tiny_cfg(3, 1), rng);
  for (auto* s : {&block.ssm_f, &block.ssm_b}) s->delta_bias.mutable_value().fill(0.0);
  auto x = parameter(uniform_tensor<double>({1, 10, 4}, -1, 1, rng));
  auto r = constant(uniform_tensor<double>({1, 10, 4}, -1, 1, rng));
  std::vector<Var<double>> vars{x};
  for (const auto& p : block.params()) vars.push_back(p.var);
  double err = gradcheck_params([&] { return sum(mul(block(x), r)); }, vars, 1e-4);
  EXPECT_LT(err, 1e-4);
}

TEST(Encoder, EmptyStackAndDeterminism) {
  Rng rng(7);
  auto cfg = tiny_cfg(4, 1);
  cfg.depth = 0;
  auto enc = Encoder<double>::init(cfg, rng);
  auto x = constant(uniform_tensor<double>({2, 9, 4, 4}, -1, 1, rng));
  EXPECT_EQ(enc(x).value(), enc.tokens(x).value());
  cfg.depth = 2;
  Rng r2(8);
  auto enc2 = Encoder<double>::init(cfg, r2);
  EXPECT_EQ(enc2(x).value(), enc2(x).value());
  EXPECT_EQ(enc2(x).shape(), (Shape{2, 17, 4}));
  EXPECT_THROW(enc2(constant(Tensor<double>({1, 9, 5, 5}))), Error);
}

TEST(Encoder, FullScaleLengths) {
  Rng rng(9);
  auto l = tiny_cfg(16, 1);
  auto g = tiny_cfg(32, 2);
  auto el = Encoder<double>::init(l, rng);
  auto eg = Encoder<double>::init(g, rng);
  EXPECT_EQ(el(constant(Tensor<double>({1, 9, 16, 16}))).dim(1), 257u);
  EXPECT_EQ(eg(constant(Tensor<double>({1, 9, 32, 32}))).dim(1), 257u);
}

TEST(Encoder, ClassFeatureReadsTail) {
  Rng rng(10);
  auto cfg = tiny_cfg(3, 1);
  auto enc = Encoder<double>::init(cfg, rng);
  auto seq = uniform_tensor<double>({2, 10, 4}, -1, 1, rng);
  auto c = enc.class_feature(constant(seq));
  ASSERT_EQ(c.shape(), (Shape{2, 4}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(c.value().at({b, d}), seq.at({b, 9, d}));
}

TEST(Encoder, SensitiveToEveryPixelProbe) {
  Rng rng(11);
  auto cfg = tiny_cfg(4, 1);
  auto enc = Encoder<double>::init(cfg, rng);
  std::uniform_int_distribution<std::size_t> pick(0, 9 * 16 - 1);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = uniform_tensor<double>({1, 9, 4, 4}, -1, 1, rng);
    auto base = enc.class_feature(enc(constant(x))).value();
    x[pick(rng)] += 0.5;
    auto moved = enc.class_feature(enc(constant(x))).value();
    EXPECT_FALSE(base == moved);
  }
}
