#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "ecpm/fusion.hpp"
#include "ecpm/log.hpp"
#include "ecpm/polsar.hpp"

namespace ecpm {

// Worker count from ECP_THREADS (default 1).
inline std::size_t thread_count() {
  if (const char* env = std::getenv("ECP_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1) return static_cast<std::size_t>(n);
    warn(std::string("ECP_THREADS='") + env + "' is not a positive integer; using 1");
  }
  return 1;
}

// Argmax of the averaged prediction for every pixel, from un-augmented
// views. Pixels are processed in row-major batches split across threads.
template <typename T>
polsar::LabelMap predict_map(const Classifier<T>& model, const Tensor<double>& raster,
                             std::size_t batch = 256, std::size_t threads = 0) {
  if (raster.rank() != 3 || raster.dim(0) != polsar::kChannels) {
    throw Error("predict_map: expected (9, H, W) raster, got " + shape_str(raster.shape()));
  }
  const std::size_t H = raster.dim(1), W = raster.dim(2), n = H * W;
  const std::size_t k = model.cfg.local.patch, K = model.cfg.global.patch;
  const std::size_t C = model.cfg.classes;
  if (batch == 0) batch = 1;
  if (threads == 0) threads = thread_count();
  polsar::LabelMap out(H, W, C);
  const std::size_t chunks = (n + batch - 1) / batch;

  auto work = [&](std::size_t first_chunk, std::size_t stride) {
    NoGradGuard ng;
    for (std::size_t ci = first_chunk; ci < chunks; ci += stride) {
      const std::size_t lo = ci * batch, hi = std::min(n, lo + batch);
      Tensor<T> xl({hi - lo, polsar::kChannels, k, k});
      Tensor<T> xg({hi - lo, polsar::kChannels, K, K});
      for (std::size_t i = lo; i < hi; ++i) {
        auto v = polsar::extract_views<T>(raster, i / W, i % W, k, K);
        std::copy(v.local.data().begin(), v.local.data().end(),
                  xl.data().begin() + (i - lo) * v.local.size());
        std::copy(v.global.data().begin(), v.global.data().end(),
                  xg.data().begin() + (i - lo) * v.global.size());
      }
      const auto y = model(constant(std::move(xl)), constant(std::move(xg))).y_mean.value();
      for (std::size_t i = lo; i < hi; ++i) {
        const T* row = &y[(i - lo) * C];
        out.ids[i] = static_cast<std::uint16_t>(std::max_element(row, row + C) - row + 1);
      }
    }
  };
  threads = std::min(threads, chunks);
  if (threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  return out;
}

struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;  // row = truth, col = prediction

  explicit ConfusionMatrix(std::size_t n = 0) : classes(n), counts(n * n, 0) {}
  std::uint64_t& operator()(std::size_t t, std::size_t p) { return counts[t * classes + p]; }
  std::uint64_t operator()(std::size_t t, std::size_t p) const { return counts[t * classes + p]; }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

inline ConfusionMatrix confusion(const polsar::LabelMap& pred, const polsar::LabelMap& truth) {
  if (pred.height != truth.height || pred.width != truth.width) {
    throw Error("confusion: prediction " + std::to_string(pred.height) + "x" +
                std::to_string(pred.width) + " vs truth " + std::to_string(truth.height) + "x" +
                std::to_string(truth.width));
  }
  const std::size_t n = truth.num_classes;
  ConfusionMatrix cm(n);
  for (std::size_t i = 0; i < truth.ids.size(); ++i) {
    const std::size_t t = truth.ids[i];
    if (t == 0) continue;
    if (t > n) throw Error("confusion: truth id " + std::to_string(t) + " out of range");
    const std::size_t p = pred.ids[i];
    if (p == 0 || p > n) {
      throw Error("confusion: prediction id " + std::to_string(p) + " out of range 1.." +
                  std::to_string(n));
    }
    ++cm(t - 1, p - 1);
  }
  return cm;
}

struct Metrics {
  double oa = 0, aa = 0, kappa = 0;
  std::vector<double> recall;  // per class; NaN for classes without truth pixels
};

// Counts stay integer; each ratio is formed once from exact numerator and
// denominator, and AA averages in extended precision, so hand-checkable
// cases land on the nearest double.
inline Metrics metrics(const ConfusionMatrix& cm) {
  using Wide = unsigned __int128;
  const std::size_t n = cm.classes;
  const std::uint64_t total = cm.total();
  if (total == 0) throw Error("metrics: empty confusion matrix");
  Metrics m;
  m.recall.assign(n, std::numeric_limits<double>::quiet_NaN());
  std::uint64_t trace = 0;
  Wide chance = 0;  // sum over classes of row * col
  long double recall_sum = 0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < n; ++j) {
      row += cm(i, j);
      col += cm(j, i);
    }
    trace += cm(i, i);
    chance += static_cast<Wide>(row) * col;
    if (row > 0) {
      const long double r = static_cast<long double>(cm(i, i)) / static_cast<long double>(row);
      m.recall[i] = static_cast<double>(r);
      recall_sum += r;
      ++present;
    } else {
      warn("metrics: class " + std::to_string(i + 1) + " has no ground-truth pixels; excluded from AA");
    }
  }
  m.oa = static_cast<double>(trace) / static_cast<double>(total);
  m.aa = static_cast<double>(recall_sum / static_cast<long double>(present));
  // kappa = (N * trace - chance) / (N^2 - chance)
  const Wide n2 = static_cast<Wide>(total) * total;
  if (chance == n2) {
    warn("metrics: chance agreement is 1; kappa defined by convention");
    m.kappa = trace == total ? 1.0 : 0.0;
  } else {
    const long double num = static_cast<long double>(static_cast<Wide>(total) * trace) -
                            static_cast<long double>(chance);
    m.kappa = static_cast<double>(num / static_cast<long double>(n2 - chance));
  }
  return m;
}

// Scalar parameter counts per top-level component.
struct ParamCount {
  std::vector<std::pair<std::string, std::size_t>> components;
  std::size_t total = 0;
};

template <typename T>
ParamCount param_count(const nn::ParamList<T>& params) {
  ParamCount pc;
  for (const auto& p : params) {
    const std::string comp = p.name.substr(0, p.name.find('.'));
    auto it = std::find_if(pc.components.begin(), pc.components.end(),
                           [&](const auto& c) { return c.first == comp; });
    if (it == pc.components.end()) {
      pc.components.emplace_back(comp, 0);
      it = pc.components.end() - 1;
    }
    it->second += p.var.size();
    pc.total += p.var.size();
  }
  return pc;
}

using Rgb = std::array<std::uint8_t, 3>;

// Entry 0 (unlabeled) is black.
inline std::vector<Rgb> default_palette(std::size_t classes) {
  static const std::vector<Rgb> base{
      {0, 0, 0},       {230, 25, 75},  {60, 180, 75},  {255, 225, 25}, {0, 130, 200},
      {245, 130, 48},  {145, 30, 180}, {70, 240, 240}, {240, 50, 230}, {210, 245, 60},
      {250, 190, 212}, {0, 128, 128},  {220, 190, 255}, {170, 110, 40}, {255, 250, 200},
      {128, 0, 0},     {170, 255, 195}};
  std::vector<Rgb> p(base.begin(), base.begin() + std::min(base.size(), classes + 1));
  for (std::size_t c = p.size(); c <= classes; ++c) {
    p.push_back({static_cast<std::uint8_t>(37 * c % 256), static_cast<std::uint8_t>(91 * c % 256),
                 static_cast<std::uint8_t>(151 * c % 256)});
  }
  return p;
}

// Binary PPM (P6).
inline std::string render_map(const polsar::LabelMap& map, const std::vector<Rgb>& palette) {
  if (palette.size() < map.num_classes + 1) {
    throw Error("render_map: palette has " + std::to_string(palette.size()) + " entries for " +
                std::to_string(map.num_classes) + " classes");
  }
  std::string out = "P6\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
  out.reserve(out.size() + 3 * map.ids.size());
  for (auto id : map.ids) {
    if (id >= palette.size()) throw Error("render_map: label " + std::to_string(id) + " has no colour");
    for (auto ch : palette[id]) out.push_back(static_cast<char>(ch));
  }
  return out;
}

}  // namespace ecpm
