#pragma once

#include <algorithm>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "ecpm/config.hpp"
#include "ecpm/io.hpp"
#include "ecpm/metrics.hpp"
#include "ecpm/polsar.hpp"
#include "ecpm/train.hpp"

// Glue between rasters on disk, the training loops and checkpoints.
namespace ecpm::pipeline {

// Raw (9, H, W) raster -> complex z-scored raster.
inline Tensor<double> normalize(const Tensor<double>& raw) {
  return polsar::restructure(polsar::complex_zscore(polsar::from_raster(raw, false)));
}

template <typename T>
std::vector<polsar::ViewPair<T>> views_at(const Tensor<double>& raster,
                                          const std::vector<polsar::Pixel>& pixels,
                                          const RunConfig& cfg, bool keep_labels) {
  std::vector<polsar::ViewPair<T>> out;
  out.reserve(pixels.size());
  for (const auto& px : pixels) {
    auto v = polsar::extract_views<T>(raster, px.row, px.col, cfg.patch_local, cfg.patch_global);
    if (keep_labels) v.label = px.label;
    out.push_back(std::move(v));
  }
  return out;
}

// Unlabeled pre-training pool: `pretrain_pool` pixels drawn without
// replacement from the whole image (all pixels when 0).
inline std::vector<polsar::Pixel> pretrain_pixels(std::size_t height, std::size_t width,
                                                  const RunConfig& cfg) {
  std::vector<std::size_t> idx(height * width);
  std::iota(idx.begin(), idx.end(), 0);
  std::size_t take = idx.size();
  if (cfg.pretrain_pool && cfg.pretrain_pool < take) {
    Rng rng(mix_seed(cfg.seed, 0x504f4f4c));
    take = cfg.pretrain_pool;
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::vector<polsar::Pixel> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back({idx[i] / width, idx[i] % width, 0});
  return out;
}

template <typename T>
train::PretrainResult<T> run_pretrain(const Tensor<double>& raster, const RunConfig& cfg,
                                      std::ostream* log = nullptr,
                                      const train::StepHook<T>& hook = {}) {
  cfg.check();
  const auto pool = views_at<T>(raster, pretrain_pixels(raster.dim(1), raster.dim(2), cfg), cfg, false);
  Rng rng(mix_seed(cfg.seed, 0x494e4954));
  auto student = Encoder<T>::init(cfg.encoder(false), rng);
  auto teacher = train::teacher_from(student, cfg.encoder(true));
  return train::pretrain(std::move(student), std::move(teacher), pool, cfg.pretrain(), log, hook);
}

// Fresh fusion blocks and heads; encoders from pre-training when given.
template <typename T>
Classifier<T> make_classifier(const RunConfig& cfg, std::size_t classes,
                              const train::PretrainResult<T>* init = nullptr) {
  Rng rng(mix_seed(cfg.seed, 0x434c4153));
  auto model = Classifier<T>::init(cfg.model(classes), rng);
  if (init) {
    nn::assign_values(model.local.params(), init->student.params());
    nn::assign_values(model.global.params(), init->teacher.params());
  }
  return model;
}

template <typename T>
Classifier<T> run_finetune(const Tensor<double>& raster, const polsar::LabelMap& labels,
                           const RunConfig& cfg, const train::PretrainResult<T>* init,
                           std::ostream* log = nullptr) {
  cfg.check();
  const auto pixels = polsar::sample_labels(labels, cfg.sampling_rate, mix_seed(cfg.seed, 0x5352));
  const auto views = views_at<T>(raster, pixels, cfg, true);
  auto model = make_classifier<T>(cfg, labels.num_classes, init);
  return train::finetune(std::move(model), views, cfg.finetune(), log);
}

// ---- checkpoints ---------------------------------------------------------------

template <typename T>
std::string encode_pretrain(const train::PretrainResult<T>& r, const RunConfig& cfg) {
  std::vector<io::NamedTensor> ts{{"meta.config", io::text_tensor(cfg.to_text())}};
  for (auto& t : io::to_named(r.student.params(), "student.")) ts.push_back(std::move(t));
  for (auto& t : io::to_named(r.teacher.params(), "teacher.")) ts.push_back(std::move(t));
  ts.push_back({"center", r.center.template cast<float>()});
  return io::encode_ecpw(ts);
}

inline RunConfig checkpoint_config(const std::vector<io::NamedTensor>& ts) {
  const auto* meta = io::find_tensor(ts, "meta.config");
  if (!meta) throw Error("checkpoint: no meta.config tensor");
  RunConfig cfg;
  cfg.apply_text(io::tensor_text(meta->value), "meta.config");
  return cfg;
}

template <typename T>
train::PretrainResult<T> decode_pretrain(const std::vector<io::NamedTensor>& ts, const RunConfig& cfg) {
  Rng scratch(0);
  train::PretrainResult<T> r{Encoder<T>::init(cfg.encoder(false), scratch),
                             Encoder<T>::init(cfg.encoder(true), scratch), {}, {}};
  io::load_named(r.student.params(), ts, "student.");
  io::load_named(r.teacher.params(), ts, "teacher.");
  if (const auto* c = io::find_tensor(ts, "center")) r.center = c->value.template cast<T>();
  return r;
}

template <typename T>
std::string encode_classifier(const Classifier<T>& m, const RunConfig& cfg) {
  std::vector<io::NamedTensor> ts{
      {"meta.config", io::text_tensor(cfg.to_text())},
      {"meta.classes", Tensor<float>({1}, static_cast<float>(m.cfg.classes))}};
  for (auto& t : io::to_named(m.params())) ts.push_back(std::move(t));
  return io::encode_ecpw(ts);
}

template <typename T>
Classifier<T> decode_classifier(const std::vector<io::NamedTensor>& ts, const RunConfig& cfg) {
  const auto* n = io::find_tensor(ts, "meta.classes");
  if (!n || n->value.size() != 1) throw Error("checkpoint: no meta.classes tensor (not a classifier?)");
  Rng scratch(0);
  auto m = Classifier<T>::init(cfg.model(static_cast<std::size_t>(n->value[0])), scratch);
  io::load_named(m.params(), ts);
  return m;
}

}  // namespace ecpm::pipeline
