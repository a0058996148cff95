#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "ecpm/fusion.hpp"
#include "ecpm/log.hpp"

namespace ecpm::train {

// ---- losses ----------------------------------------------------------------

template <typename T>
Tensor<T> scale_tensor(Tensor<T> t, T s) {
  for (auto& v : t.data()) v *= s;
  return t;
}

// softmax((p - center) / tau) over the last axis.
template <typename T>
Var<T> sharpen(const Var<T>& logits, double tau, const Tensor<T>* center = nullptr) {
  if (!(tau > 0.0)) throw Error("sharpen: temperature must be positive, got " + std::to_string(tau));
  Var<T> z = logits;
  if (center) z = add_broadcast(z, constant(scale_tensor(*center, T(-1))));
  return softmax(scale(z, static_cast<T>(1.0 / tau)));
}

// C' = m C + (1 - m) mean_b(batch[b, :])
template <typename T>
Tensor<T> update_center(const Tensor<T>& center, const Tensor<T>& batch, double m) {
  if (batch.rank() != 2 || batch.dim(0) == 0 || batch.dim(1) != center.size()) {
    throw Error("update_center: batch " + shape_str(batch.shape()) + " does not match center " +
                shape_str(center.shape()));
  }
  const std::size_t B = batch.dim(0), D = batch.dim(1);
  Tensor<T> out(center.shape());
  for (std::size_t d = 0; d < D; ++d) {
    double mean = 0.0;
    for (std::size_t b = 0; b < B; ++b) mean += batch[b * D + d];
    mean /= static_cast<double>(B);
    out[d] = static_cast<T>(m * center[d] + (1.0 - m) * mean);
  }
  return out;
}

inline constexpr double kLogFloor = 1e-12;

// -(1/D) sum_i P_i log p_i per row, averaged over rows. The teacher side
// is detached.
template <typename T>
Var<T> contrastive_loss(const Var<T>& student, const Var<T>& teacher) {
  if (student.shape() != teacher.shape() || student.value().rank() < 1) {
    throw Error("contrastive_loss: shapes " + shape_str(student.shape()) + " and " +
                shape_str(teacher.shape()) + " differ");
  }
  const auto& sv = student.value();
  const auto& tv = teacher.value();
  for (std::size_t i = 0; i < sv.size(); ++i) {
    if (sv[i] < kLogFloor && tv[i] > 0) {
      warn("contrastive_loss: student probability below 1e-12 clamped");
      break;
    }
  }
  const std::size_t D = sv.shape().back();
  const std::size_t rows = sv.size() / D;
  auto ce = mul(detach(teacher), log(clamp_min(student, static_cast<T>(kLogFloor))));
  return scale(sum(ce), static_cast<T>(-1.0 / static_cast<double>(D * rows)));
}

// (1/Nc) [ -log y_t + eps (1 - y_t) ] per row at target t, averaged over rows.
template <typename T>
Var<T> poly_loss(const Var<T>& probs, const std::vector<std::size_t>& targets, double eps) {
  if (probs.value().rank() != 2 || probs.dim(0) != targets.size()) {
    throw Error("poly_loss: " + std::to_string(targets.size()) + " targets for predictions " +
                shape_str(probs.shape()));
  }
  const std::size_t B = probs.dim(0), C = probs.dim(1);
  Tensor<T> onehot({B, C});
  for (std::size_t b = 0; b < B; ++b) {
    if (targets[b] >= C) throw Error("poly_loss: target out of range");
    onehot[b * C + targets[b]] = T(1);
  }
  auto y = constant(std::move(onehot));
  auto ce = neg(mul(y, log(clamp_min(probs, static_cast<T>(kLogFloor)))));
  auto poly = scale(mul(y, add_scalar(neg(probs), T(1))), static_cast<T>(eps));
  return scale(sum(add(ce, poly)), static_cast<T>(1.0 / static_cast<double>(B * C)));
}

// ---- schedules and optimizer -------------------------------------------------

inline double cosine_schedule(std::size_t t, std::size_t total, double start, double end) {
  if (total == 0) return end;
  const double frac = static_cast<double>(std::min(t, total)) / static_cast<double>(total);
  return end + (start - end) * (1.0 + std::cos(std::numbers::pi * frac)) / 2.0;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  std::size_t step = 0;
};

// Decoupled-decay Adam with bias correction over the gradients currently
// held by `params`. Returns false (and leaves everything untouched) when
// any gradient is non-finite.
template <typename T>
bool adamw_step(const std::vector<Var<T>>& params, AdamState<T>& state, double lr,
                const AdamConfig& cfg = {}) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.shape());
      state.v.emplace_back(p.shape());
    }
  }
  if (state.m.size() != params.size()) throw Error("adamw_step: optimizer state size mismatch");
  for (const auto& p : params) {
    for (T g : p.grad().data()) {
      if (!std::isfinite(static_cast<double>(g))) {
        warn("adamw_step: non-finite gradient; step skipped");
        return false;
      }
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var<T> p = params[i];
    auto& w = p.mutable_value();
    const auto& g = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.shape() != w.shape()) throw Error("adamw_step: optimizer state shape mismatch");
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g.empty() ? 0.0 : static_cast<double>(g[k]);
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double step = lr * (mk / bc1) / (std::sqrt(vk / bc2) + cfg.eps);
      w[k] = static_cast<T>(decay * static_cast<double>(w[k]) - step);
    }
  }
  return true;
}

template <typename T>
std::vector<Var<T>> vars_of(const nn::ParamList<T>& ps) {
  std::vector<Var<T>> out;
  for (const auto& p : ps) out.push_back(p.var);
  return out;
}

// ---- EMA -----------------------------------------------------------------------

// theta_t <- lambda theta_t + (1 - lambda) theta_s, element-wise.
template <typename T>
void ema_update(Tensor<T>& teacher, const Tensor<T>& student, double lambda) {
  if (teacher.shape() != student.shape()) {
    throw Error("ema_update: teacher " + shape_str(teacher.shape()) + " vs student " +
                shape_str(student.shape()));
  }
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    teacher[i] = static_cast<T>(lambda * static_cast<double>(teacher[i]) +
                                (1.0 - lambda) * static_cast<double>(student[i]));
  }
}

// Maps a student patch-embedding weight with kernel ks onto a teacher
// kernel kt: each teacher tap copies the student tap it covers, scaled by
// (ks/kt)^2 so a constant patch projects identically.
template <typename T>
Tensor<T> lift_embedding(const Tensor<T>& w, std::size_t ks, std::size_t kt) {
  const std::size_t C = polsar::kChannels;
  if (w.rank() != 2 || w.dim(0) != C * ks * ks) {
    throw Error("lift_embedding: weight " + shape_str(w.shape()) + " is not a kernel-" +
                std::to_string(ks) + " projection");
  }
  const std::size_t D = w.dim(1);
  const double s = static_cast<double>(ks * ks) / static_cast<double>(kt * kt);
  Tensor<T> out({C * kt * kt, D});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < kt; ++y)
      for (std::size_t x = 0; x < kt; ++x) {
        const std::size_t sy = y * ks / kt, sx = x * ks / kt;
        const std::size_t src = (c * ks + sy) * ks + sx, dst = (c * kt + y) * kt + x;
        for (std::size_t d = 0; d < D; ++d) out[dst * D + d] = static_cast<T>(s * w[src * D + d]);
      }
  return out;
}

// Student parameters expressed in the teacher's shapes.
template <typename T>
std::vector<Tensor<T>> lift_student(const Encoder<T>& student, const Encoder<T>& teacher) {
  const auto sp = student.params();
  const auto tp = teacher.params();
  if (sp.size() != tp.size()) throw Error("ema_update: student and teacher topologies differ");
  std::vector<Tensor<T>> out;
  for (std::size_t i = 0; i < sp.size(); ++i) {
    if (sp[i].name != tp[i].name) throw Error("ema_update: parameter order differs");
    const auto& v = sp[i].var.value();
    if (sp[i].name == "embed.proj.weight" && v.shape() != tp[i].var.shape()) {
      out.push_back(lift_embedding(v, student.cfg.kernel, teacher.cfg.kernel));
    } else {
      out.push_back(v);
    }
  }
  return out;
}

template <typename T>
void ema_update(const Encoder<T>& teacher, const Encoder<T>& student, double lambda) {
  const auto lifted = lift_student(student, teacher);
  const auto tp = teacher.params();
  for (std::size_t i = 0; i < tp.size(); ++i) {
    Var<T> t = tp[i].var;
    ema_update(t.mutable_value(), lifted[i], lambda);
  }
}

// Teacher initialized from the (lifted) student.
template <typename T>
Encoder<T> teacher_from(const Encoder<T>& student, const EncoderConfig& cfg) {
  Rng scratch(0);
  Encoder<T> t = Encoder<T>::init(cfg, scratch);
  ema_update(t, student, 0.0);
  return t;
}

// ---- batches -----------------------------------------------------------------

template <typename T>
struct Batch {
  Tensor<T> local, global;  // (B, 9, k, k), (B, 9, K, K)
  std::vector<std::size_t> targets;
};

// Stacks views[idx[i]], applying dihedral transform aug_l[i] / aug_g[i]
// (empty = none).
template <typename T>
Batch<T> make_batch(const std::vector<polsar::ViewPair<T>>& views,
                    const std::vector<std::size_t>& idx, const std::vector<std::size_t>& aug_l,
                    const std::vector<std::size_t>& aug_g) {
  if (idx.empty()) throw Error("make_batch: empty batch");
  const auto& l0 = views[idx[0]].local;
  const auto& g0 = views[idx[0]].global;
  Batch<T> b;
  Shape ls{idx.size()}, gs{idx.size()};
  ls.insert(ls.end(), l0.shape().begin(), l0.shape().end());
  gs.insert(gs.end(), g0.shape().begin(), g0.shape().end());
  b.local = Tensor<T>(ls);
  b.global = Tensor<T>(gs);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& v = views[idx[i]];
    auto l = aug_l.empty() ? v.local : polsar::augment(v.local, aug_l[i]);
    auto g = aug_g.empty() ? v.global : polsar::augment(v.global, aug_g[i]);
    std::copy(l.data().begin(), l.data().end(), b.local.data().begin() + i * l0.size());
    std::copy(g.data().begin(), g.data().end(), b.global.data().begin() + i * g0.size());
    if (v.label) b.targets.push_back(*v.label - 1u);
  }
  return b;
}

inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch,
                                                           Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch) {
    out.emplace_back(order.begin() + s, order.begin() + std::min(n, s + batch));
  }
  return out;
}

inline std::size_t steps_per_epoch(std::size_t n, std::size_t batch) {
  return (n + batch - 1) / batch;
}

inline std::vector<std::size_t> draw_augments(std::size_t n, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d8(0, 7);
  std::vector<std::size_t> out(n);
  for (auto& a : out) a = d8(rng);
  return out;
}

// ---- pre-training --------------------------------------------------------------

struct PretrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 128;
  double lr = 5e-4;
  double lr_end = 0.0;
  double tau_s = 0.1;
  double tau_t = 0.04;
  double center_momentum = 0.9;
  double lambda_base = 0.996;
  std::optional<double> lambda_fixed;  // overrides the schedule
  AdamConfig adam;
  std::uint64_t seed = 0;
};

struct StepRecord {
  std::size_t step;
  double loss, lr, lambda;
};

template <typename T>
struct PretrainResult {
  Encoder<T> student, teacher;
  Tensor<T> center;
  std::vector<StepRecord> history;
};

// Called after each step's AdamW update, before EMA, with the lambda that
// follows.
template <typename T>
using StepHook = std::function<void(const StepRecord&, const Encoder<T>& student)>;

inline void write_step(std::ostream* out, const StepRecord& r) {
  if (out) *out << r.step << ',' << r.loss << ',' << r.lr << ',' << r.lambda << '\n';
}

template <typename T>
PretrainResult<T> pretrain(Encoder<T> student, Encoder<T> teacher,
                           const std::vector<polsar::ViewPair<T>>& data, const PretrainConfig& cfg,
                           std::ostream* log = nullptr, const StepHook<T>& hook = {}) {
  if (data.empty()) throw Error("pretrain: empty dataset");
  if (cfg.batch == 0) throw Error("pretrain: batch size must be positive");
  Rng rng(mix_seed(cfg.seed, 0x5052));
  const std::size_t per_epoch = steps_per_epoch(data.size(), cfg.batch);
  const std::size_t total = cfg.epochs * per_epoch;
  const auto sparams = vars_of(student.params());
  AdamState<T> opt;
  PretrainResult<T> res{std::move(student), std::move(teacher), {}, {}};
  res.center = Tensor<T>({res.student.cfg.d_model});
  std::size_t step = 0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    for (const auto& idx : epoch_batches(data.size(), cfg.batch, rng)) {
      const auto aug_l = draw_augments(idx.size(), rng);
      const auto aug_g = draw_augments(idx.size(), rng);
      auto batch = make_batch(data, idx, aug_l, aug_g);

      Tensor<T> teacher_out;
      Var<T> teacher_dist;
      {
        NoGradGuard ng;
        auto P = res.teacher.class_feature(res.teacher(constant(batch.global)));
        teacher_out = P.value();
        teacher_dist = sharpen(P, cfg.tau_t, &res.center);
      }
      auto p = res.student.class_feature(res.student(constant(batch.local)));
      auto loss = contrastive_loss(sharpen(p, cfg.tau_s), teacher_dist);

      for (auto v : sparams) v.zero_grad();
      backward(loss);
      const double lr = cosine_schedule(step, total, cfg.lr, cfg.lr_end);
      adamw_step(sparams, opt, lr, cfg.adam);
      const double lambda =
          cfg.lambda_fixed ? *cfg.lambda_fixed : cosine_schedule(step, total, cfg.lambda_base, 1.0);
      StepRecord rec{step, static_cast<double>(loss.item()), lr, lambda};
      if (hook) hook(rec, res.student);
      ema_update(res.teacher, res.student, lambda);
      res.center = update_center(res.center, teacher_out, cfg.center_momentum);
      write_step(log, rec);
      res.history.push_back(rec);
      ++step;
    }
  }
  return res;
}

// ---- fine-tuning -----------------------------------------------------------------

struct FinetuneConfig {
  std::size_t epochs = 100;
  std::size_t batch = 128;
  double lr = 1e-3;
  double lr_end = 0.0;
  double poly_eps = 1.0;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

template <typename T>
Classifier<T> finetune(Classifier<T> model, const std::vector<polsar::ViewPair<T>>& labeled,
                       const FinetuneConfig& cfg, std::ostream* log = nullptr) {
  if (labeled.empty()) throw Error("finetune: no labeled samples");
  if (cfg.batch == 0) throw Error("finetune: batch size must be positive");
  std::set<std::size_t> present;
  for (const auto& v : labeled) {
    if (!v.label || *v.label == 0 || *v.label > model.cfg.classes) {
      throw Error("finetune: sample without a valid label");
    }
    present.insert(*v.label);
  }
  for (std::size_t c = 1; c <= model.cfg.classes; ++c) {
    if (!present.count(c)) {
      warn("finetune: class " + std::to_string(c) + " absent from labeled set; it cannot be learned");
    }
  }
  Rng rng(mix_seed(cfg.seed, 0x4654));
  const std::size_t total = cfg.epochs * steps_per_epoch(labeled.size(), cfg.batch);
  const auto params = vars_of(model.params());
  AdamState<T> opt;
  std::size_t step = 0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    for (const auto& idx : epoch_batches(labeled.size(), cfg.batch, rng)) {
      const auto aug_l = draw_augments(idx.size(), rng);
      const auto aug_g = draw_augments(idx.size(), rng);
      auto batch = make_batch(labeled, idx, aug_l, aug_g);
      auto pred = model(constant(batch.local), constant(batch.global));
      auto loss = poly_loss(pred.y_mean, batch.targets, cfg.poly_eps);
      for (auto v : params) v.zero_grad();
      backward(loss);
      const double lr = cosine_schedule(step, total, cfg.lr, cfg.lr_end);
      adamw_step(params, opt, lr, cfg.adam);
      write_step(log, StepRecord{step, static_cast<double>(loss.item()), lr, 0.0});
      ++step;
    }
  }
  return model;
}

}  // namespace ecpm::train
