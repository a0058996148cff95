#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ecpm/fusion.hpp"
#include "ecpm/log.hpp"
#include "ecpm/train.hpp"

namespace ecpm {

// Every knob of a run. Text form: `key = value` lines, `#` comments.
struct RunConfig {
  std::string preset = "paper";
  std::uint64_t seed = 0;
  std::string precision = "f32";  // f32 | f64

  // model
  std::size_t patch_local = 16, patch_global = 32;
  std::size_t kernel_local = 1, kernel_global = 2;
  std::size_t d_model = 192, d_state = 16, expand = 2, conv_width = 4;
  std::size_t depth_local = 1, depth_global = 1, depth_cross = 1;
  std::string scan = "spiral";  // spiral | raster
  long class_pos = -1;          // -1 = tail

  // pre-training
  std::size_t pretrain_epochs = 100, pretrain_batch = 128;
  std::size_t pretrain_pool = 0;  // pixels drawn for pre-training; 0 = all
  double pretrain_lr = 5e-4, tau_s = 0.1, tau_t = 0.04, center_momentum = 0.9;
  double lambda_base = 0.996;

  // fine-tuning
  std::size_t finetune_epochs = 100, finetune_batch = 128;
  double finetune_lr = 1e-3, poly_eps = 1.0, sampling_rate = 0.002;
  double weight_decay = 0.01;

  std::size_t predict_batch = 256;

  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  // Resolved config, one `key = value` per line in a fixed order.
  std::string to_text() const {
    std::string out;
    for (const auto& k : keys()) out += k + " = " + get(k) + "\n";
    return out;
  }

  void check() const {
    if (precision != "f32" && precision != "f64") throw Error("config: precision must be f32 or f64");
    if (scan != "spiral" && scan != "raster") throw Error("config: scan must be spiral or raster");
    model(2).validate();
  }

  EncoderConfig encoder(bool global) const {
    EncoderConfig e;
    e.patch = global ? patch_global : patch_local;
    e.kernel = global ? kernel_global : kernel_local;
    e.d_model = d_model;
    e.d_state = d_state;
    e.depth = global ? depth_global : depth_local;
    e.expand = expand;
    e.conv_width = conv_width;
    e.scan = scan == "raster" ? ScanOrder::raster : ScanOrder::spiral;
    e.class_pos = class_pos;
    return e;
  }

  ModelConfig model(std::size_t classes) const {
    ModelConfig m;
    m.local = encoder(false);
    m.global = encoder(true);
    m.cross_depth = depth_cross;
    m.classes = classes;
    return m;
  }

  train::PretrainConfig pretrain() const {
    train::PretrainConfig p;
    p.epochs = pretrain_epochs;
    p.batch = pretrain_batch;
    p.lr = pretrain_lr;
    p.tau_s = tau_s;
    p.tau_t = tau_t;
    p.center_momentum = center_momentum;
    p.lambda_base = lambda_base;
    p.adam.weight_decay = weight_decay;
    p.seed = seed;
    return p;
  }

  train::FinetuneConfig finetune() const {
    train::FinetuneConfig f;
    f.epochs = finetune_epochs;
    f.batch = finetune_batch;
    f.lr = finetune_lr;
    f.poly_eps = poly_eps;
    f.adam.weight_decay = weight_decay;
    f.seed = seed;
    return f;
  }

  static RunConfig paper() { return RunConfig{}; }

  // Desk-scale model used by tests and the ablation harness.
  static RunConfig toy() {
    RunConfig c;
    c.preset = "toy";
    c.patch_local = 8;
    c.patch_global = 16;
    c.d_model = 32;
    c.d_state = 8;
    c.pretrain_epochs = 30;
    c.pretrain_batch = 32;
    c.pretrain_pool = 512;
    c.finetune_epochs = 50;
    c.finetune_batch = 32;
    c.finetune_lr = 3e-3;  // few labelled pixels, one step per epoch
    c.sampling_rate = 0.001;
    return c;
  }

  static RunConfig from_preset(std::string_view name) {
    if (name == "paper") return paper();
    if (name == "toy") return toy();
    throw Error("config: unknown preset '" + std::string(name) + "'");
  }

  // Applies a config text on top of this one. A `preset` line resets every
  // key to that preset first, so it should come first.
  void apply_text(std::string_view text, std::string_view source = "config") {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw Error(std::string(source) + ":" + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      try {
        set(key, value);
      } catch (const Error& e) {
        throw Error(std::string(source) + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  // `key=value` override from the command line.
  void apply_override(std::string_view kv) {
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) throw Error("--set expects key=value, got '" + std::string(kv) + "'");
    apply_text(std::string(kv.substr(0, eq)) + " = " + std::string(kv.substr(eq + 1)), "--set");
  }
};

namespace detail {

template <typename V>
V parse_number(std::string_view key, std::string_view s) {
  V v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw Error("config: bad value '" + std::string(s) + "' for " + std::string(key));
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename V>
Field field(std::string key, V RunConfig::*member) {
  Field f;
  f.key = key;
  f.set = [member, key](RunConfig& c, std::string_view s) {
    if constexpr (std::is_same_v<V, std::string>) {
      c.*member = std::string(s);
    } else {
      c.*member = parse_number<V>(key, s);
    }
  };
  f.get = [member](const RunConfig& c) {
    if constexpr (std::is_same_v<V, std::string>) {
      return c.*member;
    } else if constexpr (std::is_floating_point_v<V>) {
      return format_double(c.*member);
    } else {
      return std::to_string(c.*member);
    }
  };
  return f;
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> all{
      field("preset", &RunConfig::preset),
      field("seed", &RunConfig::seed),
      field("precision", &RunConfig::precision),
      field("patch_local", &RunConfig::patch_local),
      field("patch_global", &RunConfig::patch_global),
      field("kernel_local", &RunConfig::kernel_local),
      field("kernel_global", &RunConfig::kernel_global),
      field("d_model", &RunConfig::d_model),
      field("d_state", &RunConfig::d_state),
      field("expand", &RunConfig::expand),
      field("conv_width", &RunConfig::conv_width),
      field("depth_local", &RunConfig::depth_local),
      field("depth_global", &RunConfig::depth_global),
      field("depth_cross", &RunConfig::depth_cross),
      field("scan", &RunConfig::scan),
      field("class_pos", &RunConfig::class_pos),
      field("pretrain_epochs", &RunConfig::pretrain_epochs),
      field("pretrain_batch", &RunConfig::pretrain_batch),
      field("pretrain_pool", &RunConfig::pretrain_pool),
      field("pretrain_lr", &RunConfig::pretrain_lr),
      field("tau_s", &RunConfig::tau_s),
      field("tau_t", &RunConfig::tau_t),
      field("center_momentum", &RunConfig::center_momentum),
      field("lambda_base", &RunConfig::lambda_base),
      field("finetune_epochs", &RunConfig::finetune_epochs),
      field("finetune_batch", &RunConfig::finetune_batch),
      field("finetune_lr", &RunConfig::finetune_lr),
      field("poly_eps", &RunConfig::poly_eps),
      field("sampling_rate", &RunConfig::sampling_rate),
      field("weight_decay", &RunConfig::weight_decay),
      field("predict_batch", &RunConfig::predict_batch),
  };
  return all;
}

inline const Field& find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw Error("config: unknown key '" + std::string(key) + "'");
}

}  // namespace detail

inline void RunConfig::set(std::string_view key, std::string_view value) {
  if (key == "preset") {
    *this = from_preset(value);
    return;
  }
  detail::find_field(key).set(*this, value);
}

inline std::string RunConfig::get(std::string_view key) const {
  return detail::find_field(key).get(*this);
}

inline const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> ks = [] {
    std::vector<std::string> out;
    for (const auto& f : detail::fields()) out.push_back(f.key);
    return out;
  }();
  return ks;
}

}  // namespace ecpm
