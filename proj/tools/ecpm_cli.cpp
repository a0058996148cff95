// ecpm: synth / pretrain / finetune / predict / eval over PTC, PLB and ECPW
// files. Every training or prediction run leaves a manifest.cfg in its
// output directory that can be fed back through --config.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ecpm/config.hpp"
#include "ecpm/io.hpp"
#include "ecpm/metrics.hpp"
#include "ecpm/pipeline.hpp"
#include "ecpm/synth.hpp"

namespace fs = std::filesystem;
using namespace ecpm;

namespace {

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (key = value lines)");
    cmd->add_option("--set", overrides, "override one key, key=value (repeatable)");
  }

  RunConfig resolve(RunConfig base = {}) const {
    if (!config_path.empty()) base.apply_text(io::read_file(config_path), config_path);
    for (const auto& kv : overrides) base.apply_override(kv);
    base.check();
    return base;
  }
};

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

void write_manifest(const fs::path& dir, const std::string& cmd, const RunConfig& cfg,
                    const std::string& extra = "") {
  std::string text = "# ecpm manifest\n# command: " + cmd + "\n" + extra + cfg.to_text();
  io::write_file(dir / "manifest.cfg", text);
}

void echo_config(const RunConfig& cfg) {
  std::cerr << "config:\n";
  std::istringstream in(cfg.to_text());
  for (std::string line; std::getline(in, line);) std::cerr << "  " << line << '\n';
}

// Rasters are stored raw; the network always sees the normalized form.
Tensor<double> load_raster(const std::string& path) {
  return pipeline::normalize(io::decode_ptc(io::read_file(path)));
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t a = 0, b = 0;
    const std::size_t h = std::stoul(s.substr(0, x), &a), w = std::stoul(s.substr(x + 1), &b);
    if (a != x || b != s.size() - x - 1 || h == 0 || w == 0) throw std::invalid_argument(s);
    return {h, w};
  } catch (const std::exception&) {
    throw CLI::ValidationError("--size", "expected HxW, got '" + s + "'");
  }
}

template <typename T>
void do_pretrain(const std::string& image, const fs::path& out, const RunConfig& cfg,
                 const std::string& cmd) {
  const auto raster = load_raster(image);
  fs::create_directories(out);
  std::ofstream log(out / "pretrain_loss.csv");
  log << "step,loss,lr,lambda\n";
  auto res = pipeline::run_pretrain<T>(raster, cfg, &log);
  io::write_file(out / "pretrain.ecpw", pipeline::encode_pretrain(res, cfg));
  write_manifest(out, cmd, cfg);
  std::cerr << "pretrain: " << res.history.size() << " steps, final loss "
            << (res.history.empty() ? 0.0 : res.history.back().loss) << '\n';
}

template <typename T>
void do_finetune(const std::string& image, const std::string& labels, const std::string& init,
                 const fs::path& out, const RunConfig& cfg, const std::string& cmd) {
  const auto raster = load_raster(image);
  const auto truth = io::decode_plb(io::read_file(labels));
  std::optional<train::PretrainResult<T>> pre;
  if (!init.empty()) pre = pipeline::decode_pretrain<T>(io::decode_ecpw(io::read_file(init)), cfg);
  fs::create_directories(out);
  std::ofstream log(out / "finetune_loss.csv");
  log << "step,loss,lr,lambda\n";
  auto model = pipeline::run_finetune<T>(raster, truth, cfg, pre ? &*pre : nullptr, &log);
  io::write_file(out / "classifier.ecpw", pipeline::encode_classifier(model, cfg));
  write_manifest(out, cmd, cfg, init.empty() ? "" : "# init: " + init + "\n");
  std::cerr << "finetune: wrote " << (out / "classifier.ecpw").string() << '\n';
}

template <typename T>
void do_predict(const std::string& image, const std::vector<io::NamedTensor>& ckpt,
                const fs::path& out, const RunConfig& cfg, const std::string& cmd) {
  const auto raster = load_raster(image);
  const auto model = pipeline::decode_classifier<T>(ckpt, cfg);
  const auto map = predict_map(model, raster, cfg.predict_batch);
  io::write_file(out / "prediction.plb", io::encode_plb(map));
  io::write_file(out / "prediction.ppm", render_map(map, default_palette(map.num_classes)));
  write_manifest(out, cmd, cfg);
  std::cerr << "predict: " << map.height << "x" << map.width << " map written to " << out.string()
            << '\n';
}

std::string metrics_record(const Metrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "oa=%.6f,aa=%.6f,kappa=%.6f", m.oa, m.aa, m.kappa);
  return buf;
}

std::string metrics_table(const Metrics& m) {
  std::ostringstream t;
  t << std::fixed << std::setprecision(2);
  t << "class   recall(%)\n";
  for (std::size_t c = 0; c < m.recall.size(); ++c) {
    t << std::setw(5) << c + 1 << "   ";
    if (std::isnan(m.recall[c])) {
      t << std::setw(9) << "-" << '\n';
    } else {
      t << std::setw(9) << 100 * m.recall[c] << '\n';
    }
  }
  t << "OA(%)   " << std::setw(9) << 100 * m.oa << '\n';
  t << "AA(%)   " << std::setw(9) << 100 * m.aa << '\n';
  t << "Kappa   " << std::setw(9) << 100 * m.kappa << "  (x100)\n";
  return t.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECP-Mamba: spiral-scan Mamba PolSAR classifier with self-distillation pre-training"};
  app.require_subcommand(1);
  const std::string cmd = command_line(argc, argv);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic PTC image and PLB label map");
  std::size_t classes = 4, looks = 4, block = 0;
  std::string size = "64x64", synth_out = ".";
  std::uint64_t synth_seed = 0;
  double noise = 1.0, salt = 0.005;
  synth->add_option("--classes", classes, "number of classes")->capture_default_str();
  synth->add_option("--size", size, "image size HxW")->capture_default_str();
  synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
  synth->add_option("--looks", looks, "looks per pixel")->capture_default_str();
  synth->add_option("--noise", noise, "speckle scale in [0, 1]")->capture_default_str();
  synth->add_option("--salt", salt, "fraction of single-pixel intrusions")->capture_default_str();
  synth->add_option("--block", block, "square tile side (0 = one rectangle per class)");
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "self-distillation pre-training on an unlabeled image");
  std::string pre_image, pre_out = "pretrain";
  ConfigFlags pre_cfg;
  pre->add_option("--image", pre_image, "PTC raster")->required();
  pre->add_option("--out", pre_out, "output directory")->capture_default_str();
  pre_cfg.add_to(pre);

  // finetune
  auto* ft = app.add_subcommand("finetune", "PolyLoss fine-tuning on sampled labels");
  std::string ft_image, ft_labels, ft_init, ft_out = "finetune";
  ConfigFlags ft_cfg;
  ft->add_option("--image", ft_image, "PTC raster")->required();
  ft->add_option("--labels", ft_labels, "PLB ground truth to sample from")->required();
  ft->add_option("--init", ft_init, "pre-training checkpoint (omit to train from scratch)");
  ft->add_option("--out", ft_out, "output directory")->capture_default_str();
  ft_cfg.add_to(ft);

  // predict
  auto* pr = app.add_subcommand("predict", "classify every pixel of an image");
  std::string pr_image, pr_model, pr_out = "predict";
  ConfigFlags pr_cfg;
  pr->add_option("--image", pr_image, "PTC raster")->required();
  pr->add_option("--model", pr_model, "classifier checkpoint")->required();
  pr->add_option("--out", pr_out, "output directory")->capture_default_str();
  pr_cfg.add_to(pr);

  // eval
  auto* ev = app.add_subcommand("eval", "OA / AA / Kappa of a prediction against ground truth");
  std::string ev_pred, ev_truth, ev_out;
  ev->add_option("--pred", ev_pred, "predicted PLB")->required();
  ev->add_option("--truth", ev_truth, "ground-truth PLB")->required();
  ev->add_option("--out", ev_out, "also write the metrics record to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      const auto [H, W] = parse_size(size);
      polsar::SynthSpec spec;
      spec.num_classes = classes;
      spec.height = H;
      spec.width = W;
      spec.looks = looks;
      spec.noise = noise;
      spec.salt = salt;
      spec.block = block;
      spec.seed = synth_seed;
      const auto s = polsar::synth_polsar(spec);
      const fs::path out = synth_out;
      io::write_file(out / "image.ptc", io::encode_ptc(polsar::restructure(s.image)));
      io::write_file(out / "labels.plb", io::encode_plb(s.labels));
      std::cerr << "synth: wrote " << (out / "image.ptc").string() << " and "
                << (out / "labels.plb").string() << '\n';
    } else if (pre->parsed()) {
      const auto cfg = pre_cfg.resolve();
      echo_config(cfg);
      if (cfg.precision == "f64") {
        do_pretrain<double>(pre_image, pre_out, cfg, cmd);
      } else {
        do_pretrain<float>(pre_image, pre_out, cfg, cmd);
      }
    } else if (ft->parsed()) {
      // architecture keys default to those of the pre-trained checkpoint
      RunConfig base;
      if (!ft_init.empty()) base = pipeline::checkpoint_config(io::decode_ecpw(io::read_file(ft_init)));
      const auto cfg = ft_cfg.resolve(base);
      echo_config(cfg);
      if (cfg.precision == "f64") {
        do_finetune<double>(ft_image, ft_labels, ft_init, ft_out, cfg, cmd);
      } else {
        do_finetune<float>(ft_image, ft_labels, ft_init, ft_out, cfg, cmd);
      }
    } else if (pr->parsed()) {
      const auto ckpt = io::decode_ecpw(io::read_file(pr_model));
      const auto cfg = pr_cfg.resolve(pipeline::checkpoint_config(ckpt));
      echo_config(cfg);
      if (cfg.precision == "f64") {
        do_predict<double>(pr_image, ckpt, pr_out, cfg, cmd);
      } else {
        do_predict<float>(pr_image, ckpt, pr_out, cfg, cmd);
      }
    } else if (ev->parsed()) {
      const auto pred = io::decode_plb(io::read_file(ev_pred));
      const auto truth = io::decode_plb(io::read_file(ev_truth));
      const auto m = metrics(confusion(pred, truth));
      std::cout << metrics_record(m) << '\n' << metrics_table(m);
      if (!ev_out.empty()) io::write_file(ev_out, metrics_record(m) + "\n");
    }
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n' << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
