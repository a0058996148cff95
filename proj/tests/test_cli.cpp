#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path& work() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "ecpm_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int status;
  std::string out;
};

Run run(const std::string& args) {
  const auto out = work() / "stdout.txt";
  const std::string cmd = std::string(ECPM_CLI_PATH) + " " + args + " >" + out.string() + " 2>" +
                          (work() / "stderr.txt").string();
  const int raw = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kSmall =
    " --set preset=toy --set d_model=8 --set d_state=2 --set patch_local=4 --set patch_global=8"
    " --set pretrain_epochs=1 --set pretrain_pool=16 --set pretrain_batch=8 --set finetune_epochs=2"
    " --set sampling_rate=0.05";

}  // namespace

TEST(Cli, ToyPipelineEndToEnd) {
  const auto d = work() / "e2e";
  ASSERT_EQ(run("synth --classes 3 --size 20x24 --seed 1 --out " + d.string()).status, 0);
  ASSERT_TRUE(fs::exists(d / "image.ptc"));
  ASSERT_TRUE(fs::exists(d / "labels.plb"));
  const std::string img = " --image " + (d / "image.ptc").string();
  ASSERT_EQ(run("pretrain" + img + " --out " + (d / "pre").string() + kSmall).status, 0);
  ASSERT_TRUE(fs::exists(d / "pre" / "pretrain.ecpw"));
  ASSERT_TRUE(fs::exists(d / "pre" / "pretrain_loss.csv"));
  ASSERT_EQ(run("finetune" + img + " --labels " + (d / "labels.plb").string() + " --init " +
                (d / "pre" / "pretrain.ecpw").string() + " --set finetune_epochs=2 --out " +
                (d / "ft").string())
                .status,
            0);
  ASSERT_TRUE(fs::exists(d / "ft" / "classifier.ecpw"));
  ASSERT_EQ(run("predict" + img + " --model " + (d / "ft" / "classifier.ecpw").string() + " --out " +
                (d / "pred").string())
                .status,
            0);
  ASSERT_TRUE(fs::exists(d / "pred" / "prediction.ppm"));
  const auto ev = run("eval --pred " + (d / "pred" / "prediction.plb").string() + " --truth " +
                      (d / "labels.plb").string());
  ASSERT_EQ(ev.status, 0);
  EXPECT_EQ(ev.out.rfind("oa=", 0), 0u) << ev.out;

  // every manifest is itself a usable config
  for (const auto* sub : {"pre", "ft", "pred"}) {
    const auto manifest = d / sub / "manifest.cfg";
    ASSERT_TRUE(fs::exists(manifest)) << sub;
    EXPECT_NE(slurp(manifest).find("d_model = 8"), std::string::npos) << sub;
  }
  const auto again = d / "again";
  ASSERT_EQ(run("pretrain" + img + " --config " + (d / "pre" / "manifest.cfg").string() + " --out " +
                again.string())
                .status,
            0);
  EXPECT_EQ(slurp(again / "pretrain.ecpw"), slurp(d / "pre" / "pretrain.ecpw"));
}

TEST(Cli, SynthIsDeterministic) {
  const auto a = work() / "sa", b = work() / "sb";
  ASSERT_EQ(run("synth --size 16x16 --seed 5 --out " + a.string()).status, 0);
  ASSERT_EQ(run("synth --size 16x16 --seed 5 --out " + b.string()).status, 0);
  EXPECT_EQ(slurp(a / "image.ptc"), slurp(b / "image.ptc"));
  EXPECT_EQ(slurp(a / "labels.plb"), slurp(b / "labels.plb"));
}

TEST(Cli, EvalOfIdenticalMapsIsPerfect) {
  const auto d = work() / "ev";
  ASSERT_EQ(run("synth --size 16x16 --out " + d.string()).status, 0);
  const auto lab = (d / "labels.plb").string();
  const auto r = run("eval --pred " + lab + " --truth " + lab);
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(r.out.rfind("oa=1.000000,aa=1.000000,kappa=1.000000\n", 0), 0u) << r.out;
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("").status, 2);
  EXPECT_EQ(run("frobnicate").status, 2);
  EXPECT_EQ(run("synth --bogus 3").status, 2);
  EXPECT_EQ(run("synth --size 12by12 --out " + (work() / "x").string()).status, 2);
  EXPECT_EQ(run("pretrain").status, 2);
  EXPECT_EQ(run("eval --pred /nonexistent/a.plb --truth /nonexistent/b.plb").status, 1);
  EXPECT_EQ(run("pretrain --image /nonexistent/a.ptc").status, 1);
  const auto d = work() / "cfg";
  ASSERT_EQ(run("synth --size 8x8 --out " + d.string()).status, 0);
  EXPECT_EQ(run("pretrain --image " + (d / "image.ptc").string() + " --set nope=1").status, 1);
  EXPECT_EQ(run("--help").status, 0);
}
