#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "vfd/cli/commands.hpp"
#include "vfd/cli/gradient_suite.hpp"
#include "vfd/cli/run_config.hpp"
#include "vfd/errors.hpp"

using namespace vfd;
using namespace vfd::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "vfd_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

// Small encoder flags shared by the training tests.
const std::vector<std::string> kTinyModel{"--dim", "16", "--embed-dim", "16", "--heads", "2",
                                          "--face-patch", "32", "--voice-patch-h", "64",
                                          "--voice-patch-w", "60", "--batch-size", "2"};

Result invoke_with(std::vector<std::string> args, const std::vector<std::string>& extra) {
  args.insert(args.end(), extra.begin(), extra.end());
  std::vector<const char*> argv{"vfd"};
  for (const auto& w : args) argv.push_back(w.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

Result invoke(std::initializer_list<std::string> args) { return invoke_with(args, {}); }

}  // namespace

TEST(RunConfig, DefaultsAndTypedAccess) {
  RunConfig c;
  EXPECT_EQ(c.count("identities"), 64u);
  EXPECT_EQ(c.real("noise"), 0.1);
  EXPECT_FALSE(c.flag("from-scratch"));
  EXPECT_TRUE(c.flag("feed-forward"));
  EXPECT_FALSE(c.has("steps"));
  EXPECT_THROW(c.require("manifest"), ConfigError);
  EXPECT_THROW(c.set("bogus", "1"), ConfigError);
  EXPECT_THROW(c.has("bogus"), ConfigError);
  c.set("noise", "abc");
  EXPECT_THROW(c.real("noise"), ConfigError);
  c.set("identities", "-3");
  EXPECT_THROW(c.count("identities"), ConfigError);
  c.set("literal", "maybe");
  EXPECT_THROW(c.flag("literal"), ConfigError);
}

TEST(RunConfig, FileParsingAndUnknownKeys) {
  const fs::path dir = scratch_dir("config_file");
  std::ofstream(dir / "good.cfg") << "# comment\n  noise = 0.25  # trailing\n\nseed=9\n";
  RunConfig c;
  c.load_file(dir / "good.cfg");
  EXPECT_EQ(c.real("noise"), 0.25);
  EXPECT_EQ(c.u64("seed"), 9u);

  std::ofstream(dir / "bad.cfg") << "noise=0.1\nlearning_rate=3\n";
  try {
    RunConfig d;
    d.load_file(dir / "bad.cfg");
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  std::ofstream(dir / "noeq.cfg") << "noise\n";
  RunConfig e;
  EXPECT_THROW(e.load_file(dir / "noeq.cfg"), ConfigError);
  EXPECT_THROW(e.load_file(dir / "missing.cfg"), InputError);
}

TEST(RunConfig, SeedEnvironmentPrecedence) {
  ::setenv("VFD_SEED", "41", 1);
  RunConfig c;
  c.apply_seed_environment();
  EXPECT_EQ(c.u64("seed"), 41u);
  c.set("seed", "5");
  EXPECT_EQ(c.u64("seed"), 5u);
  ::setenv("VFD_SEED", "x", 1);
  RunConfig d;
  EXPECT_THROW(d.apply_seed_environment(), ConfigError);
  ::unsetenv("VFD_SEED");
}

TEST(RunConfig, RenderEchoesEveryKey) {
  RunConfig c;
  c.set("noise", "0.3");
  const std::string text = c.render("synth");
  EXPECT_EQ(text.rfind("# vfd synth\n", 0), 0u);
  EXPECT_NE(text.find("\nnoise=0.3\n"), std::string::npos);
  for (const KeySpec& k : config_schema()) {
    EXPECT_NE(text.find("\n" + k.name + "="), std::string::npos) << k.name;
  }
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, kExitInput);
  EXPECT_EQ(invoke({"train"}).code, kExitInput);
  EXPECT_EQ(invoke({"synth", "--bogus", "1"}).code, kExitInput);
  EXPECT_EQ(invoke({"synth"}).code, kExitInput);  // --out missing
  EXPECT_EQ(invoke({"synth", "--help"}).code, kExitOk);
  const Result r = invoke({"eval", "--out", "/tmp/x"});
  EXPECT_EQ(r.code, kExitInput);
  EXPECT_NE(r.err.find("--checkpoint"), std::string::npos);
}

TEST(Cli, ConfigFileUnknownKeyExitsTwo) {
  const fs::path dir = scratch_dir("unknown_key");
  std::ofstream(dir / "run.cfg") << "identities=4\nwidth=3\n";
  const Result r = invoke({"synth", "--config", (dir / "run.cfg").string(), "--out", (dir / "data").string()});
  EXPECT_EQ(r.code, kExitInput);
  EXPECT_NE(r.err.find("width"), std::string::npos);
}

class CliRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = scratch_dir("run");
    const Result r = invoke({"synth", "--out", (root_ / "data").string(), "--identities", "4", "--real-per-id",
                             "2", "--fakes", "6", "--train-fraction", "0.5", "--val-fraction", "0.0",
                             "--seed", "3"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    synth_out_ = r.out;
    const Result p = invoke_with({"pretrain", "--manifest", manifest().string(), "--out", (root_ / "pre").string(),
                                  "--steps", "3", "--seed", "3", "--negatives-u", "1"},
                                 kTinyModel);
    ASSERT_EQ(p.code, kExitOk) << p.err;
  }
  static fs::path manifest() { return root_ / "data" / "manifest.jsonl"; }
  static fs::path checkpoint() { return root_ / "pre" / "checkpoint.vfd"; }

  static fs::path root_;
  static std::string synth_out_;
};
fs::path CliRun::root_;
std::string CliRun::synth_out_;

TEST_F(CliRun, SynthCountsAndEchoesConfig) {
  EXPECT_NE(synth_out_.find("wrote 14 records (8 real, 6 fake)"), std::string::npos) << synth_out_;
  const std::string cfg = slurp(root_ / "data" / "config.txt");
  EXPECT_EQ(cfg.rfind("# vfd synth\n", 0), 0u);
  EXPECT_NE(cfg.find("\nidentities=4\n"), std::string::npos);
  EXPECT_EQ(line_count(manifest()), 14u);
}

TEST_F(CliRun, PretrainWritesLossRowsAndEffectiveConfig) {
  const fs::path loss = root_ / "pre" / "loss.csv";
  EXPECT_EQ(line_count(loss), 4u);
  std::ifstream in(loss);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("step,", 0), 0u);
  EXPECT_EQ(header.substr(header.size() - 3), ",lr");
  const std::string cfg = slurp(root_ / "pre" / "config.txt");
  EXPECT_NE(cfg.find("\nlr=1e-4\n"), std::string::npos);
  EXPECT_NE(cfg.find("\nsteps=3\n"), std::string::npos);
  EXPECT_TRUE(fs::exists(checkpoint()));
}

TEST_F(CliRun, FinetuneNeedsExactlyOneStart) {
  const std::vector<std::string> base{"finetune", "--manifest", manifest().string(), "--out",
                                      (root_ / "ft").string(), "--steps", "2"};
  const Result neither = invoke_with(base, kTinyModel);
  EXPECT_EQ(neither.code, kExitInput);
  EXPECT_NE(neither.err.find("exactly one"), std::string::npos);
  auto both = base;
  both.insert(both.end(), {"--init", checkpoint().string(), "--from-scratch"});
  EXPECT_EQ(invoke_with(both, kTinyModel).code, kExitInput);
  auto missing = base;
  missing.insert(missing.end(), {"--init", (root_ / "nope.vfd").string()});
  EXPECT_EQ(invoke_with(missing, kTinyModel).code, kExitInput);

  auto good = base;
  good.insert(good.end(), {"--init", checkpoint().string(), "--negatives-q", "2"});
  const Result ok = invoke_with(good, kTinyModel);
  ASSERT_EQ(ok.code, kExitOk) << ok.err;
  EXPECT_EQ(line_count(root_ / "ft" / "loss.csv"), 3u);
  EXPECT_NE(slurp(root_ / "ft" / "config.txt").find("\nlr=5e-6\n"), std::string::npos);
}

TEST_F(CliRun, EvalWithFixedAndSelectedLambda) {
  const fs::path out = root_ / "eval";
  const Result r = invoke({"eval", "--checkpoint", checkpoint().string(), "--manifest", manifest().string(),
                           "--out", out.string(), "--split", "train", "--lambda", "-0.1"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("lambda=-0.1"), std::string::npos) << r.out;
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  EXPECT_EQ(report["threshold"].get<double>(), -0.1);
  EXPECT_FALSE(report["auc"].is_null());
  EXPECT_EQ(line_count(out / "histogram.csv"), 51u);

  // The val split is empty here, so there is nothing to select lambda from.
  const Result v = invoke({"eval", "--checkpoint", checkpoint().string(), "--manifest", manifest().string(),
                           "--out", (root_ / "eval_val").string(), "--split", "train", "--threshold-split",
                           "val"});
  EXPECT_EQ(v.code, kExitInput);
}

TEST_F(CliRun, DetectVerdictsAndMissingFiles) {
  const fs::path audio = root_ / "data" / "audio" / "00000.wav";
  const fs::path image = root_ / "data" / "images" / "00000.vfdi";
  const Result real = invoke({"detect", "--checkpoint", checkpoint().string(), "--audio", audio.string(),
                              "--image", image.string(), "--lambda", "-1"});
  EXPECT_EQ(real.code, kExitOk) << real.err;
  EXPECT_NE(real.out.find("verdict=Real"), std::string::npos);
  const Result fake = invoke({"detect", "--checkpoint", checkpoint().string(), "--audio", audio.string(),
                              "--image", image.string(), "--lambda", "1.5"});
  EXPECT_EQ(fake.code, kExitFake);
  EXPECT_NE(fake.out.find("verdict=Fake"), std::string::npos);
  const Result missing = invoke({"detect", "--checkpoint", checkpoint().string(), "--audio",
                                 (root_ / "none.wav").string(), "--image", image.string()});
  EXPECT_EQ(missing.code, kExitInput);
  EXPECT_NE(missing.err.find("none.wav"), std::string::npos);
}

TEST(Cli, GradcheckInjectedFaultExitsThree) {
  const auto names = gradient_check_names();
  ASSERT_FALSE(names.empty());
  const Result bad = invoke({"gradcheck", "--instances", "2", "--inject-fault", "matmul"});
  EXPECT_EQ(bad.code, kExitNumeric);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
  EXPECT_EQ(invoke({"gradcheck", "--inject-fault", "no-such-check"}).code, kExitInput);
}

TEST(GradientSuite, InjectedFaultFailsOnlyThatCheck) {
  GradientSuiteOptions o;
  o.instances = 1;
  o.inject_fault = "gelu";
  for (const GradientCheckRow& row : run_gradient_suite(o)) {
    EXPECT_EQ(row.passed, row.name != "gelu") << row.name << " " << row.max_relative_error;
    EXPECT_EQ(row.instances, 1u);
  }
}
