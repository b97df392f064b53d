#include <gtest/gtest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "eqprop/cli.hpp"
#include "eqprop/training.hpp"

namespace eqprop {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct CliRun {
  int code = -1;
  std::string out, err;

  json record() const {
    std::istringstream in(out);
    std::string line, last;
    while (std::getline(in, line))
      if (!line.empty()) last = line;
    return json::parse(last);
  }
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void put_be32(std::string& b, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) b.push_back(static_cast<char>((v >> shift) & 0xff));
}

/// Writes a small IDX dataset whose class is encoded by which horizontal band is lit.
void write_idx(const fs::path& dir, const std::string& prefix, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::string img, lbl;
  put_be32(img, 0x803);
  put_be32(img, static_cast<std::uint32_t>(n));
  put_be32(img, 28);
  put_be32(img, 28);
  put_be32(lbl, 0x801);
  put_be32(lbl, static_cast<std::uint32_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned label = static_cast<unsigned>(rng() % 10);
    for (std::size_t r = 0; r < 28; ++r)
      for (std::size_t c = 0; c < 28; ++c) {
        const bool lit = r / 3 == label && (rng() % 4 != 0);
        img.push_back(static_cast<char>(lit ? 200 : 0));
      }
    lbl.push_back(static_cast<char>(label));
  }
  std::ofstream(dir / (prefix + "-images-idx3-ubyte"), std::ios::binary) << img;
  std::ofstream(dir / (prefix + "-labels-idx1-ubyte"), std::ios::binary) << lbl;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "eqprop_cli_tests";
    fs::remove_all(root_);
    fs::create_directories(root_ / "data");
    write_idx(root_ / "data", "train", 80, 1);
    write_idx(root_ / "data", "t10k", 40, 2);
  }

  static fs::path write_config(const std::string& name, const std::string& text) {
    const fs::path p = root_ / name;
    std::ofstream(p) << text;
    return p;
  }

  static std::string train_config(std::size_t epochs = 2) {
    return "[model]\narch = p-1h\nactivation = sigmoid\nhidden = 16\n\n[dynamics]\nT = 12\nK = 4\nbeta = 0.1\n\n"
           "[train]\nlearning_rates = 0.08, 0.04\nepochs = " +
           std::to_string(epochs) + "\nbatch_size = 10\n\n[data]\nsource = mnist\ndir = " + (root_ / "data").string() +
           "\n";
  }

  static std::string toy_config(const std::string& beta, const std::string& threshold) {
    return "[model]\narch = toy\nactivation = tanh\nepsilon = 0.08\n\n[dynamics]\nT = 3000\nK = 40\nbeta = " + beta +
           "\n\n[data]\nsource = toy\n\n[gdu]\nbatch_size = 1\nthreshold = " + threshold + "\n";
  }

  static fs::path out(const std::string& name) { return root_ / "out" / name; }

  static inline fs::path root_;
};

TEST_F(CliTest, PresetsListAndShow) {
  const CliRun list = run({"presets", "--command", "train"});
  EXPECT_EQ(list.code, kExitOk);
  EXPECT_NE(list.out.find("p-conv"), std::string::npos);
  const CliRun show = run({"presets", "--show", "eb-1h"});
  EXPECT_EQ(show.code, kExitOk);
  EXPECT_NE(show.out.find("T = 800"), std::string::npos);
  EXPECT_EQ(run({"presets", "--show", "nope"}).code, kExitConfig);
}

TEST_F(CliTest, ToyGduPassesAtSmallBeta) {
  const auto cfg = write_config("toy_ok.ini", toy_config("0.001", "0.01"));
  const CliRun r = run({"gdu-check", "--config", cfg.string(), "--out", out("toy_ok").string()});
  EXPECT_EQ(r.code, kExitOk) << r.out << r.err;
  EXPECT_EQ(r.record()["status"], "ok");
  EXPECT_LT(r.record()["max_rmse"].get<double>(), 0.01);
  for (const char* f : {"curves.csv", "summary.csv", "manifest.json", "config.ini"})
    EXPECT_TRUE(fs::exists(out("toy_ok") / f)) << f;
}

TEST_F(CliTest, ZeroThresholdFails) {
  const auto cfg = write_config("toy_zero.ini", toy_config("0.001", "0"));
  const CliRun r = run({"gdu-check", "--config", cfg.string(), "--out", out("toy_zero").string()});
  EXPECT_EQ(r.code, kExitThreshold);
  EXPECT_EQ(r.record()["status"], "threshold_exceeded");
}

TEST_F(CliTest, ExportCurvesIgnoresThreshold) {
  const auto cfg = write_config("toy_curves.ini", toy_config("0.001", "0"));
  const CliRun r = run({"export-curves", "--config", cfg.string(), "--out", out("curves").string(), "--per-layer", "2"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
}

TEST_F(CliTest, MissingKeyNamesKey) {
  const auto cfg = write_config("missing.ini", "[model]\narch = toy\nactivation = tanh\nepsilon = 0.08\n\n[dynamics]\n"
                                               "T = 10\nK = 2\n\n[data]\nsource = toy\n\n[gdu]\nbatch_size = 1\n"
                                               "threshold = 0.1\n");
  const CliRun r = run({"gdu-check", "--config", cfg.string(), "--out", out("missing").string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("dynamics.beta"), std::string::npos) << r.err;
}

TEST_F(CliTest, UnknownKeyAndBadFlagRejected) {
  const auto cfg = write_config("unknown.ini", toy_config("0.01", "0.1") + "\n[run]\nsed = 3\n");
  const CliRun r = run({"gdu-check", "--config", cfg.string(), "--out", out("unknown").string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("run.sed"), std::string::npos);
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--algorithm", "sgd"}).code, kExitConfig);
  EXPECT_EQ(run({}).code, kExitConfig);
}

TEST_F(CliTest, ZeroEpochsSavesInitialization) {
  const auto cfg = write_config("train0.ini", train_config(0));
  const CliRun r = run({"train", "--config", cfg.string(), "--out", out("train0").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(slurp(out("train0") / "history.csv"), "epoch,train_error,test_error,wall_seconds\n");
  const Checkpoint c = checkpoint_load(out("train0") / "checkpoint.bin");
  EXPECT_EQ(c.epochs_completed, 0u);
  ModelSpec spec;
  spec.arch = "p-1h";
  spec.hidden = 16;
  EXPECT_EQ(c.params, init_params(*build_model(spec), 0));
}

TEST_F(CliTest, EvalMatchesFinalTestError) {
  const auto cfg = write_config("train2.ini", train_config(2));
  const CliRun t = run({"train", "--config", cfg.string(), "--out", out("train2").string()});
  ASSERT_EQ(t.code, kExitOk) << t.err;
  const double trained = t.record()["ep_test_error"].get<double>();
  const fs::path ck = out("train2") / "checkpoint.bin";
  const CliRun e = run({"eval", "--checkpoint", ck.string()});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  EXPECT_EQ(e.record()["test_error"].get<double>(), trained);
  const CliRun other_t = run({"eval", "--checkpoint", ck.string(), "--T", "3"});
  EXPECT_EQ(other_t.code, kExitOk);
  EXPECT_EQ(other_t.record()["T"], 3);
  EXPECT_EQ(run({"eval", "--checkpoint", (root_ / "nope.bin").string()}).code, kExitConfig);
}

TEST_F(CliTest, RerunIsBitwiseIdentical) {
  const auto cfg = write_config("det.ini", train_config(2));
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", out("det_a").string()}).code, kExitOk);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", out("det_b").string()}).code, kExitOk);
  EXPECT_EQ(slurp(out("det_a") / "checkpoint.bin"), slurp(out("det_b") / "checkpoint.bin"));
  EXPECT_EQ(slurp(out("det_a") / "config.ini"), slurp(out("det_b") / "config.ini"));
  auto strip_wall = [](const std::string& csv) {
    std::istringstream in(csv);
    std::string line, kept;
    while (std::getline(in, line)) kept += line.substr(0, line.rfind(',')) + "\n";
    return kept;
  };
  EXPECT_EQ(strip_wall(slurp(out("det_a") / "history.csv")), strip_wall(slurp(out("det_b") / "history.csv")));
}

TEST_F(CliTest, ResumeContinuesTheRun) {
  const auto cfg = write_config("resume.ini", train_config(2));
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", out("full").string()}).code, kExitOk);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", out("half").string(), "--epochs", "1"}).code, kExitOk);
  const CliRun r = run({"train", "--config", cfg.string(), "--out", out("half").string(), "--resume",
                     (out("half") / "checkpoint.bin").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(checkpoint_load(out("half") / "checkpoint.bin").params,
            checkpoint_load(out("full") / "checkpoint.bin").params);
}

TEST_F(CliTest, BothAlgorithmsShareInitialization) {
  const auto cfg = write_config("both.ini", train_config(0));
  const CliRun r = run({"train", "--config", cfg.string(), "--out", out("both").string(), "--algorithm", "both"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Checkpoint ep = checkpoint_load(out("both") / "ep" / "checkpoint.bin");
  const Checkpoint bptt = checkpoint_load(out("both") / "bptt" / "checkpoint.bin");
  EXPECT_EQ(ep.params, bptt.params);
  EXPECT_NE(ep.config, bptt.config);
}

TEST_F(CliTest, ManifestEchoesRun) {
  const auto cfg = write_config("manifest.ini", train_config(0));
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", out("manifest").string(), "--seed", "5"}).code, kExitOk);
  const json m = json::parse(slurp(out("manifest") / "manifest.json"));
  EXPECT_EQ(m["artifact"], "eqprop");
  EXPECT_EQ(m["seed"], 5);
  EXPECT_EQ(m["command"], "train");
  EXPECT_NE(m["config"].get<std::string>().find("seed = 5"), std::string::npos);
  EXPECT_FALSE(m["version"].get<std::string>().empty());
}

TEST_F(CliTest, MissingDataIsConfigError) {
  const auto cfg = write_config("nodata.ini", train_config(1));
  const CliRun r = run({"train", "--config", cfg.string(), "--out", out("nodata").string(), "--data-dir",
                     (root_ / "absent").string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_EQ(r.record()["status"], "error");
}

}  // namespace
}  // namespace eqprop
