// Copyright 2026 The Tamperloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tamperloc/cli.hpp"
#include "tamperloc/config.hpp"

namespace tamperloc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("tamperloc_cli_" + std::string(
                                             ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    json cfg = {{"model", to_json(ModelConfig::tiny())}, {"train", {{"max_steps", 3}, {"batch_size", 2}}}};
    std::ofstream(root_ / "tiny.json") << cfg.dump(2);
  }
  std::string path(const std::string& rel) const { return (root_ / rel).string(); }
  std::string config() const { return path("tiny.json"); }

  fs::path root_;
};

TEST_F(CliTest, SynthWritesPairsAndManifest) {
  const auto r = run({"synth", "--n", "64", "--size", "32", "--seed", "3", "--out", path("data")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_files(root_ / "data" / "images"), 64u);
  EXPECT_EQ(count_files(root_ / "data" / "masks"), 64u);
  const auto manifest = data::load_manifest(root_ / "data" / "manifest.jsonl");
  EXPECT_EQ(manifest.entries.size(), 64u);
  EXPECT_EQ(manifest.count(data::Label::kManipulated), 64u);
  const auto snap = json::parse(slurp(root_ / "data" / "resolved_config.json"));
  EXPECT_EQ(snap["command"], "synth");
  EXPECT_EQ(snap["config"]["train"]["seed"], 3);
}

TEST_F(CliTest, OverrideAppearsInSnapshot) {
  const auto r = run({"synth", "--n", "1", "--size", "32", "--override", "lambda=0.1", "--out", path("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto snap = json::parse(slurp(root_ / "o" / "resolved_config.json"));
  EXPECT_EQ(snap["config"]["train"]["lambda"].get<double>(), 0.1);
  // The snapshot alone reproduces the configuration.
  EXPECT_EQ(to_json(run_config_from_json(snap["config"])), snap["config"]);
}

TEST_F(CliTest, ExitCodes) {
  auto r = run({"train", "--bogus-flag"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE((r.out + r.err).find("--manifest"), std::string::npos) << r.out << r.err;
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);

  r = run({"synth", "--n", "2", "--override", "seed=4", "--out", path("x")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("ambiguous"), std::string::npos) << r.err;
  r = run({"synth", "--n", "2", "--override", "train.lamda=4", "--out", path("x")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("train.lamda"), std::string::npos) << r.err;
  EXPECT_EQ(run({"synth", "--n", "2", "--config", path("missing.json"), "--out", path("x")}).code, 2);

  r = run({"eval", "--checkpoint", path("none.ckpt"), "--manifest", path("none.jsonl"), "--out", path("x")});
  EXPECT_EQ(r.code, 3) << r.err;
  r = run({"train", "--manifest", path("none.jsonl"), "--config", config(), "--out", path("x")});
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST_F(CliTest, NonFiniteTrainingExitsWithNumericalCode) {
  ASSERT_EQ(run({"synth", "--n", "2", "--size", "32", "--out", path("data")}).code, 0);
  const auto r = run({"train", "--manifest", path("data/manifest.jsonl"), "--config", config(), "--override",
                      "base_lr=1e300", "--override", "clip_norm=1e300", "--out", path("run")});
  EXPECT_EQ(r.code, 4) << r.out << r.err;
}

TEST_F(CliTest, TrainEvalPredictPipeline) {
  ASSERT_EQ(run({"synth", "--n", "4", "--size", "32", "--out", path("data")}).code, 0);
  const auto manifest = path("data/manifest.jsonl");
  auto r = run({"train", "--manifest", manifest, "--config", config(), "--seed", "9", "--out", path("a")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"train", "--manifest", manifest, "--config", config(), "--seed", "9", "--out", path("b")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto log = slurp(root_ / "a" / "metrics.jsonl");
  EXPECT_FALSE(log.empty());
  EXPECT_EQ(log, slurp(root_ / "b" / "metrics.jsonl"));
  ASSERT_TRUE(fs::exists(root_ / "a" / "checkpoint.ckpt"));

  const auto ckpt = path("a/checkpoint.ckpt");
  r = run({"eval", "--checkpoint", ckpt, "--manifest", manifest, "--out", path("e")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto result = json::parse(slurp(root_ / "e" / "eval.jsonl"));
  EXPECT_EQ(result["n_images"], 4);

  r = run({"robustness", "--checkpoint", ckpt, "--manifest", manifest, "--plot", "--override",
           R"(distortions=[{"kind":"jpeg","quality":80}])", "--out", path("r")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(root_ / "r" / "robustness.png"));
  EXPECT_NE(slurp(root_ / "r" / "robustness.txt").find("none"), std::string::npos);

  r = run({"predict", "--checkpoint", ckpt, "--image", path("data/images/00000.png"), "--overlay",
           "--dump-reconstruction", "--out", path("p")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* suffix : {"_prob.png", "_overlay.png", "_reconstruction.png"}) {
    EXPECT_TRUE(fs::exists(root_ / "p" / (std::string("00000") + suffix))) << suffix;
  }

  r = run({"inspect-masks", "--mask", path("data/masks/00001.png"), "--config", config(), "--out", path("m")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_mask(root_ / "m" / "00001_edge.png").height, 32);
  EXPECT_TRUE(fs::exists(root_ / "m" / "00001_patch_edge.png"));

  r = run({"train", "--manifest", manifest, "--config", config(), "--lambda-sweep", "--override", "max_steps=1",
           "--out", path("sweep")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* tag : {"lambda_1", "lambda_0.1", "lambda_0.01", "lambda_0.001"}) {
    EXPECT_TRUE(fs::exists(root_ / "sweep" / tag / "metrics.jsonl")) << tag;
  }
}

TEST_F(CliTest, PretrainFeedsTraining) {
  ASSERT_EQ(run({"synth", "--n", "4", "--size", "32", "--out", path("data")}).code, 0);
  auto r = run({"pretrain", "--manifest", path("data/manifest.jsonl"), "--steps", "5", "--config", config(), "--out",
                path("pre")});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(fs::exists(root_ / "pre" / "pretrained.ckpt"));
  r = run({"train", "--manifest", path("data/manifest.jsonl"), "--config", config(), "--override",
           "init_checkpoint=" + path("pre/pretrained.ckpt"), "--out", path("t")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("0 missing"), std::string::npos) << r.out;
}

}  // namespace
}  // namespace tamperloc
