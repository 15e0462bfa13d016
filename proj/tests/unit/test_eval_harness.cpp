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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "tamperloc/errors.hpp"
#include "tamperloc/eval_harness.hpp"

namespace tamperloc {
namespace {

namespace fs = std::filesystem;

Mask mask_from(std::initializer_list<int> bits, int h, int w) {
  Mask m(h, w);
  std::copy(bits.begin(), bits.end(), m.data.begin());
  return m;
}

TEST(PixelF1, Examples) {
  const Mask gt = mask_from({0, 1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, 4, 4);
  std::vector<float> same(16), comp(16);
  for (int i = 0; i < 16; ++i) {
    same[i] = gt.data[i] ? 0.9f : 0.1f;
    comp[i] = gt.data[i] ? 0.1f : 0.9f;
  }
  EXPECT_EQ(eval::pixel_f1(same, gt), 1.0);
  EXPECT_EQ(eval::pixel_f1(comp, gt), 0.0);

  // TP at 1 and 2, FN at 5, FP at 8.
  std::vector<float> partial(16, 0.0f);
  partial[1] = partial[2] = partial[8] = 0.7f;
  EXPECT_NEAR(eval::pixel_f1(partial, gt), 2.0 * 2 / (2 * 2 + 1 + 1), 1e-6);
  EXPECT_NEAR(eval::pixel_f1(partial, gt), 0.6667, 1e-4);
}

TEST(PixelF1, EmptyConventions) {
  const Mask empty(3, 3);
  EXPECT_EQ(eval::pixel_f1(std::vector<float>(9, 0.2f), empty), 1.0);
  EXPECT_EQ(eval::pixel_f1(std::vector<float>(9, 0.8f), empty), 0.0);
  Mask one(3, 3);
  one.at(1, 1) = 1;
  EXPECT_EQ(eval::pixel_f1(std::vector<float>(9, 0.2f), one), 0.0);
}

TEST(PixelF1, GtIsTheReference) {
  // The threshold applies to the prediction only: a score of exactly 0.5
  // counts as positive, 0.49 does not, whatever the mask holds.
  Mask gt(1, 4);
  gt.data = {1, 1, 0, 0};
  EXPECT_EQ(eval::pixel_f1(std::vector<float>{0.5f, 0.5f, 0.0f, 0.0f}, gt), 1.0);
  EXPECT_EQ(eval::pixel_f1(std::vector<float>{0.49f, 0.49f, 0.0f, 0.0f}, gt), 0.0);
  // Over-prediction (FP) and under-prediction (FN) land on the right side.
  EXPECT_NEAR(eval::pixel_f1(std::vector<float>{1, 1, 1, 0}, gt), 2.0 * 2 / (4 + 1), 1e-12);
  EXPECT_NEAR(eval::pixel_f1(std::vector<float>{1, 0, 0, 0}, gt), 2.0 / (2 + 1), 1e-12);
  EXPECT_EQ(eval::pixel_f1(std::vector<float>{1, 1, 0, 0}, gt, 1.5), 0.0);
}

TEST(PixelF1, ShapeMismatch) {
  EXPECT_THROW(eval::pixel_f1(std::vector<float>(8), Mask(3, 3)), std::invalid_argument);
  EXPECT_THROW(eval::pixel_auc(std::vector<float>(8), Mask(3, 3)), std::invalid_argument);
}

TEST(PixelAuc, Examples) {
  Mask gt(1, 6);
  gt.data = {0, 0, 0, 1, 1, 1};
  EXPECT_EQ(*eval::pixel_auc(std::vector<float>{0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f}, gt), 1.0);
  EXPECT_EQ(*eval::pixel_auc(std::vector<float>(6, 0.3f), gt), 0.5);
  EXPECT_EQ(*eval::pixel_auc(std::vector<float>{0.6f, 0.5f, 0.4f, 0.3f, 0.2f, 0.1f}, gt), 0.0);
  EXPECT_FALSE(eval::pixel_auc(std::vector<float>(6, 0.3f), Mask(1, 6)).has_value());
  EXPECT_FALSE(eval::pixel_auc(std::vector<float>(6, 0.3f), Mask(1, 6, 1)).has_value());

  Mask ten(1, 10);
  ten.data = {1, 0, 1, 0, 0, 1, 0, 0, 1, 0};
  const std::vector<float> s{0.9f, 0.2f, 0.4f, 0.4f, 0.8f, 0.1f, 0.3f, 0.4f, 0.7f, 0.0f};
  EXPECT_NEAR(*eval::pixel_auc(s, ten), oracle::auc_pairs(s, ten), 1e-12);
}

TEST(Metrics, MatchOraclesOnRandomGrids) {
  std::mt19937_64 rng(2026);
  std::uniform_int_distribution<int> side(1, 12), level(0, 8);
  for (int trial = 0; trial < 500; ++trial) {
    const int h = side(rng), w = side(rng);
    Mask gt(h, w);
    std::bernoulli_distribution px(0.15 + 0.7 * (trial % 3) / 2.0);
    for (auto& v : gt.data) v = px(rng);
    std::vector<float> pred(static_cast<std::size_t>(h) * w);
    // Coarse levels force ties and exact 0.5 scores.
    for (auto& p : pred) p = static_cast<float>(level(rng)) / 8.0f;
    ASSERT_EQ(eval::pixel_f1(pred, gt), oracle::f1(pred, gt, 0.5)) << trial;
    const auto auc = eval::pixel_auc(pred, gt);
    const bool both = gt.count() > 0 && gt.count() < gt.data.size();
    ASSERT_EQ(auc.has_value(), both) << trial;
    if (both) ASSERT_NEAR(*auc, oracle::auc_pairs(pred, gt), 1e-9) << trial;
  }
}

class EvaluateTest : public ::testing::Test {
 protected:
  EvaluateTest() : model_(ModelConfig::tiny(), 31), samples_(data::synthetic_dataset(6, 32, 32, 32)) {
    // Mixed sizes exercise padding, cropping and the oversize path.
    const auto big = data::synthetic_dataset(1, 32, 32, 33)[0];
    data::RawSample small{Image(24, 20), Mask(24, 20)};
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 20; ++x) {
        for (int c = 0; c < 3; ++c) small.image.at(c, y, x) = big.image.at(c, y + 4, x + 6);
        small.mask.at(y, x) = big.mask.at(y + 4, x + 6);
      }
    samples_.push_back(small);
    samples_.push_back(data::synthetic_dataset(1, 48, 40, 34)[0]);
  }
  PmaeModel<float> model_;
  std::vector<data::RawSample> samples_;
  EvalConfig config_;
};

TEST_F(EvaluateTest, AveragesPerImageScores) {
  const auto r = eval::evaluate(model_, samples_, config_, "synthetic");
  EXPECT_EQ(r.n_images, 8);
  EXPECT_EQ(r.dataset, "synthetic");
  double f1 = 0.0;
  for (const auto& s : samples_) {
    const auto scored = data::resize_oversized(s, 32);
    const auto prob = eval::predict_probability(model_, scored.image);
    ASSERT_EQ(prob.size(), scored.mask.data.size());
    f1 += oracle::f1(prob, scored.mask, 0.5);
  }
  EXPECT_NEAR(r.f1, f1 / 8, 1e-12);
  EXPECT_GE(r.auc, 0.0);
  EXPECT_LE(r.auc, 1.0);
}

TEST_F(EvaluateTest, OrderAndPartitionInvariant) {
  const auto whole = eval::evaluate(model_, samples_, config_);
  auto shuffled = samples_;
  std::reverse(shuffled.begin(), shuffled.end());
  std::swap(shuffled[1], shuffled[5]);
  const auto reordered = eval::evaluate(model_, shuffled, config_);
  EXPECT_NEAR(reordered.f1, whole.f1, 1e-12);
  EXPECT_NEAR(reordered.auc, whole.auc, 1e-12);

  const std::vector<data::RawSample> a(samples_.begin(), samples_.begin() + 3), b(samples_.begin() + 3, samples_.end());
  const auto ra = eval::evaluate(model_, a, config_), rb = eval::evaluate(model_, b, config_);
  EXPECT_NEAR((ra.f1 * ra.n_images + rb.f1 * rb.n_images) / (ra.n_images + rb.n_images), whole.f1, 1e-12);
  EXPECT_NEAR((ra.auc * ra.n_auc_images + rb.auc * rb.n_auc_images) / (ra.n_auc_images + rb.n_auc_images), whole.auc,
              1e-12);
}

TEST_F(EvaluateTest, AuthenticOnlyManifestSkipsAuc) {
  const fs::path dir = fs::temp_directory_path() / "tamperloc_eval_authentic";
  fs::remove_all(dir);
  fs::create_directories(dir);
  data::DatasetManifest manifest;
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) {
    const fs::path p = dir / ("a" + std::to_string(i) + ".png");
    write_image(p, samples_[i].image);
    manifest.entries.push_back({p, std::nullopt, data::Label::kAuthentic});
    const auto prob = eval::predict_probability(model_, read_image(p));
    expected += std::none_of(prob.begin(), prob.end(), [](float v) { return v >= 0.5f; }) ? 1.0 : 0.0;
  }
  data::save_manifest(dir / "manifest.jsonl", manifest);
  const auto r = eval::evaluate(model_, data::load_manifest(dir / "manifest.jsonl"), config_);
  EXPECT_EQ(r.n_images, 3);
  EXPECT_EQ(r.n_auc_images, 0);
  EXPECT_EQ(r.auc, 0.0);
  EXPECT_NEAR(r.f1, expected / 3, 1e-12);
}

TEST_F(EvaluateTest, RobustnessSweep) {
  const auto defaults = eval::default_distortions();
  ASSERT_EQ(defaults.size(), 10u);
  EXPECT_EQ(defaults[0], data::DistortionSpec::none());
  const std::vector<int> q{100, 90, 80, 70, 60, 50}, k{3, 5, 11};
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_EQ(defaults[1 + i], data::DistortionSpec::jpeg(q[i]));
  for (std::size_t i = 0; i < k.size(); ++i) EXPECT_EQ(defaults[7 + i], data::DistortionSpec::blur(k[i]));

  const std::vector<data::DistortionSpec> specs{data::DistortionSpec::jpeg(50), data::DistortionSpec::blur(5)};
  const auto rows = eval::robustness_sweep(model_, samples_, specs, config_);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].distortion, data::DistortionSpec::none());
  EXPECT_EQ(rows[0].f1, eval::evaluate(model_, samples_, config_).f1);
  const auto again = eval::robustness_sweep(model_, samples_, specs, config_);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].f1, again[i].f1);

  EXPECT_THROW(eval::robustness_sweep(model_, samples_, {data::DistortionSpec::jpeg(0)}, config_), ConfigError);
}

TEST_F(EvaluateTest, ReportsAreWritten) {
  const fs::path dir = fs::temp_directory_path() / "tamperloc_eval_reports";
  fs::remove_all(dir);
  const std::vector<eval::RobustnessRow> rows{{data::DistortionSpec::none(), 0.5},
                                              {data::DistortionSpec::jpeg(90), 0.25}};
  const auto table = eval::render_table(rows);
  EXPECT_NE(table.find("jpeg(90)"), std::string::npos) << table;
  EXPECT_NE(table.find("0.2500"), std::string::npos);

  eval::write_records(dir / "rows.jsonl", {rows[0].to_json(), rows[1].to_json()});
  std::ifstream in(dir / "rows.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["f1"].get<double>(), rows[n++].f1);
  }
  EXPECT_EQ(n, 2);

  eval::write_bar_plot(dir / "plot.png", rows);
  const Image plot = read_image(dir / "plot.png");
  EXPECT_GT(plot.width, plot.height / 2);

  const auto& img = samples_[0].image;
  const auto tinted = eval::overlay(img, std::vector<float>(img.data.size() / 3, 0.0f));
  EXPECT_EQ(tinted.data, img.data);
}

}  // namespace
}  // namespace tamperloc
