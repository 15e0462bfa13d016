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

#ifndef TAMPERLOC_EVAL_HARNESS_HPP_
#define TAMPERLOC_EVAL_HARNESS_HPP_

// Pixel-level F1 / AUC scoring, dataset evaluation and the distortion
// robustness sweep.

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamperloc/config.hpp"
#include "tamperloc/data_pipeline.hpp"
#include "tamperloc/model.hpp"

namespace tamperloc::eval {

// 2TP / (2TP + FP + FN) with `gt` as the reference. Both empty -> 1,
// exactly one empty -> 0.
double pixel_f1(std::span<const float> pred, const Mask& gt, double threshold = 0.5);

// ROC AUC from the rank statistic with averaged tie ranks; nullopt when
// `gt` holds a single class.
std::optional<double> pixel_auc(std::span<const float> pred, const Mask& gt);

struct EvalResult {
  std::string dataset;
  double f1 = 0.0;
  double auc = 0.0;        // mean over images with both classes
  int n_images = 0;
  int n_auc_images = 0;    // images that contributed to `auc`
  double threshold = 0.5;

  nlohmann::json to_json() const;
};

struct RobustnessRow {
  data::DistortionSpec distortion;
  double f1 = 0.0;

  nlohmann::json to_json() const;
};

// Probability map for one raw image at its (possibly pre-resized) extent:
// resize -> pad -> segmentation forward -> bilinear upsample -> crop.
template <typename T>
std::vector<float> predict_probability(const PmaeModel<T>& model, const Image& image, Extent* extent = nullptr);

// Per-image scores averaged with equal weight.
template <typename T>
EvalResult evaluate(const PmaeModel<T>& model, const std::vector<data::RawSample>& samples,
                    const EvalConfig& config, const std::string& dataset = "samples");
template <typename T>
EvalResult evaluate(const PmaeModel<T>& model, const data::DatasetManifest& manifest, const EvalConfig& config,
                    const std::string& dataset = "manifest");

// none; jpeg q in {100, 90, 80, 70, 60, 50}; blur k in {3, 5, 11}.
std::vector<data::DistortionSpec> default_distortions();

// Distortions hit the raw image before any resizing or padding.
template <typename T>
std::vector<RobustnessRow> robustness_sweep(const PmaeModel<T>& model, const std::vector<data::RawSample>& samples,
                                            const std::vector<data::DistortionSpec>& specs, const EvalConfig& config);

std::string render_table(const std::vector<RobustnessRow>& rows);
void write_records(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);
void write_bar_plot(const std::filesystem::path& path, const std::vector<RobustnessRow>& rows);

// Probability map composited over the image in red.
Image overlay(const Image& image, const std::vector<float>& prob);

}  // namespace tamperloc::eval

#endif  // TAMPERLOC_EVAL_HARNESS_HPP_
