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

#include "tamperloc/eval_harness.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "tamperloc/errors.hpp"

namespace tamperloc::eval {

double pixel_f1(std::span<const float> pred, const Mask& gt, double threshold) {
  if (pred.size() != gt.data.size()) {
    throw std::invalid_argument("pixel_f1: prediction has " + std::to_string(pred.size()) + " pixels, mask has " +
                                std::to_string(gt.data.size()));
  }
  std::size_t tp = 0, fp = 0, fn = 0, predicted = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= threshold;
    const bool g = gt.data[i] != 0;
    predicted += p;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  const std::size_t positives = tp + fn;
  if (positives == 0 && predicted == 0) return 1.0;
  if (positives == 0 || predicted == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

std::optional<double> pixel_auc(std::span<const float> pred, const Mask& gt) {
  if (pred.size() != gt.data.size()) throw std::invalid_argument("pixel_auc: size mismatch");
  const std::size_t n = pred.size();
  const std::size_t positives = gt.count();
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pred[a] < pred[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pred[order[j + 1]] == pred[order[i]]) ++j;
    // Ranks are 1-based; a tie block [i, j] shares the average rank.
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k)
      if (gt.data[order[k]]) rank_sum += avg_rank;
    i = j + 1;
  }
  const double p = static_cast<double>(positives), q = static_cast<double>(negatives);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

nlohmann::json EvalResult::to_json() const {
  return {{"dataset", dataset}, {"f1", f1},           {"auc", auc},
          {"n_images", n_images}, {"n_auc_images", n_auc_images}, {"threshold", threshold}};
}

nlohmann::json RobustnessRow::to_json() const { return {{"distortion", distortion.name()}, {"f1", f1}}; }

template <typename T>
std::vector<float> predict_probability(const PmaeModel<T>& model, const Image& image, Extent* extent) {
  ag::NoGradGuard no_grad;
  const auto& enc = model.config().encoder;
  data::RawSample raw{image, Mask(image.height, image.width)};
  const auto padded = data::prepare(raw, enc.height, enc.width);
  const auto prediction = model.predict(padded.image);
  if (extent) *extent = padded.orig_extent;
  return upsample_and_crop(prediction.probabilities(), prediction.height(), prediction.width(), enc.height,
                           enc.width, padded.orig_extent);
}

template <typename T>
EvalResult evaluate(const PmaeModel<T>& model, const std::vector<data::RawSample>& samples, const EvalConfig& config,
                    const std::string& dataset) {
  EvalResult result;
  result.dataset = dataset;
  result.threshold = config.threshold;
  const int limit = std::min(model.config().encoder.height, model.config().encoder.width);
  double f1_sum = 0.0, auc_sum = 0.0;
  for (const auto& sample : samples) {
    const auto scored = data::resize_oversized(sample, limit);
    const auto prob = predict_probability(model, scored.image);
    f1_sum += pixel_f1(prob, scored.mask, config.threshold);
    if (auto auc = pixel_auc(prob, scored.mask)) {
      auc_sum += *auc;
      ++result.n_auc_images;
    }
    ++result.n_images;
  }
  if (result.n_images > 0) result.f1 = f1_sum / result.n_images;
  if (result.n_auc_images > 0) result.auc = auc_sum / result.n_auc_images;
  return result;
}

template <typename T>
EvalResult evaluate(const PmaeModel<T>& model, const data::DatasetManifest& manifest, const EvalConfig& config,
                    const std::string& dataset) {
  std::vector<data::RawSample> samples;
  samples.reserve(manifest.entries.size());
  for (const auto& entry : manifest.entries) samples.push_back(data::load_sample(entry));
  return evaluate(model, samples, config, dataset);
}

std::vector<data::DistortionSpec> default_distortions() {
  std::vector<data::DistortionSpec> specs{data::DistortionSpec::none()};
  for (int q : {100, 90, 80, 70, 60, 50}) specs.push_back(data::DistortionSpec::jpeg(q));
  for (int k : {3, 5, 11}) specs.push_back(data::DistortionSpec::blur(k));
  return specs;
}

template <typename T>
std::vector<RobustnessRow> robustness_sweep(const PmaeModel<T>& model, const std::vector<data::RawSample>& samples,
                                            const std::vector<data::DistortionSpec>& specs, const EvalConfig& config) {
  std::vector<data::DistortionSpec> all = specs.empty() ? default_distortions() : specs;
  if (std::none_of(all.begin(), all.end(), [](const auto& s) { return s.kind == data::DistortionKind::kNone; })) {
    all.insert(all.begin(), data::DistortionSpec::none());
  }
  std::vector<RobustnessRow> rows;
  for (const auto& spec : all) {
    spec.validate();
    std::vector<data::RawSample> distorted;
    distorted.reserve(samples.size());
    for (const auto& s : samples) distorted.push_back(data::apply_distortion(s, spec));
    rows.push_back(RobustnessRow{spec, evaluate(model, distorted, config, spec.name()).f1});
  }
  return rows;
}

std::string render_table(const std::vector<RobustnessRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "distortion" << "pixel F1\n";
  os << std::string(26, '-') << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(16) << r.distortion.name() << std::fixed << std::setprecision(4) << r.f1 << '\n';
  }
  return os.str();
}

void write_records(const std::filesystem::path& path, const std::vector<nlohmann::json>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

void write_bar_plot(const std::filesystem::path& path, const std::vector<RobustnessRow>& rows) {
  const int bar = 48, gap = 16, margin = 40, plot_h = 240;
  const int width = margin * 2 + static_cast<int>(rows.size()) * (bar + gap);
  const int height = plot_h + 2 * margin + 40;
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int base_y = margin + plot_h;
  cv::line(canvas, {margin - 4, base_y}, {width - margin, base_y}, cv::Scalar(0, 0, 0), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int x0 = margin + static_cast<int>(i) * (bar + gap);
    const int bh = static_cast<int>(std::lround(std::clamp(rows[i].f1, 0.0, 1.0) * plot_h));
    cv::rectangle(canvas, {x0, base_y - bh}, {x0 + bar, base_y}, cv::Scalar(180, 110, 40), cv::FILLED);
    char value[16];
    std::snprintf(value, sizeof(value), "%.2f", rows[i].f1);
    cv::putText(canvas, value, {x0 + 4, base_y - bh - 6}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1);
    cv::putText(canvas, rows[i].distortion.name(), {x0, base_y + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.33,
                cv::Scalar(0, 0, 0), 1);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), canvas)) throw DataError("cannot write " + path.string());
}

Image overlay(const Image& image, const std::vector<float>& prob) {
  Image out = image;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const float a = 0.6f * std::clamp(prob[static_cast<std::size_t>(y) * image.width + x], 0.0f, 1.0f);
      out.at(0, y, x) = (1 - a) * image.at(0, y, x) + a;
      out.at(1, y, x) = (1 - a) * image.at(1, y, x);
      out.at(2, y, x) = (1 - a) * image.at(2, y, x);
    }
  return out;
}

#define TAMPERLOC_INSTANTIATE_EVAL(T)                                                                          \
  template std::vector<float> predict_probability(const PmaeModel<T>&, const Image&, Extent*);               \
  template EvalResult evaluate(const PmaeModel<T>&, const std::vector<data::RawSample>&, const EvalConfig&,   \
                               const std::string&);                                                          \
  template EvalResult evaluate(const PmaeModel<T>&, const data::DatasetManifest&, const EvalConfig&,         \
                               const std::string&);                                                          \
  template std::vector<RobustnessRow> robustness_sweep(const PmaeModel<T>&, const std::vector<data::RawSample>&, \
                                                       const std::vector<data::DistortionSpec>&, const EvalConfig&);

TAMPERLOC_INSTANTIATE_EVAL(float)
TAMPERLOC_INSTANTIATE_EVAL(double)

}  // namespace tamperloc::eval
