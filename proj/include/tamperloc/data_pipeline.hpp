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

#ifndef TAMPERLOC_DATA_PIPELINE_HPP_
#define TAMPERLOC_DATA_PIPELINE_HPP_

// Dataset manifests, zero-padding to the working canvas, synthetic
// tampering, train-time augmentation and robustness distortions.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tamperloc/image.hpp"

namespace tamperloc::data {

enum class Label { kAuthentic, kManipulated };

struct ManifestEntry {
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> mask_path;
  Label label = Label::kAuthentic;
};

// Line-delimited JSON records: {"image": ..., "mask": ..., "label": ...}.
// Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::size_t count(Label label) const;
  std::string summary() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct RawSample {
  Image image;
  Mask mask;
};

struct PaddedSample {
  Image image;
  Mask mask;
  Extent orig_extent;
};

// Reads an entry; authentic entries get an all-zero mask.
RawSample load_sample(const ManifestEntry& entry);
void validate(const RawSample& sample);

PaddedSample pad_to_canvas(const RawSample& sample, int height, int width);
RawSample crop_to_extent(const PaddedSample& sample);
// Scales so the longer side equals `limit`; smaller samples pass through.
RawSample resize_oversized(const RawSample& sample, int limit);
// resize_oversized followed by pad_to_canvas.
PaddedSample prepare(const RawSample& sample, int height, int width);

enum class TamperMode { kCopyMove, kInpaintMean, kInpaintBlur };

struct TamperRecord {
  TamperMode mode = TamperMode::kCopyMove;
  int y = 0, x = 0, height = 0, width = 0;   // altered rectangle
  int src_y = 0, src_x = 0;                  // copy-move source corner
};

// Alters one random rectangle; the returned mask is exactly that rectangle.
RawSample synthesize_manipulation(const RawSample& sample, std::uint64_t seed, TamperRecord* record = nullptr);

// Procedural test image: smooth gradients, random shapes and sensor-like noise.
Image render_synthetic_image(int height, int width, std::uint64_t seed);

// `n` tampered samples of a fixed size; sample i renders with synth seed
// index 2i and tampers with index 2i+1.
std::vector<RawSample> synthetic_dataset(std::size_t n, int height, int width, std::uint64_t seed);

struct AugmentConfig {
  double hflip_prob = 0.5;
  double vflip_prob = 0.0;
  double rot90_prob = 0.0;
  double rescale_prob = 0.0;
  double rescale_min = 0.75;
  double rescale_max = 1.25;
  double blur_prob = 0.0;
  std::vector<int> blur_kernels{3, 5};

  static AugmentConfig disabled();
};

RawSample augment(const RawSample& sample, std::uint64_t seed, const AugmentConfig& config);

RawSample flip_horizontal(const RawSample& sample);
RawSample flip_vertical(const RawSample& sample);
// Rotates 90 degrees clockwise: pixel (y, x) moves to (x, h - 1 - y).
RawSample rotate90(const RawSample& sample);

enum class DistortionKind { kNone, kJpeg, kGaussianBlur };

struct DistortionSpec {
  DistortionKind kind = DistortionKind::kNone;
  int jpeg_quality = 100;
  int blur_kernel = 3;

  static DistortionSpec none() { return {}; }
  static DistortionSpec jpeg(int quality) { return {DistortionKind::kJpeg, quality, 3}; }
  static DistortionSpec blur(int kernel) { return {DistortionKind::kGaussianBlur, 100, kernel}; }
  std::string name() const;
  void validate() const;
  bool operator==(const DistortionSpec&) const = default;
};

// Normalized 1-D Gaussian of odd size k; sigma follows the usual
// 0.3 * ((k - 1) / 2 - 1) + 0.8 rule when not given.
std::vector<double> gaussian_kernel(int k, double sigma = 0.0);
// Separable Gaussian blur with mirrored (reflect-101) borders.
Image gaussian_blur(const Image& image, int k, double sigma = 0.0);
Image jpeg_roundtrip(const Image& image, int quality);

RawSample apply_distortion(const RawSample& sample, const DistortionSpec& spec);

}  // namespace tamperloc::data

#endif  // TAMPERLOC_DATA_PIPELINE_HPP_
