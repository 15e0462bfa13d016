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

#include "tamperloc/data_pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "tamperloc/errors.hpp"
#include "tamperloc/rng.hpp"

namespace tamperloc::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_readable(const fs::path& path, std::size_t line) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw DataError("manifest line " + std::to_string(line) + ": cannot read " + path.string());
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

std::string label_name(Label label) { return label == Label::kAuthentic ? "authentic" : "manipulated"; }

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

bool overlaps(int y0, int x0, int y1, int x1, int h, int w) {
  return y0 < y1 + h && y1 < y0 + h && x0 < x1 + w && x1 < x0 + w;
}

}  // namespace

std::size_t DatasetManifest::count(Label label) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [label](const ManifestEntry& e) { return e.label == label; }));
}

std::string DatasetManifest::summary() const {
  std::ostringstream os;
  os << entries.size() << " entries (" << count(Label::kAuthentic) << " authentic, " << count(Label::kManipulated)
     << " manipulated)";
  return os.str();
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  auto resolve = [&base](const std::string& p) {
    fs::path candidate(p);
    return candidate.is_absolute() ? candidate : base / candidate;
  };

  DatasetManifest manifest;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!record.is_object() || !record.contains("image") || !record["image"].is_string()) {
      throw DataError("manifest line " + std::to_string(lineno) + ": missing \"image\"");
    }
    ManifestEntry entry;
    entry.image_path = resolve(record["image"].get<std::string>());
    if (record.contains("mask") && record["mask"].is_string() && !record["mask"].get<std::string>().empty()) {
      entry.mask_path = resolve(record["mask"].get<std::string>());
    }
    if (record.contains("label")) {
      const auto label = record["label"].get<std::string>();
      if (label == "authentic") {
        entry.label = Label::kAuthentic;
      } else if (label == "manipulated") {
        entry.label = Label::kManipulated;
      } else {
        throw DataError("manifest line " + std::to_string(lineno) + ": unknown label \"" + label + "\"");
      }
    } else {
      entry.label = entry.mask_path ? Label::kManipulated : Label::kAuthentic;
    }
    if (entry.label == Label::kManipulated && !entry.mask_path) {
      throw DataError("manifest line " + std::to_string(lineno) + ": manipulated entry has no mask");
    }
    require_readable(entry.image_path, lineno);
    if (entry.mask_path) require_readable(*entry.mask_path, lineno);
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path base = fs::absolute(path.has_parent_path() ? path.parent_path() : fs::path("."));
  auto relative = [&base](const fs::path& p) {
    auto rel = fs::absolute(p).lexically_relative(base);
    return rel.empty() ? p.string() : rel.generic_string();
  };
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& e : manifest.entries) {
    json record{{"image", relative(e.image_path)}, {"label", label_name(e.label)}};
    record["mask"] = e.mask_path ? json(relative(*e.mask_path)) : json(nullptr);
    out << record.dump() << '\n';
  }
}

void validate(const RawSample& sample) {
  if (sample.image.height != sample.mask.height || sample.image.width != sample.mask.width) {
    throw DataError("image and mask dimensions differ");
  }
  if (!sample.mask.is_binary()) throw DataError("mask is not binary");
}

RawSample load_sample(const ManifestEntry& entry) {
  RawSample s;
  s.image = read_image(entry.image_path);
  if (entry.mask_path) {
    s.mask = read_mask(*entry.mask_path);
  } else {
    s.mask = Mask(s.image.height, s.image.width);
  }
  validate(s);
  return s;
}

PaddedSample pad_to_canvas(const RawSample& sample, int height, int width) {
  const int h = sample.image.height, w = sample.image.width;
  if (h > height || w > width) {
    throw DataError("sample " + std::to_string(h) + "x" + std::to_string(w) + " does not fit canvas " +
                    std::to_string(height) + "x" + std::to_string(width));
  }
  PaddedSample out{Image(height, width), Mask(height, width), Extent{h, w}};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      std::copy_n(&sample.image.data[(static_cast<std::size_t>(c) * h + y) * w], w, &out.image.at(c, y, 0));
  for (int y = 0; y < h; ++y) std::copy_n(&sample.mask.data[static_cast<std::size_t>(y) * w], w, &out.mask.at(y, 0));
  return out;
}

RawSample crop_to_extent(const PaddedSample& sample) {
  const int h = sample.orig_extent.height, w = sample.orig_extent.width;
  RawSample out{Image(h, w), Mask(h, w)};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      std::copy_n(sample.image.data.data() + (static_cast<std::size_t>(c) * sample.image.height + y) * sample.image.width, w,
                  &out.image.at(c, y, 0));
  for (int y = 0; y < h; ++y)
    std::copy_n(sample.mask.data.data() + static_cast<std::size_t>(y) * sample.mask.width, w, &out.mask.at(y, 0));
  return out;
}

RawSample resize_oversized(const RawSample& sample, int limit) {
  const int h = sample.image.height, w = sample.image.width;
  if (std::max(h, w) <= limit) return sample;
  int nh = limit, nw = limit;
  if (h >= w) {
    nw = std::max(1, static_cast<int>(std::lround(static_cast<double>(w) * limit / h)));
  } else {
    nh = std::max(1, static_cast<int>(std::lround(static_cast<double>(h) * limit / w)));
  }
  return RawSample{resize_bilinear(sample.image, nh, nw), resize_nearest(sample.mask, nh, nw)};
}

PaddedSample prepare(const RawSample& sample, int height, int width) {
  const int limit = std::min(height, width);
  return pad_to_canvas(resize_oversized(sample, limit), height, width);
}

RawSample synthesize_manipulation(const RawSample& sample, std::uint64_t seed, TamperRecord* record) {
  const int h = sample.image.height, w = sample.image.width;
  if (h < 32 || w < 32) throw DataError("synthesize_manipulation needs at least 32x32 pixels");
  std::mt19937_64 rng(seed);
  TamperRecord rec;
  rec.height = uniform_int(rng, std::max(4, h / 8), std::max(4, h / 3));
  rec.width = uniform_int(rng, std::max(4, w / 8), std::max(4, w / 3));
  const double mode_draw = uniform01(rng);
  rec.mode = mode_draw < 0.5 ? TamperMode::kCopyMove : (mode_draw < 0.75 ? TamperMode::kInpaintMean : TamperMode::kInpaintBlur);
  rec.y = uniform_int(rng, 0, h - rec.height);
  rec.x = uniform_int(rng, 0, w - rec.width);

  RawSample out = sample;
  out.mask = Mask(h, w);
  if (rec.mode == TamperMode::kCopyMove) {
    rec.src_y = uniform_int(rng, 0, h - rec.height);
    rec.src_x = uniform_int(rng, 0, w - rec.width);
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      if (!overlaps(rec.src_y, rec.src_x, rec.y, rec.x, rec.height, rec.width)) {
        placed = true;
      } else {
        rec.y = uniform_int(rng, 0, h - rec.height);
        rec.x = uniform_int(rng, 0, w - rec.width);
      }
    }
    if (!placed) {
      // Sides are at most a third of the image, so the far column always fits.
      rec.x = rec.src_x >= (w - rec.width) / 2 ? 0 : w - rec.width;
    }
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < rec.height; ++y)
        for (int x = 0; x < rec.width; ++x)
          out.image.at(c, rec.y + y, rec.x + x) = sample.image.at(c, rec.src_y + y, rec.src_x + x);
  } else if (rec.mode == TamperMode::kInpaintMean) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) acc += sample.image.at(c, y, x);
      const auto fill = static_cast<float>(acc / (static_cast<double>(h) * w));
      for (int y = 0; y < rec.height; ++y)
        for (int x = 0; x < rec.width; ++x) out.image.at(c, rec.y + y, rec.x + x) = fill;
    }
  } else {
    constexpr double kSigma = 8.0;
    const Image blurred = gaussian_blur(sample.image, 2 * static_cast<int>(std::ceil(3 * kSigma)) + 1, kSigma);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < rec.height; ++y)
        for (int x = 0; x < rec.width; ++x)
          out.image.at(c, rec.y + y, rec.x + x) = blurred.at(c, rec.y + y, rec.x + x);
  }
  for (int y = 0; y < rec.height; ++y)
    for (int x = 0; x < rec.width; ++x) out.mask.at(rec.y + y, rec.x + x) = 1;
  if (record) *record = rec;
  return out;
}

std::vector<RawSample> synthetic_dataset(std::size_t n, int height, int width, std::uint64_t seed) {
  std::vector<RawSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RawSample clean{render_synthetic_image(height, width, derive_seed(seed, SeedStream::kSynth, 2 * i)),
                    Mask(height, width)};
    out.push_back(synthesize_manipulation(clean, derive_seed(seed, SeedStream::kSynth, 2 * i + 1)));
  }
  return out;
}

Image render_synthetic_image(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image img(height, width);
  std::array<std::array<double, 3>, 4> corner{};
  for (auto& col : corner)
    for (auto& v : col) v = 0.15 + 0.7 * uniform01(rng);
  const double fy = 2.0 + 6.0 * uniform01(rng), fx = 2.0 + 6.0 * uniform01(rng);
  const double phase = 6.283 * uniform01(rng);
  for (int y = 0; y < height; ++y) {
    const double ty = static_cast<double>(y) / std::max(1, height - 1);
    for (int x = 0; x < width; ++x) {
      const double tx = static_cast<double>(x) / std::max(1, width - 1);
      const double texture = 0.06 * std::sin(fy * ty * 6.283 + phase) * std::cos(fx * tx * 6.283);
      for (int c = 0; c < 3; ++c) {
        const double base = (1 - ty) * ((1 - tx) * corner[0][c] + tx * corner[1][c]) +
                            ty * ((1 - tx) * corner[2][c] + tx * corner[3][c]);
        img.at(c, y, x) = static_cast<float>(base + texture);
      }
    }
  }
  const int shapes = uniform_int(rng, 4, 9);
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = uniform01(rng) < 0.5;
    const double cy = uniform01(rng) * height, cx = uniform01(rng) * width;
    const double ry = (0.05 + 0.2 * uniform01(rng)) * height, rx = (0.05 + 0.2 * uniform01(rng)) * width;
    std::array<double, 3> col{uniform01(rng), uniform01(rng), uniform01(rng)};
    for (int y = std::max(0, static_cast<int>(cy - ry)); y < std::min(height, static_cast<int>(cy + ry) + 1); ++y) {
      for (int x = std::max(0, static_cast<int>(cx - rx)); x < std::min(width, static_cast<int>(cx + rx) + 1); ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        if (ellipse && dy * dy + dx * dx > 1.0) continue;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(col[c]);
      }
    }
  }
  std::normal_distribution<double> noise(0.0, 0.02);
  for (auto& v : img.data) v = std::clamp(static_cast<float>(v + noise(rng)), 0.0f, 1.0f);
  return img;
}

AugmentConfig AugmentConfig::disabled() {
  AugmentConfig cfg;
  cfg.hflip_prob = cfg.vflip_prob = cfg.rot90_prob = cfg.rescale_prob = cfg.blur_prob = 0.0;
  return cfg;
}

RawSample flip_horizontal(const RawSample& s) {
  RawSample out = s;
  const int h = s.image.height, w = s.image.width;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = s.image.at(c, y, w - 1 - x);
      out.mask.at(y, x) = s.mask.at(y, w - 1 - x);
    }
  return out;
}

RawSample flip_vertical(const RawSample& s) {
  RawSample out = s;
  const int h = s.image.height, w = s.image.width;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = s.image.at(c, h - 1 - y, x);
      out.mask.at(y, x) = s.mask.at(h - 1 - y, x);
    }
  return out;
}

RawSample rotate90(const RawSample& s) {
  const int h = s.image.height, w = s.image.width;
  RawSample out{Image(w, h), Mask(w, h)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) out.image.at(c, x, h - 1 - y) = s.image.at(c, y, x);
      out.mask.at(x, h - 1 - y) = s.mask.at(y, x);
    }
  return out;
}

RawSample augment(const RawSample& sample, std::uint64_t seed, const AugmentConfig& config) {
  std::mt19937_64 rng(seed);
  // Draw every decision up front so enabling one augmentation never shifts
  // the random stream of another.
  const double u_hflip = uniform01(rng), u_vflip = uniform01(rng), u_rot = uniform01(rng);
  const double u_scale = uniform01(rng), scale_t = uniform01(rng);
  const double u_blur = uniform01(rng), blur_pick = uniform01(rng);

  RawSample out = sample;
  if (u_hflip < config.hflip_prob) out = flip_horizontal(out);
  if (u_vflip < config.vflip_prob) out = flip_vertical(out);
  if (u_rot < config.rot90_prob) out = rotate90(out);
  if (u_scale < config.rescale_prob) {
    const double f = config.rescale_min + (config.rescale_max - config.rescale_min) * scale_t;
    const int nh = std::max(1, static_cast<int>(std::lround(out.image.height * f)));
    const int nw = std::max(1, static_cast<int>(std::lround(out.image.width * f)));
    out = RawSample{resize_bilinear(out.image, nh, nw), resize_nearest(out.mask, nh, nw)};
  }
  if (u_blur < config.blur_prob && !config.blur_kernels.empty()) {
    const auto idx = std::min(config.blur_kernels.size() - 1,
                              static_cast<std::size_t>(blur_pick * static_cast<double>(config.blur_kernels.size())));
    out.image = gaussian_blur(out.image, config.blur_kernels[idx]);
  }
  return out;
}

std::string DistortionSpec::name() const {
  switch (kind) {
    case DistortionKind::kNone:
      return "none";
    case DistortionKind::kJpeg:
      return "jpeg(" + std::to_string(jpeg_quality) + ")";
    case DistortionKind::kGaussianBlur:
      return "blur(" + std::to_string(blur_kernel) + ")";
  }
  return "unknown";
}

void DistortionSpec::validate() const {
  if (kind == DistortionKind::kJpeg && (jpeg_quality < 50 || jpeg_quality > 100)) {
    throw ConfigError("jpeg quality must lie in [50, 100], got " + std::to_string(jpeg_quality));
  }
  if (kind == DistortionKind::kGaussianBlur && (blur_kernel < 3 || blur_kernel % 2 == 0)) {
    throw ConfigError("blur kernel must be odd and >= 3, got " + std::to_string(blur_kernel));
  }
}

std::vector<double> gaussian_kernel(int k, double sigma) {
  if (k < 1 || k % 2 == 0) throw ConfigError("gaussian kernel size must be odd, got " + std::to_string(k));
  if (sigma <= 0.0) sigma = 0.3 * ((k - 1) * 0.5 - 1.0) + 0.8;
  std::vector<double> w(static_cast<std::size_t>(k));
  const int r = k / 2;
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    const double d = i - r;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

Image gaussian_blur(const Image& image, int k, double sigma) {
  const auto kernel = gaussian_kernel(k, sigma);
  const int r = k / 2, h = image.height, w = image.width;
  Image tmp(h, w), out(h, w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += kernel[i + r] * image.at(c, y, reflect101(x + i, w));
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += kernel[i + r] * tmp.at(c, reflect101(y + i, h), x);
        out.at(c, y, x) = static_cast<float>(acc);
      }
  }
  return out;
}

Image jpeg_roundtrip(const Image& image, int quality) { return decode_image(encode_jpeg(image, quality)); }

RawSample apply_distortion(const RawSample& sample, const DistortionSpec& spec) {
  spec.validate();
  RawSample out = sample;
  switch (spec.kind) {
    case DistortionKind::kNone:
      break;
    case DistortionKind::kJpeg:
      out.image = jpeg_roundtrip(sample.image, spec.jpeg_quality);
      break;
    case DistortionKind::kGaussianBlur:
      out.image = gaussian_blur(sample.image, spec.blur_kernel);
      break;
  }
  return out;
}

}  // namespace tamperloc::data
