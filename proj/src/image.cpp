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

#include "tamperloc/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

#include "tamperloc/errors.hpp"

namespace tamperloc {

namespace {

cv::Mat to_bgr8(const Image& image) {
  cv::Mat out(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = out.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return out;
}

Image from_bgr8(const cv::Mat& mat) {
  Image out(mat.rows, mat.cols);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < mat.cols; ++x) {
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = static_cast<float>(row[x][2 - c]) / 255.0f;
    }
  }
  return out;
}

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

void write_or_throw(const std::filesystem::path& path, const cv::Mat& mat) {
  ensure_parent(path);
  if (!cv::imwrite(path.string(), mat)) throw DataError("cannot write image " + path.string());
}

}  // namespace

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

bool Mask::is_binary() const {
  return std::all_of(data.begin(), data.end(), [](std::uint8_t v) { return v <= 1; });
}

Image read_image(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (mat.empty()) throw DataError("cannot read image " + path.string());
  return from_bgr8(mat);
}

Mask read_mask(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (mat.empty()) throw DataError("cannot read mask " + path.string());
  Mask out(mat.rows, mat.cols);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < mat.cols; ++x) out.at(y, x) = row[x] >= 128 ? 1 : 0;
  }
  return out;
}

void write_image(const std::filesystem::path& path, const Image& image) { write_or_throw(path, to_bgr8(image)); }

void write_mask(const std::filesystem::path& path, const Mask& mask) {
  cv::Mat out(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) out.at<std::uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
  write_or_throw(path, out);
}

void write_probability(const std::filesystem::path& path, const std::vector<float>& prob, int height, int width) {
  cv::Mat out(height, width, CV_8UC1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const float v = std::clamp(prob[static_cast<std::size_t>(y) * width + x], 0.0f, 1.0f);
      out.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  write_or_throw(path, out);
}

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".jpg", to_bgr8(image), bytes, {cv::IMWRITE_JPEG_QUALITY, quality})) {
    throw DataError("JPEG encoding failed");
  }
  return bytes;
}

Image decode_image(std::span<const std::uint8_t> bytes) {
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat mat = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (mat.empty()) throw DataError("cannot decode image buffer");
  return from_bgr8(mat);
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (height == image.height && width == image.width) return image;
  Image out(height, width);
  for (int c = 0; c < 3; ++c) {
    cv::Mat src(image.height, image.width, CV_32FC1,
                const_cast<float*>(image.data.data()) + static_cast<std::size_t>(c) * image.height * image.width);
    cv::Mat dst(height, width, CV_32FC1, out.data.data() + static_cast<std::size_t>(c) * height * width);
    cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  }
  return out;
}

Mask resize_nearest(const Mask& mask, int height, int width) {
  if (height == mask.height && width == mask.width) return mask;
  Mask out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(mask.height - 1, static_cast<int>((static_cast<double>(y) + 0.5) * mask.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(mask.width - 1, static_cast<int>((static_cast<double>(x) + 0.5) * mask.width / width));
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

}  // namespace tamperloc
