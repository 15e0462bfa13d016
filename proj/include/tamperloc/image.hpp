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

#ifndef TAMPERLOC_IMAGE_HPP_
#define TAMPERLOC_IMAGE_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace tamperloc {

// Planar RGB image, channel-major (3, height, width), values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, float fill = 0.0f) : height(h), width(w), data(static_cast<std::size_t>(3) * h * w, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  bool operator==(const Image&) const = default;
};

// Single-channel binary grid; every cell holds 0 or 1.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool is_binary() const;
  bool operator==(const Mask&) const = default;
};

struct Extent {
  int height = 0;
  int width = 0;
  bool operator==(const Extent&) const = default;
};

// Codec boundary. Reads accept anything the decoder understands; masks are
// thresholded at 128 on load and written as 0/255.
Image read_image(const std::filesystem::path& path);
Mask read_mask(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);
void write_mask(const std::filesystem::path& path, const Mask& mask);
// Writes a single-channel probability map in [0,1] as 8-bit grey.
void write_probability(const std::filesystem::path& path, const std::vector<float>& prob, int height, int width);

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality);
Image decode_image(std::span<const std::uint8_t> bytes);

// Bilinear resize (half-pixel centers) and nearest-neighbour mask resize.
Image resize_bilinear(const Image& image, int height, int width);
Mask resize_nearest(const Mask& mask, int height, int width);

}  // namespace tamperloc

#endif  // TAMPERLOC_IMAGE_HPP_
