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

#include "tamperloc/mask_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tamperloc/errors.hpp"

namespace tamperloc::masks {

namespace {

void require_binary(const Mask& m, const char* what) {
  if (!m.is_binary()) throw DataError(std::string(what) + ": mask is not binary");
}

// Running max (dilate) or min (erode) over a (2r+1) window, clipped to the
// grid, applied along rows then columns.
Mask filter(const Mask& in, int radius, bool take_max) {
  const int h = in.height, w = in.width;
  Mask tmp(h, w), out(h, w);
  auto pick = [take_max](std::uint8_t a, std::uint8_t b) { return take_max ? std::max(a, b) : std::min(a, b); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = in.at(y, x);
      for (int i = std::max(0, x - radius); i <= std::min(w - 1, x + radius); ++i) v = pick(v, in.at(y, i));
      tmp.at(y, x) = v;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = tmp.at(y, x);
      for (int i = std::max(0, y - radius); i <= std::min(h - 1, y + radius); ++i) v = pick(v, tmp.at(i, x));
      out.at(y, x) = v;
    }
  return out;
}

}  // namespace

Mask dilate(const Mask& mask, int radius) { return filter(mask, radius, true); }
Mask erode(const Mask& mask, int radius) { return filter(mask, radius, false); }

EdgeMask edge_mask(const Mask& gt, int radius) {
  require_binary(gt, "edge_mask");
  if (radius < 1) throw ConfigError("edge_mask: radius must be >= 1");
  const Mask grown = dilate(gt, radius);
  const Mask shrunk = erode(gt, radius);
  EdgeMask out{Mask(gt.height, gt.width), radius};
  for (std::size_t i = 0; i < out.grid.data.size(); ++i) out.grid.data[i] = grown.data[i] && !shrunk.data[i];
  return out;
}

PatchEdgeMask patch_edge_mask(const EdgeMask& edge, int patch_size) {
  const Mask& m = edge.grid;
  if (patch_size < 1 || m.height % patch_size != 0 || m.width % patch_size != 0) {
    throw ConfigError("patch_edge_mask: " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                      " is not divisible by patch size " + std::to_string(patch_size));
  }
  const Mask coarse = downsample_mask(m, m.height / patch_size, m.width / patch_size);
  PatchEdgeMask out{Mask(m.height, m.width), patch_size};
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) out.grid.at(y, x) = coarse.at(y / patch_size, x / patch_size);
  return out;
}

Mask downsample_mask(const Mask& mask, int target_height, int target_width) {
  if (target_height < 1 || target_width < 1 || mask.height % target_height != 0 || mask.width % target_width != 0) {
    throw ConfigError("downsample_mask: target " + std::to_string(target_height) + "x" +
                      std::to_string(target_width) + " does not divide " + std::to_string(mask.height) + "x" +
                      std::to_string(mask.width));
  }
  const int fy = mask.height / target_height, fx = mask.width / target_width;
  Mask out(target_height, target_width);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) out.at(y / fy, x / fx) = 1;
  return out;
}

int default_edge_radius(int canvas_side) {
  return std::max(1, static_cast<int>(std::lround(7.0 * canvas_side / 1024.0)));
}

}  // namespace tamperloc::masks
