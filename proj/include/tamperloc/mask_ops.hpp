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

#ifndef TAMPERLOC_MASK_OPS_HPP_
#define TAMPERLOC_MASK_OPS_HPP_

// Boundary band around the tampered region, and its quantization to the
// patch grid. These masks gate the reconstruction loss.

#include "tamperloc/image.hpp"

namespace tamperloc::masks {

struct EdgeMask {
  Mask grid;
  int dilation_radius = 0;
};

struct PatchEdgeMask {
  Mask grid;
  int patch_size = 0;
};

// Square-element morphology; pixels outside the grid are ignored, so the
// image border never creates a boundary.
Mask dilate(const Mask& mask, int radius);
Mask erode(const Mask& mask, int radius);

// dilate(gt, r) AND NOT erode(gt, r).
EdgeMask edge_mask(const Mask& gt, int radius);

// Every aligned patch_size block becomes the OR of its pixels.
PatchEdgeMask patch_edge_mask(const EdgeMask& edge, int patch_size);

// A target cell is 1 iff any pixel in its footprint is 1.
Mask downsample_mask(const Mask& mask, int target_height, int target_width);

// Edge radius scaled from 7 px at a 1024 canvas.
int default_edge_radius(int canvas_side);

}  // namespace tamperloc::masks

#endif  // TAMPERLOC_MASK_OPS_HPP_
