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

#ifndef TAMPERLOC_SEG_BRANCH_HPP_
#define TAMPERLOC_SEG_BRANCH_HPP_

// Segmentation branch: a simple feature pyramid built from the single
// encoder output map, followed by an all-MLP decoder that predicts tamper
// logits at a quarter of the canvas resolution.

#include <array>
#include <random>
#include <vector>

#include "tamperloc/config.hpp"
#include "tamperloc/image.hpp"
#include "tamperloc/nn.hpp"
#include "tamperloc/vit_encoder.hpp"

namespace tamperloc {

// Level i (1-based) has side grid * 2^(2 - i): x2, x1, x1/2 and x1/4 of the
// patch grid. With 16 px patches that is H / 2^(i + 2).
template <typename T>
struct FeaturePyramid {
  std::array<ag::Var<T>, 4> levels;  // each (C_S, h_i, w_i)
};

template <typename T>
struct PredictionMap {
  ag::Var<T> logits;  // (1, H/4, W/4)

  int height() const { return static_cast<int>(logits.size(1)); }
  int width() const { return static_cast<int>(logits.size(2)); }
  std::vector<float> probabilities() const;
};

template <typename T>
class SegBranch {
 public:
  SegBranch(nn::Registry<T>& reg, const EncoderConfig& encoder, const SegConfig& config, std::mt19937_64& rng);

  FeaturePyramid<T> feature_pyramid(const TokenGrid<T>& g) const;
  PredictionMap<T> mlp_decode(const FeaturePyramid<T>& fp) const;
  PredictionMap<T> forward(const TokenGrid<T>& g) const { return mlp_decode(feature_pyramid(g)); }

  // Fusion head output layer; exposed for linearity tests.
  const nn::Conv2d<T>& fuse_out() const { return fuse_out_; }

 private:
  EncoderConfig encoder_;
  SegConfig config_;
  nn::ConvTranspose2d<T> up2_;
  nn::Conv2d<T> same_;
  nn::Conv2d<T> down2_;
  nn::Conv2d<T> down4a_;
  nn::Conv2d<T> down4b_;
  std::array<nn::Conv2d<T>, 4> level_proj_;  // W_i F_i + b_i as 1x1 convolutions
  nn::Conv2d<T> fuse_hidden_;
  nn::Conv2d<T> fuse_out_;
};

// Max-pools a binary mask by `factor` (a cell is tampered if any pixel is).
Mask max_pool_mask(const Mask& mask, int factor);

// Mean BCE between logits (1, H/4, W/4) and the canvas mask max-pooled to
// the same size.
template <typename T>
ag::Var<T> seg_loss(const PredictionMap<T>& p, const Mask& canvas_mask);

// Bilinearly upsamples probabilities to (height, width), then keeps the
// top-left `extent` window.
std::vector<float> upsample_and_crop(const std::vector<float>& prob, int ph, int pw, int height, int width,
                                     Extent extent);

}  // namespace tamperloc

#endif  // TAMPERLOC_SEG_BRANCH_HPP_
