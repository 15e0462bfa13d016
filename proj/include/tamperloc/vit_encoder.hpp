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

#ifndef TAMPERLOC_VIT_ENCODER_HPP_
#define TAMPERLOC_VIT_ENCODER_HPP_

// Plain ViT encoder over the zero-padded canvas. Most blocks attend within
// non-overlapping windows; every `global_every`-th block attends globally.
// The masked forward used by the reconstruction branch drops a random
// subset of patches and runs every block globally over the kept set.

#include <cstdint>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "tamperloc/config.hpp"
#include "tamperloc/image.hpp"
#include "tamperloc/nn.hpp"

namespace tamperloc {

template <typename T>
struct TokenGrid {
  ag::Var<T> tokens;  // (N, dim)
  int grid_h = 0;
  int grid_w = 0;

  std::int64_t count() const { return tokens.size(0); }
  std::int64_t dim() const { return tokens.size(1); }
  bool is_full() const { return count() == static_cast<std::int64_t>(grid_h) * grid_w; }
};

struct MaskingPlan {
  double ratio = 0.0;
  std::uint64_t seed = 0;
  int total = 0;
  std::vector<std::int32_t> kept;    // ascending patch indices
  std::vector<std::int32_t> masked;  // ascending patch indices
};

// Uniform sampling without replacement; |masked| = round(ratio * total).
MaskingPlan make_masking_plan(int total, double ratio, std::uint64_t seed);

// Patch vectors ordered (channel, dy, dx); returns (grid_h*grid_w, 3*p*p).
template <typename T>
std::vector<T> patchify(const Image& image, int patch_size);

std::shared_ptr<const ag::TokenGroups> window_groups(int grid_h, int grid_w, int window);
std::shared_ptr<const ag::TokenGroups> global_group(int count);

template <typename T>
class VitEncoder {
 public:
  VitEncoder(nn::Registry<T>& reg, const EncoderConfig& config, std::mt19937_64& rng);

  const EncoderConfig& config() const { return config_; }

  // Linear patch projection plus the fixed positional table.
  TokenGrid<T> patch_embed(const Image& image) const;
  TokenGrid<T> encode(const TokenGrid<T>& tokens) const;
  std::pair<TokenGrid<T>, MaskingPlan> random_mask(const TokenGrid<T>& tokens, double ratio,
                                                   std::uint64_t seed) const;
  std::pair<TokenGrid<T>, MaskingPlan> encode_masked(const Image& image, double ratio, std::uint64_t seed) const;

  // Full forward used by the segmentation branch.
  TokenGrid<T> forward(const Image& image) const { return encode(patch_embed(image)); }

  const ag::Var<T>& pos_embed() const { return pos_embed_; }
  // Zeroes the positional table (used by equivariance tests).
  void zero_positional_encoding();

 private:
  TokenGrid<T> run_blocks(const TokenGrid<T>& tokens, bool masked_pass) const;

  EncoderConfig config_;
  nn::Linear<T> proj_;
  ag::Var<T> pos_embed_;  // buffer (N, dim)
  std::vector<nn::TransformerBlock<T>> blocks_;
  nn::LayerNorm<T> norm_;
  std::shared_ptr<const ag::TokenGroups> windows_;
  std::shared_ptr<const ag::TokenGroups> global_;
};

}  // namespace tamperloc

#endif  // TAMPERLOC_VIT_ENCODER_HPP_
