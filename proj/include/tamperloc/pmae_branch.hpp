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

#ifndef TAMPERLOC_PMAE_BRANCH_HPP_
#define TAMPERLOC_PMAE_BRANCH_HPP_

// Reconstruction branch: a shallow global-attention ViT decoder that turns
// the masked encoding back into a full canvas image, supervised by a
// perceptual loss restricted to patches along the tamper boundary.

#include <array>
#include <random>
#include <vector>

#include "tamperloc/checkpoint.hpp"
#include "tamperloc/config.hpp"
#include "tamperloc/image.hpp"
#include "tamperloc/mask_ops.hpp"
#include "tamperloc/nn.hpp"
#include "tamperloc/vit_encoder.hpp"

namespace tamperloc {

template <typename T>
struct Reconstruction {
  ag::Var<T> image;  // (3, H, W)
};

template <typename T>
struct ReconLossBreakdown {
  T loss_1_2 = T(0);
  T loss_2_2 = T(0);
  T loss_3_2 = T(0);
  T total = T(0);
  ag::Var<T> graph;  // differentiable total
};

template <typename T>
class ReconDecoder {
 public:
  ReconDecoder(nn::Registry<T>& reg, const std::string& prefix, const EncoderConfig& encoder,
               const ReconConfig& config, std::mt19937_64& rng);

  // Per-patch pixel predictions (N, 3*p*p) for every grid position.
  ag::Var<T> decode_tokens(const TokenGrid<T>& kept, const MaskingPlan& plan) const;
  Reconstruction<T> decode_reconstruction(const TokenGrid<T>& kept, const MaskingPlan& plan) const;

  const nn::Linear<T>& head() const { return head_; }

 private:
  EncoderConfig encoder_;
  ReconConfig config_;
  nn::Linear<T> embed_;
  ag::Var<T> mask_token_;  // (1, decoder_dim)
  ag::Var<T> pos_embed_;   // buffer (N, decoder_dim)
  std::vector<nn::TransformerBlock<T>> blocks_;
  nn::LayerNorm<T> norm_;
  nn::Linear<T> head_;
  std::shared_ptr<const ag::TokenGroups> global_;
};

// Inverse of patchify: (N, 3*p*p) patch rows -> (3, gh*p, gw*p).
std::shared_ptr<const ag::IndexMap> unpatchify_map(int grid_h, int grid_w, int patch);

// Frozen 3x3-conv feature stack with taps at conv1_2 (full resolution),
// conv2_2 (1/2) and conv3_2 (1/4); taps are the raw convolution outputs.
template <typename T>
class PerceptualStack {
 public:
  explicit PerceptualStack(const PerceptualConfig& config);

  std::array<ag::Var<T>, 3> features(const ag::Var<T>& image) const;
  // Replaces the seeded weights with "perceptual.<layer>.weight/.bias"
  // tensors from a container.
  void load_weights(const TensorContainer& container);
  std::vector<std::pair<std::string, ag::Var<T>>> named_tensors() const;

 private:
  struct Layer {
    std::string name;
    ag::Var<T> weight;
    ag::Var<T> bias;
  };
  std::array<Layer, 6> layers_;  // conv1_1, conv1_2, conv2_1, conv2_2, conv3_1, conv3_2
};

// Sum over the three taps of MSE(m * phi(r), m * phi(x)), where m is the
// patch edge mask reduced to each tap's resolution and broadcast over
// channels. The mean runs over all tap elements.
template <typename T>
ReconLossBreakdown<T> masked_perceptual_loss(const PerceptualStack<T>& stack, const Reconstruction<T>& r,
                                             const Image& x, const masks::PatchEdgeMask& pm);

// Same three taps with no mask at all.
template <typename T>
ReconLossBreakdown<T> perceptual_loss(const PerceptualStack<T>& stack, const Reconstruction<T>& r, const Image& x);

template <typename T>
ag::Var<T> image_to_var(const Image& image);

}  // namespace tamperloc

#endif  // TAMPERLOC_PMAE_BRANCH_HPP_
