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

#ifndef TAMPERLOC_MODEL_HPP_
#define TAMPERLOC_MODEL_HPP_

// The full two-branch model: one shared encoder, the segmentation branch
// and the reconstruction branch with its frozen perceptual stack.

#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "tamperloc/checkpoint.hpp"
#include "tamperloc/config.hpp"
#include "tamperloc/data_pipeline.hpp"
#include "tamperloc/pmae_branch.hpp"
#include "tamperloc/seg_branch.hpp"
#include "tamperloc/vit_encoder.hpp"

namespace tamperloc {

enum class ParamGroup { kEncoder, kSegmentation, kReconstruction };

ParamGroup param_group(const std::string& name);

template <typename T>
struct SegForward {
  PredictionMap<T> prediction;
  ag::Var<T> loss;
};

struct PretrainedLoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> interpolated;
  std::vector<std::string> missing;
};

template <typename T>
class PmaeModel {
 public:
  PmaeModel(const ModelConfig& config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  nn::Registry<T>& registry() { return registry_; }
  const nn::Registry<T>& registry() const { return registry_; }
  const VitEncoder<T>& encoder() const { return *encoder_; }
  VitEncoder<T>& encoder() { return *encoder_; }
  const SegBranch<T>& seg() const { return *seg_; }
  const ReconDecoder<T>& recon() const { return *recon_; }
  const PerceptualStack<T>& perceptual() const { return *perceptual_; }
  PerceptualStack<T>& perceptual() { return *perceptual_; }

  // Segmentation forward on a padded canvas (inference path).
  PredictionMap<T> predict(const Image& canvas) const;
  SegForward<T> seg_forward(const data::PaddedSample& sample) const;
  // Masked encode, decode, edge masks and the masked perceptual loss
  // against the unmasked padded image.
  ReconLossBreakdown<T> recon_step(const data::PaddedSample& sample, double mask_ratio, std::uint64_t seed) const;

  masks::PatchEdgeMask patch_edge_mask_for(const Mask& canvas_mask) const;

  // Parameters and buffers (not the frozen perceptual stack).
  void save_to(TensorContainer& container) const;
  void load_from(const TensorContainer& container);
  // Maps "encoder.*" tensors by name; positional tables of another grid
  // size are resampled.
  PretrainedLoadReport load_pretrained_encoder(const TensorContainer& container);

 private:
  ModelConfig config_;
  nn::Registry<T> registry_;
  std::unique_ptr<VitEncoder<T>> encoder_;
  std::unique_ptr<SegBranch<T>> seg_;
  std::unique_ptr<ReconDecoder<T>> recon_;
  std::unique_ptr<PerceptualStack<T>> perceptual_;
};

// Leaf nodes reachable from `root` that require a gradient.
template <typename T>
std::unordered_set<const ag::Node<T>*> reachable_leaves(const ag::Var<T>& root);

}  // namespace tamperloc

#endif  // TAMPERLOC_MODEL_HPP_
