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

#include "tamperloc/model.hpp"

#include <cmath>
#include <random>

#include "tamperloc/errors.hpp"
#include "tamperloc/rng.hpp"

namespace tamperloc {

ParamGroup param_group(const std::string& name) {
  if (name.starts_with("encoder.")) return ParamGroup::kEncoder;
  if (name.starts_with("seg.")) return ParamGroup::kSegmentation;
  return ParamGroup::kReconstruction;
}

template <typename T>
PmaeModel<T>::PmaeModel(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(derive_seed(init_seed, SeedStream::kInit));
  encoder_ = std::make_unique<VitEncoder<T>>(registry_, config_.encoder, rng);
  seg_ = std::make_unique<SegBranch<T>>(registry_, config_.encoder, config_.seg, rng);
  recon_ = std::make_unique<ReconDecoder<T>>(registry_, "recon", config_.encoder, config_.recon, rng);
  perceptual_ = std::make_unique<PerceptualStack<T>>(config_.perceptual);
  if (!config_.perceptual.weights_path.empty()) {
    perceptual_->load_weights(read_container(config_.perceptual.weights_path));
  }
}

template <typename T>
PredictionMap<T> PmaeModel<T>::predict(const Image& canvas) const {
  return seg_->forward(encoder_->forward(canvas));
}

template <typename T>
SegForward<T> PmaeModel<T>::seg_forward(const data::PaddedSample& sample) const {
  auto prediction = predict(sample.image);
  auto loss = seg_loss(prediction, sample.mask);
  return SegForward<T>{std::move(prediction), std::move(loss)};
}

template <typename T>
masks::PatchEdgeMask PmaeModel<T>::patch_edge_mask_for(const Mask& canvas_mask) const {
  return masks::patch_edge_mask(masks::edge_mask(canvas_mask, config_.edge_radius), config_.encoder.patch_size);
}

template <typename T>
ReconLossBreakdown<T> PmaeModel<T>::recon_step(const data::PaddedSample& sample, double mask_ratio,
                                               std::uint64_t seed) const {
  const auto pm = patch_edge_mask_for(sample.mask);
  if (pm.grid.empty()) {
    // Nothing to supervise: every tap is annihilated by the mask.
    ReconLossBreakdown<T> zero;
    zero.graph = ag::Var<T>::scalar(T(0));
    return zero;
  }
  auto [kept, plan] = encoder_->encode_masked(sample.image, mask_ratio, seed);
  auto reconstruction = recon_->decode_reconstruction(kept, plan);
  return masked_perceptual_loss(*perceptual_, reconstruction, sample.image, pm);
}

template <typename T>
void PmaeModel<T>::save_to(TensorContainer& container) const {
  for (const auto& [name, v] : registry_.all()) container.put(name, v);
  container.metadata["model"] = to_json(config_);
}

template <typename T>
void PmaeModel<T>::load_from(const TensorContainer& container) {
  for (auto [name, v] : registry_.all()) {
    const auto* stored = container.find(name);
    if (!stored) throw DataError("checkpoint is missing tensor " + name);
    copy_into(*stored, v, name);
  }
}

template <typename T>
PretrainedLoadReport PmaeModel<T>::load_pretrained_encoder(const TensorContainer& container) {
  PretrainedLoadReport report;
  for (auto [name, v] : registry_.all()) {
    if (!name.starts_with("encoder.")) continue;
    const auto* stored = container.find(name);
    if (!stored) {
      report.missing.push_back(name);
      continue;
    }
    if (name == "encoder.pos_embed" && stored->shape != v.shape()) {
      const auto dim = static_cast<int>(v.size(1));
      if (stored->shape.size() != 2 || stored->shape[1] != dim) {
        throw DataError("pretrained positional table has incompatible shape " + shape_string(stored->shape));
      }
      const auto old_n = static_cast<int>(stored->shape[0]);
      const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(old_n))));
      if (side * side != old_n) throw DataError("pretrained positional table is not square");
      StoredTensor resampled{v.shape(), stored->dtype,
                             interpolate_positional_table(stored->values, side, side, dim, config_.encoder.grid_h(),
                                                          config_.encoder.grid_w())};
      copy_into(resampled, v, name);
      report.interpolated.push_back(name);
      continue;
    }
    copy_into(*stored, v, name);
    report.loaded.push_back(name);
  }
  return report;
}

template <typename T>
std::unordered_set<const ag::Node<T>*> reachable_leaves(const ag::Var<T>& root) {
  std::unordered_set<const ag::Node<T>*> seen, leaves;
  std::vector<const ag::Node<T>*> stack{root.node()};
  while (!stack.empty()) {
    const auto* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    if (n->is_leaf()) {
      if (n->requires_grad) leaves.insert(n);
      continue;
    }
    for (const auto& in : n->inputs) stack.push_back(in.get());
  }
  return leaves;
}

template class PmaeModel<float>;
template class PmaeModel<double>;
template std::unordered_set<const ag::Node<float>*> reachable_leaves(const ag::Var<float>&);
template std::unordered_set<const ag::Node<double>*> reachable_leaves(const ag::Var<double>&);

}  // namespace tamperloc
