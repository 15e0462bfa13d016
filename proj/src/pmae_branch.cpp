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

#include "tamperloc/pmae_branch.hpp"

#include <stdexcept>
#include <string>

#include "tamperloc/errors.hpp"

namespace tamperloc {

template <typename T>
ag::Var<T> image_to_var(const Image& image) {
  return ag::Var<T>::leaf({3, image.height, image.width}, std::vector<T>(image.data.begin(), image.data.end()));
}

std::shared_ptr<const ag::IndexMap> unpatchify_map(int gh, int gw, int p) {
  const std::int64_t h = static_cast<std::int64_t>(gh) * p, w = static_cast<std::int64_t>(gw) * p;
  const std::int64_t len = 3LL * p * p;
  auto map = std::make_shared<ag::IndexMap>(static_cast<std::size_t>(3 * h * w));
  for (int c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const std::int64_t token = (y / p) * gw + x / p;
        const std::int64_t inner = (c * p + y % p) * p + x % p;
        (*map)[(c * h + y) * w + x] = token * len + inner;
      }
  return map;
}

template <typename T>
ReconDecoder<T>::ReconDecoder(nn::Registry<T>& reg, const std::string& prefix, const EncoderConfig& encoder,
                              const ReconConfig& config, std::mt19937_64& rng)
    : encoder_(encoder), config_(config) {
  const std::int64_t dd = config.decoder_dim;
  embed_ = nn::Linear<T>(reg, prefix + ".embed", encoder.embed_dim, dd, rng);
  std::normal_distribution<double> normal(0.0, 0.02);
  std::vector<T> token(static_cast<std::size_t>(dd));
  for (auto& v : token) v = static_cast<T>(normal(rng));
  mask_token_ = reg.parameter(prefix + ".mask_token", {1, dd}, std::move(token));
  const auto table = nn::sincos_2d_table(dd, encoder.grid_h(), encoder.grid_w());
  pos_embed_ = reg.buffer(prefix + ".pos_embed", {encoder.num_patches(), dd}, std::vector<T>(table.begin(), table.end()));
  for (int b = 0; b < config.decoder_depth; ++b) {
    blocks_.emplace_back(reg, prefix + ".blocks." + std::to_string(b), dd, config.decoder_heads, 4, rng);
  }
  norm_ = nn::LayerNorm<T>(reg, prefix + ".norm", dd);
  head_ = nn::Linear<T>(reg, prefix + ".head", dd, 3LL * encoder.patch_size * encoder.patch_size, rng);
  global_ = global_group(encoder.num_patches());
}

template <typename T>
ag::Var<T> ReconDecoder<T>::decode_tokens(const TokenGrid<T>& kept, const MaskingPlan& plan) const {
  const int total = encoder_.num_patches();
  if (plan.total != total || static_cast<std::int64_t>(plan.kept.size()) != kept.count() ||
      plan.kept.size() + plan.masked.size() != static_cast<std::size_t>(total)) {
    throw std::invalid_argument("decode_tokens: masking plan does not match the kept tokens");
  }
  const std::int64_t dd = config_.decoder_dim;
  const auto k = static_cast<std::int64_t>(plan.kept.size());
  // Rows 0..k-1 are the embedded kept tokens, row k is the mask token.
  auto stacked = ag::concat0<T>({embed_(kept.tokens), mask_token_});
  auto map = std::make_shared<ag::IndexMap>(static_cast<std::size_t>(total * dd));
  std::vector<std::int64_t> source(static_cast<std::size_t>(total), k);
  for (std::int64_t i = 0; i < k; ++i) source[plan.kept[i]] = i;
  for (int t = 0; t < total; ++t)
    for (std::int64_t j = 0; j < dd; ++j) (*map)[t * dd + j] = source[t] * dd + j;
  auto x = ag::add(ag::index_select(stacked, map, {total, dd}), pos_embed_);
  for (const auto& block : blocks_) x = block(x, global_);
  return head_(norm_(x));
}

template <typename T>
Reconstruction<T> ReconDecoder<T>::decode_reconstruction(const TokenGrid<T>& kept, const MaskingPlan& plan) const {
  auto pixels = decode_tokens(kept, plan);
  const int p = encoder_.patch_size;
  return Reconstruction<T>{ag::index_select(pixels, unpatchify_map(encoder_.grid_h(), encoder_.grid_w(), p),
                                            {3, encoder_.height, encoder_.width})};
}

template <typename T>
PerceptualStack<T>::PerceptualStack(const PerceptualConfig& config) {
  std::mt19937_64 rng(config.seed);
  const std::array<const char*, 6> names{"conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2"};
  std::int64_t in = 3;
  for (int i = 0; i < 6; ++i) {
    const std::int64_t out = config.widths[static_cast<std::size_t>(i / 2)];
    const std::int64_t fan_in = in * 9;
    layers_[i].name = names[i];
    layers_[i].weight = ag::Var<T>::leaf({out, in, 3, 3}, nn::he_normal<T>(fan_in, out * fan_in, rng));
    layers_[i].bias = ag::Var<T>::zeros({out});
    in = out;
  }
}

template <typename T>
std::array<ag::Var<T>, 3> PerceptualStack<T>::features(const ag::Var<T>& image) const {
  std::array<ag::Var<T>, 3> taps;
  ag::Var<T> x = image;
  for (int stage = 0; stage < 3; ++stage) {
    if (stage > 0) x = ag::max_pool2d(ag::relu(x), 2);
    const auto& first = layers_[stage * 2];
    const auto& second = layers_[stage * 2 + 1];
    x = ag::conv2d(ag::relu(ag::conv2d(x, first.weight, first.bias, 1, 1)), second.weight, second.bias, 1, 1);
    taps[stage] = x;
  }
  return taps;
}

template <typename T>
void PerceptualStack<T>::load_weights(const TensorContainer& container) {
  for (auto& layer : layers_) {
    for (auto [suffix, var] : {std::pair<const char*, ag::Var<T>*>{".weight", &layer.weight}, {".bias", &layer.bias}}) {
      const std::string name = "perceptual." + layer.name + suffix;
      const auto* stored = container.find(name);
      if (!stored) throw DataError("perceptual weights: missing tensor " + name);
      copy_into(*stored, *var, name);
    }
  }
}

template <typename T>
std::vector<std::pair<std::string, ag::Var<T>>> PerceptualStack<T>::named_tensors() const {
  std::vector<std::pair<std::string, ag::Var<T>>> out;
  for (const auto& layer : layers_) {
    out.emplace_back("perceptual." + layer.name + ".weight", layer.weight);
    out.emplace_back("perceptual." + layer.name + ".bias", layer.bias);
  }
  return out;
}

namespace {

template <typename T>
ReconLossBreakdown<T> tap_losses(const PerceptualStack<T>& stack, const Reconstruction<T>& r, const Image& x,
                                 const masks::PatchEdgeMask* pm) {
  if (r.image.size(1) != x.height || r.image.size(2) != x.width) {
    throw std::invalid_argument("perceptual loss: reconstruction and target differ in size");
  }
  if (pm && (pm->grid.height != x.height || pm->grid.width != x.width)) {
    throw std::invalid_argument("perceptual loss: patch edge mask is not aligned to the canvas");
  }
  const auto pred = stack.features(r.image);
  std::array<ag::Var<T>, 3> target;
  {
    ag::NoGradGuard no_grad;
    target = stack.features(image_to_var<T>(x));
  }
  std::array<ag::Var<T>, 3> terms;
  for (int i = 0; i < 3; ++i) {
    if (!pm) {
      terms[i] = ag::mse(pred[i], target[i]);
      continue;
    }
    const auto c = pred[i].size(0), h = pred[i].size(1), w = pred[i].size(2);
    const Mask m = masks::downsample_mask(pm->grid, static_cast<int>(h), static_cast<int>(w));
    std::vector<T> gate(static_cast<std::size_t>(c * h * w));
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t j = 0; j < h * w; ++j) gate[ch * h * w + j] = static_cast<T>(m.data[j]);
    auto gate_var = ag::Var<T>::leaf({c, h, w}, std::move(gate));
    terms[i] = ag::mse(ag::mul(pred[i], gate_var), ag::mul(target[i], gate_var));
  }
  ReconLossBreakdown<T> out;
  out.loss_1_2 = terms[0].item();
  out.loss_2_2 = terms[1].item();
  out.loss_3_2 = terms[2].item();
  out.graph = ag::add(ag::add(terms[0], terms[1]), terms[2]);
  out.total = out.graph.item();
  return out;
}

}  // namespace

template <typename T>
ReconLossBreakdown<T> masked_perceptual_loss(const PerceptualStack<T>& stack, const Reconstruction<T>& r,
                                             const Image& x, const masks::PatchEdgeMask& pm) {
  return tap_losses(stack, r, x, &pm);
}

template <typename T>
ReconLossBreakdown<T> perceptual_loss(const PerceptualStack<T>& stack, const Reconstruction<T>& r, const Image& x) {
  return tap_losses<T>(stack, r, x, nullptr);
}

template ag::Var<float> image_to_var<float>(const Image&);
template ag::Var<double> image_to_var<double>(const Image&);
template class ReconDecoder<float>;
template class ReconDecoder<double>;
template class PerceptualStack<float>;
template class PerceptualStack<double>;
template ReconLossBreakdown<float> masked_perceptual_loss(const PerceptualStack<float>&, const Reconstruction<float>&,
                                                          const Image&, const masks::PatchEdgeMask&);
template ReconLossBreakdown<double> masked_perceptual_loss(const PerceptualStack<double>&,
                                                           const Reconstruction<double>&, const Image&,
                                                           const masks::PatchEdgeMask&);
template ReconLossBreakdown<float> perceptual_loss(const PerceptualStack<float>&, const Reconstruction<float>&,
                                                   const Image&);
template ReconLossBreakdown<double> perceptual_loss(const PerceptualStack<double>&, const Reconstruction<double>&,
                                                    const Image&);

}  // namespace tamperloc
