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

#include "tamperloc/seg_branch.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tamperloc/errors.hpp"

namespace tamperloc {

template <typename T>
std::vector<float> PredictionMap<T>::probabilities() const {
  std::vector<float> out(static_cast<std::size_t>(logits.numel()));
  const auto z = logits.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(T(1) / (T(1) + std::exp(-z[i])));
  return out;
}

template <typename T>
SegBranch<T>::SegBranch(nn::Registry<T>& reg, const EncoderConfig& encoder, const SegConfig& config,
                        std::mt19937_64& rng)
    : encoder_(encoder), config_(config) {
  const std::int64_t d = encoder.embed_dim, cs = config.pyramid_channels, cd = config.decoder_channels;
  up2_ = nn::ConvTranspose2d<T>(reg, "seg.pyramid.up2", d, cs, 2, 2, rng);
  same_ = nn::Conv2d<T>(reg, "seg.pyramid.same", d, cs, 1, 1, 0, rng);
  down2_ = nn::Conv2d<T>(reg, "seg.pyramid.down2", d, cs, 3, 2, 1, rng);
  down4a_ = nn::Conv2d<T>(reg, "seg.pyramid.down4a", d, cs, 3, 2, 1, rng);
  down4b_ = nn::Conv2d<T>(reg, "seg.pyramid.down4b", cs, cs, 3, 2, 1, rng);
  for (int i = 0; i < 4; ++i) {
    level_proj_[i] = nn::Conv2d<T>(reg, "seg.decoder.linear" + std::to_string(i + 1), cs, cd, 1, 1, 0, rng);
  }
  fuse_hidden_ = nn::Conv2d<T>(reg, "seg.decoder.fuse1", 4 * cd, cd, 1, 1, 0, rng);
  fuse_out_ = nn::Conv2d<T>(reg, "seg.decoder.fuse2", cd, 1, 1, 1, 0, rng);
}

template <typename T>
FeaturePyramid<T> SegBranch<T>::feature_pyramid(const TokenGrid<T>& g) const {
  if (g.count() != static_cast<std::int64_t>(encoder_.num_patches()) || !g.is_full()) {
    throw std::invalid_argument("feature_pyramid: needs the full token grid from an unmasked pass, got " +
                                std::to_string(g.count()) + " tokens");
  }
  // (N, d) -> (d, gh, gw)
  const std::int64_t n = g.count(), d = g.dim();
  auto map2d = ag::reshape(ag::index_select(g.tokens, ag::transpose_map(n, d), {d, n}), {d, g.grid_h, g.grid_w});
  FeaturePyramid<T> fp;
  fp.levels[0] = up2_(map2d);
  fp.levels[1] = same_(map2d);
  fp.levels[2] = down2_(map2d);
  fp.levels[3] = down4b_(ag::gelu(down4a_(map2d)));
  return fp;
}

template <typename T>
PredictionMap<T> SegBranch<T>::mlp_decode(const FeaturePyramid<T>& fp) const {
  const std::int64_t out_h = encoder_.height / 4, out_w = encoder_.width / 4;
  std::vector<ag::Var<T>> unified;
  unified.reserve(4);
  for (int i = 0; i < 4; ++i) {
    auto projected = level_proj_[i](fp.levels[i]);
    if (projected.size(1) != out_h || projected.size(2) != out_w) {
      projected = ag::upsample_bilinear(projected, out_h, out_w);
    }
    unified.push_back(std::move(projected));
  }
  auto fused = fuse_out_(ag::gelu(fuse_hidden_(ag::concat0(unified))));
  return PredictionMap<T>{fused};
}

Mask max_pool_mask(const Mask& mask, int factor) {
  if (mask.height % factor != 0 || mask.width % factor != 0) {
    throw ConfigError("max_pool_mask: mask is not divisible by " + std::to_string(factor));
  }
  Mask out(mask.height / factor, mask.width / factor);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) out.at(y / factor, x / factor) = 1;
  return out;
}

template <typename T>
ag::Var<T> seg_loss(const PredictionMap<T>& p, const Mask& canvas_mask) {
  if (!canvas_mask.is_binary()) throw DataError("seg_loss: target is not binary");
  const int factor = canvas_mask.height / p.height();
  if (factor * p.height() != canvas_mask.height || factor * p.width() != canvas_mask.width) {
    throw std::invalid_argument("seg_loss: mask does not match prediction size");
  }
  const Mask pooled = factor == 1 ? canvas_mask : max_pool_mask(canvas_mask, factor);
  std::vector<T> target(pooled.data.begin(), pooled.data.end());
  auto t = ag::Var<T>::leaf({1, pooled.height, pooled.width}, std::move(target));
  return ag::bce_with_logits(p.logits, t);
}

std::vector<float> upsample_and_crop(const std::vector<float>& prob, int ph, int pw, int height, int width,
                                     Extent extent) {
  ag::NoGradGuard no_grad;
  auto src = ag::Var<float>::leaf({1, ph, pw}, prob);
  auto up = ag::upsample_bilinear(src, height, width);
  std::vector<float> out(static_cast<std::size_t>(extent.height) * extent.width);
  const auto v = up.data();
  for (int y = 0; y < extent.height; ++y)
    for (int x = 0; x < extent.width; ++x)
      out[static_cast<std::size_t>(y) * extent.width + x] = v[static_cast<std::size_t>(y) * width + x];
  return out;
}

template struct PredictionMap<float>;
template struct PredictionMap<double>;
template class SegBranch<float>;
template class SegBranch<double>;
template ag::Var<float> seg_loss(const PredictionMap<float>&, const Mask&);
template ag::Var<double> seg_loss(const PredictionMap<double>&, const Mask&);

}  // namespace tamperloc
