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

#include "tamperloc/vit_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "tamperloc/errors.hpp"

namespace tamperloc {

MaskingPlan make_masking_plan(int total, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("mask ratio must lie in (0, 1), got " + std::to_string(ratio));
  const int n_masked = static_cast<int>(std::lround(ratio * total));
  if (n_masked >= total) throw ConfigError("mask ratio leaves no visible patch");
  std::vector<std::int32_t> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the plan does not depend on the
  // standard library's shuffle implementation.
  for (int i = total - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  MaskingPlan plan{ratio, seed, total, {}, {}};
  plan.masked.assign(order.begin(), order.begin() + n_masked);
  plan.kept.assign(order.begin() + n_masked, order.end());
  std::sort(plan.masked.begin(), plan.masked.end());
  std::sort(plan.kept.begin(), plan.kept.end());
  return plan;
}

template <typename T>
std::vector<T> patchify(const Image& image, int p) {
  if (image.height % p != 0 || image.width % p != 0) {
    throw ConfigError("patchify: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                      " is not divisible by patch size " + std::to_string(p));
  }
  const int gh = image.height / p, gw = image.width / p;
  const int len = 3 * p * p;
  std::vector<T> out(static_cast<std::size_t>(gh) * gw * len);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      T* row = out.data() + static_cast<std::size_t>(gy * gw + gx) * len;
      for (int c = 0; c < 3; ++c)
        for (int dy = 0; dy < p; ++dy)
          for (int dx = 0; dx < p; ++dx) row[(c * p + dy) * p + dx] = static_cast<T>(image.at(c, gy * p + dy, gx * p + dx));
    }
  return out;
}

std::shared_ptr<const ag::TokenGroups> window_groups(int grid_h, int grid_w, int window) {
  auto groups = std::make_shared<ag::TokenGroups>();
  const int wh = grid_h / window, ww = grid_w / window;
  groups->resize(static_cast<std::size_t>(wh) * ww);
  for (int y = 0; y < grid_h; ++y)
    for (int x = 0; x < grid_w; ++x) (*groups)[(y / window) * ww + x / window].push_back(y * grid_w + x);
  return groups;
}

std::shared_ptr<const ag::TokenGroups> global_group(int count) {
  auto groups = std::make_shared<ag::TokenGroups>(1);
  (*groups)[0].resize(static_cast<std::size_t>(count));
  std::iota((*groups)[0].begin(), (*groups)[0].end(), 0);
  return groups;
}

template <typename T>
VitEncoder<T>::VitEncoder(nn::Registry<T>& reg, const EncoderConfig& config, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  const int p = config_.patch_size;
  const std::int64_t dim = config_.embed_dim;
  proj_ = nn::Linear<T>(reg, "encoder.patch_embed.proj", 3 * p * p, dim, rng);
  const auto table = nn::sincos_2d_table(dim, config_.grid_h(), config_.grid_w());
  pos_embed_ = reg.buffer("encoder.pos_embed", {config_.num_patches(), dim}, std::vector<T>(table.begin(), table.end()));
  for (int b = 0; b < config_.depth; ++b) {
    blocks_.emplace_back(reg, "encoder.blocks." + std::to_string(b), dim, config_.heads, config_.mlp_ratio, rng);
  }
  norm_ = nn::LayerNorm<T>(reg, "encoder.norm", dim);
  windows_ = window_groups(config_.grid_h(), config_.grid_w(), config_.window_size);
  global_ = global_group(config_.num_patches());
}

template <typename T>
TokenGrid<T> VitEncoder<T>::patch_embed(const Image& image) const {
  if (image.height != config_.height || image.width != config_.width) {
    throw ConfigError("patch_embed: expected a " + std::to_string(config_.height) + "x" +
                      std::to_string(config_.width) + " canvas, got " + std::to_string(image.height) + "x" +
                      std::to_string(image.width));
  }
  const int p = config_.patch_size;
  auto patches = ag::Var<T>::leaf({config_.num_patches(), 3 * p * p}, patchify<T>(image, p));
  return TokenGrid<T>{ag::add(proj_(patches), pos_embed_), config_.grid_h(), config_.grid_w()};
}

template <typename T>
TokenGrid<T> VitEncoder<T>::run_blocks(const TokenGrid<T>& tokens, bool masked_pass) const {
  ag::Var<T> x = tokens.tokens;
  auto kept_global = masked_pass ? global_group(static_cast<int>(tokens.count())) : global_;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const bool global = masked_pass || config_.is_global_block(static_cast<int>(b));
    x = blocks_[b](x, global ? kept_global : windows_);
  }
  return TokenGrid<T>{norm_(x), tokens.grid_h, tokens.grid_w};
}

template <typename T>
TokenGrid<T> VitEncoder<T>::encode(const TokenGrid<T>& tokens) const {
  if (!tokens.is_full()) throw std::invalid_argument("encode: expected a full token grid");
  return run_blocks(tokens, /*masked_pass=*/false);
}

template <typename T>
std::pair<TokenGrid<T>, MaskingPlan> VitEncoder<T>::random_mask(const TokenGrid<T>& tokens, double ratio,
                                                                std::uint64_t seed) const {
  if (!tokens.is_full()) throw std::invalid_argument("random_mask: expected a full token grid");
  MaskingPlan plan = make_masking_plan(static_cast<int>(tokens.count()), ratio, seed);
  auto kept = ag::index_select(tokens.tokens, ag::row_gather_map(plan.kept, tokens.dim()),
                               {static_cast<std::int64_t>(plan.kept.size()), tokens.dim()});
  return {TokenGrid<T>{kept, tokens.grid_h, tokens.grid_w}, std::move(plan)};
}

template <typename T>
std::pair<TokenGrid<T>, MaskingPlan> VitEncoder<T>::encode_masked(const Image& image, double ratio,
                                                                  std::uint64_t seed) const {
  auto [kept, plan] = random_mask(patch_embed(image), ratio, seed);
  return {run_blocks(kept, /*masked_pass=*/true), std::move(plan)};
}

template <typename T>
void VitEncoder<T>::zero_positional_encoding() {
  auto data = pos_embed_.mutable_data();
  std::fill(data.begin(), data.end(), T(0));
}

template std::vector<float> patchify<float>(const Image&, int);
template std::vector<double> patchify<double>(const Image&, int);
template class VitEncoder<float>;
template class VitEncoder<double>;

}  // namespace tamperloc
