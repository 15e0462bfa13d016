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

#ifndef TAMPERLOC_CONFIG_HPP_
#define TAMPERLOC_CONFIG_HPP_

// Model and run configuration with presets and strict JSON round-tripping.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamperloc/data_pipeline.hpp"

namespace tamperloc {

struct EncoderConfig {
  int patch_size = 16;
  int embed_dim = 192;
  int depth = 4;
  int heads = 3;
  int window_size = 4;   // in patches
  int global_every = 2;  // every global_every-th block attends globally
  int mlp_ratio = 4;
  int height = 256;
  int width = 256;

  int grid_h() const { return height / patch_size; }
  int grid_w() const { return width / patch_size; }
  int num_patches() const { return grid_h() * grid_w(); }
  // 1-based block index b is global iff b % global_every == 0.
  bool is_global_block(int zero_based_index) const { return (zero_based_index + 1) % global_every == 0; }
  void validate() const;
};

struct SegConfig {
  int pyramid_channels = 64;  // C_S
  int decoder_channels = 64;  // C_D
};

struct ReconConfig {
  int decoder_dim = 128;
  int decoder_depth = 2;
  int decoder_heads = 4;
};

struct PerceptualConfig {
  std::array<int, 3> widths{16, 32, 64};  // channels of the conv1/conv2/conv3 stages
  std::uint64_t seed = 0x5EEDF00DULL;
  std::string weights_path;  // optional external weights; empty = seeded stack
};

struct ModelConfig {
  EncoderConfig encoder;
  SegConfig seg;
  ReconConfig recon;
  PerceptualConfig perceptual;
  int edge_radius = 2;

  static ModelConfig desk();
  static ModelConfig paper();
  // 32x32 double-precision gradient-check model.
  static ModelConfig tiny();
  void validate() const;
};

enum class ScalePreset { kDesk, kPaper };

struct TrainConfig {
  double lambda = 0.01;
  double base_lr = 1e-4;
  int epochs = 1;
  int batch_size = 1;
  double mask_ratio = 0.75;
  int early_stop_patience = 5;
  std::uint64_t seed = 0;
  ScalePreset scale_preset = ScalePreset::kDesk;
  int max_steps = 0;  // 0 = epochs * manifest size / batch
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double warmup_fraction = 0.05;
  double clip_norm = 1.0;
  int eval_every = 0;  // steps between early-stop evaluations; 0 = per epoch

  void validate() const;
};

struct EvalConfig {
  double threshold = 0.5;
  std::vector<data::DistortionSpec> distortions;  // empty = default sweep
};

struct RunConfig {
  ModelConfig model = ModelConfig::desk();
  TrainConfig train;
  data::AugmentConfig augment;
  EvalConfig eval;
  std::string init_checkpoint;  // optional pretrained encoder container

  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
// Rejects unknown keys, reporting the offending field path.
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);
// Applies "a.b.c=value" or unique-suffix "c=value" overrides.
RunConfig apply_overrides(const RunConfig& config, const std::vector<std::string>& overrides);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& doc);

}  // namespace tamperloc

#endif  // TAMPERLOC_CONFIG_HPP_
