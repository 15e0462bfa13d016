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

#ifndef TAMPERLOC_TRAINER_HPP_
#define TAMPERLOC_TRAINER_HPP_

// Joint optimization of both branches, the learning-rate schedule, early
// stopping, checkpoint/resume and a small MAE pretraining loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamperloc/checkpoint.hpp"
#include "tamperloc/config.hpp"
#include "tamperloc/data_pipeline.hpp"
#include "tamperloc/model.hpp"
#include "tamperloc/optim.hpp"

namespace tamperloc {

// l_seg + lambda * l_rec; throws NumericalError on non-finite input.
double combined_loss(double l_seg, double l_rec, double lambda);

// Linear warmup to base_lr over `warmup_steps`, then cosine decay to 0 at
// `total_steps`.
double lr_schedule(std::int64_t step, std::int64_t total_steps, double base_lr, std::int64_t warmup_steps);

// True iff the best score is more than `patience` evaluations old.
bool early_stop(const std::vector<double>& history, int patience);

struct StepReport {
  std::int64_t step = 0;
  double l_seg = 0.0;
  double l_rec_1_2 = 0.0;
  double l_rec_2_2 = 0.0;
  double l_rec_3_2 = 0.0;
  double l_rec = 0.0;
  double combined = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;

  nlohmann::json to_json() const;
  bool operator==(const StepReport&) const = default;
};

// The single scalar L = L_seg + lambda * L_rec for one sample, as one graph.
// Used as the reference for the sequential accumulation in the trainer.
template <typename T>
ag::Var<T> combined_loss_graph(const PmaeModel<T>& model, const data::PaddedSample& sample, double lambda,
                               double mask_ratio, std::uint64_t mask_seed);

template <typename T>
class Trainer {
 public:
  Trainer(PmaeModel<T>& model, const TrainConfig& config, std::int64_t total_steps);

  // Runs the segmentation and reconstruction passes for every sample and
  // backpropagates each separately, accumulating into the parameter
  // gradients. Leaves the gradients in place; no update.
  StepReport accumulate_gradients(const std::vector<data::PaddedSample>& batch);
  // accumulate_gradients, clip, one optimizer update, clear gradients.
  StepReport train_step(const std::vector<data::PaddedSample>& batch);

  std::int64_t step() const { return step_; }
  std::int64_t total_steps() const { return total_steps_; }
  std::int64_t warmup_steps() const;
  std::uint64_t masking_seed(std::int64_t step, std::size_t sample_index) const;
  PmaeModel<T>& model() { return model_; }
  const TrainConfig& config() const { return config_; }

  void save_state(TensorContainer& container) const;
  void load_state(const TensorContainer& container);
  void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
  void load_checkpoint(const std::filesystem::path& path);

 private:
  PmaeModel<T>& model_;
  TrainConfig config_;
  std::int64_t total_steps_;
  std::int64_t step_ = 0;
  AdamW<T> optimizer_;
};

// Steps per pass over `n` samples.
std::int64_t steps_per_epoch(std::size_t n, int batch_size);
std::int64_t planned_steps(const TrainConfig& config, std::size_t n);

// Sample indices used at global step `step`: one seeded permutation per
// epoch, consumed batch by batch.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t n, int batch_size, std::int64_t step);

struct FitOptions {
  std::optional<std::filesystem::path> metric_log;  // line-delimited records
  std::function<void(const StepReport&)> on_step;
};

struct FitResult {
  std::vector<StepReport> reports;
  std::vector<double> eval_history;
  bool stopped_early = false;
};

// Trains from trainer.step() to trainer.total_steps(). With `validation`,
// scores it every `eval_every` steps (or once per epoch) and stops early.
template <typename T>
FitResult fit(Trainer<T>& trainer, const std::vector<data::RawSample>& train,
              const std::vector<data::RawSample>* validation, const data::AugmentConfig& augment,
              const FitOptions& options = {});

struct PretrainConfig {
  int steps = 500;
  double base_lr = 1.5e-4;
  double mask_ratio = 0.75;
  std::uint64_t seed = 0;
  double weight_decay = 0.05;
  double warmup_fraction = 0.05;
};

struct PretrainResult {
  TensorContainer checkpoint;  // "encoder.*" tensors plus metadata
  std::vector<double> loss_history;
};

// Per-patch pixel MSE averaged over the masked patches only.
template <typename T>
ag::Var<T> mae_masked_loss(const ag::Var<T>& pred, const std::vector<T>& target, const MaskingPlan& plan);

// Pretrains an encoder plus a throwaway decoder on unlabeled images.
PretrainResult toy_mae_pretrain(const std::vector<Image>& corpus, const ModelConfig& model,
                                const PretrainConfig& config);

}  // namespace tamperloc

#endif  // TAMPERLOC_TRAINER_HPP_
