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

#include "tamperloc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "tamperloc/errors.hpp"
#include "tamperloc/eval_harness.hpp"
#include "tamperloc/rng.hpp"

namespace tamperloc {

double combined_loss(double l_seg, double l_rec, double lambda) {
  if (!std::isfinite(l_seg) || !std::isfinite(l_rec) || !std::isfinite(lambda)) {
    std::ostringstream os;
    os << "non-finite loss: l_seg=" << l_seg << " l_rec=" << l_rec << " lambda=" << lambda;
    throw NumericalError(os.str());
  }
  return l_seg + lambda * l_rec;
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, double base_lr, std::int64_t warmup_steps) {
  if (step < 0 || step > total_steps) throw std::invalid_argument("lr_schedule: step outside [0, total_steps]");
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (total_steps <= warmup_steps) return base_lr;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

bool early_stop(const std::vector<double>& history, int patience) {
  if (history.empty()) throw std::invalid_argument("early_stop: empty history");
  const auto best = static_cast<std::int64_t>(std::max_element(history.begin(), history.end()) - history.begin());
  return best < static_cast<std::int64_t>(history.size()) - patience;
}

nlohmann::json StepReport::to_json() const {
  return {{"step", step},
          {"l_seg", l_seg},
          {"l_rec", {{"loss_1_2", l_rec_1_2}, {"loss_2_2", l_rec_2_2}, {"loss_3_2", l_rec_3_2}, {"total", l_rec}}},
          {"combined", combined},
          {"lr", lr},
          {"grad_norm", grad_norm}};
}

template <typename T>
ag::Var<T> combined_loss_graph(const PmaeModel<T>& model, const data::PaddedSample& sample, double lambda,
                               double mask_ratio, std::uint64_t mask_seed) {
  auto seg = model.seg_forward(sample);
  auto rec = model.recon_step(sample, mask_ratio, mask_seed);
  return ag::add(seg.loss, ag::scale(rec.graph, static_cast<T>(lambda)));
}

template <typename T>
Trainer<T>::Trainer(PmaeModel<T>& model, const TrainConfig& config, std::int64_t total_steps)
    : model_(model),
      config_(config),
      total_steps_(total_steps),
      optimizer_(AdamWConfig{config.beta1, config.beta2, 1e-8, config.weight_decay}) {
  config_.validate();
  if (total_steps_ <= 0) throw ConfigError("train: total steps must be positive");
}

template <typename T>
std::int64_t Trainer<T>::warmup_steps() const {
  return static_cast<std::int64_t>(std::floor(config_.warmup_fraction * static_cast<double>(total_steps_)));
}

template <typename T>
std::uint64_t Trainer<T>::masking_seed(std::int64_t step, std::size_t sample_index) const {
  return derive_seed(config_.seed, SeedStream::kMasking,
                     static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(config_.batch_size) + sample_index);
}

namespace {

template <typename T>
void check_shared_encoder(const std::vector<std::pair<std::string, ag::Var<T>>>& params,
                          const std::unordered_set<const ag::Node<T>*>& seg_leaves,
                          const std::unordered_set<const ag::Node<T>*>& rec_leaves) {
  for (const auto& [name, v] : params) {
    if (param_group(name) != ParamGroup::kEncoder) continue;
    if (!seg_leaves.contains(v.node()) || !rec_leaves.contains(v.node())) {
      throw std::logic_error("encoder parameter " + name + " is not shared by both passes");
    }
  }
}

}  // namespace

template <typename T>
StepReport Trainer<T>::accumulate_gradients(const std::vector<data::PaddedSample>& batch) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const auto& params = model_.registry().parameters();
  const T inv_b = T(1) / static_cast<T>(batch.size());
  const bool with_recon = config_.lambda > 0.0;
  StepReport report;
  report.step = step_;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto seg = model_.seg_forward(batch[i]);
    const double l_seg = static_cast<double>(seg.loss.item());
    if (!std::isfinite(l_seg)) {
      throw NumericalError("segmentation loss is " + std::to_string(l_seg) + " at step " + std::to_string(step_) +
                           ", sample " + std::to_string(i));
    }
    ReconLossBreakdown<T> rec;
    if (with_recon) {
      rec = model_.recon_step(batch[i], config_.mask_ratio, masking_seed(step_, i));
      if (!std::isfinite(static_cast<double>(rec.total))) {
        throw NumericalError("reconstruction loss is " + std::to_string(static_cast<double>(rec.total)) +
                             " at step " + std::to_string(step_) + ", sample " + std::to_string(i));
      }
      if (!rec.graph.node()->is_leaf()) {
        check_shared_encoder(params, reachable_leaves(seg.loss), reachable_leaves(rec.graph));
      }
    }
    ag::backward(seg.loss, inv_b);
    if (with_recon && !rec.graph.node()->is_leaf()) {
      ag::backward(rec.graph, static_cast<T>(config_.lambda) * inv_b);
    }
    report.l_seg += l_seg;
    report.l_rec_1_2 += static_cast<double>(rec.loss_1_2);
    report.l_rec_2_2 += static_cast<double>(rec.loss_2_2);
    report.l_rec_3_2 += static_cast<double>(rec.loss_3_2);
    report.l_rec += static_cast<double>(rec.total);
  }
  const double b = static_cast<double>(batch.size());
  report.l_seg /= b;
  report.l_rec_1_2 /= b;
  report.l_rec_2_2 /= b;
  report.l_rec_3_2 /= b;
  report.l_rec /= b;
  report.combined = combined_loss(report.l_seg, report.l_rec, config_.lambda);
  return report;
}

template <typename T>
StepReport Trainer<T>::train_step(const std::vector<data::PaddedSample>& batch) {
  if (step_ >= total_steps_) throw std::logic_error("train_step: schedule exhausted");
  StepReport report = accumulate_gradients(batch);
  const auto& params = model_.registry().parameters();
  report.grad_norm = clip_grad_norm(params, config_.clip_norm);
  if (!std::isfinite(report.grad_norm)) {
    model_.registry().clear_grads();
    throw NumericalError("gradient norm is " + std::to_string(report.grad_norm) + " at step " +
                         std::to_string(step_));
  }
  report.lr = lr_schedule(step_, total_steps_, config_.base_lr, warmup_steps());
  optimizer_.step(params, report.lr);
  model_.registry().clear_grads();
  ++step_;
  return report;
}

template <typename T>
void Trainer<T>::save_state(TensorContainer& container) const {
  model_.save_to(container);
  optimizer_.save_to(container);
  container.metadata["step"] = step_;
  container.metadata["total_steps"] = total_steps_;
}

template <typename T>
void Trainer<T>::load_state(const TensorContainer& container) {
  model_.load_from(container);
  optimizer_.load_from(container);
  const auto& md = container.metadata;
  if (!md.contains("step") || !md.contains("total_steps")) throw DataError("checkpoint has no trainer state");
  step_ = md.at("step").get<std::int64_t>();
  if (md.at("total_steps").get<std::int64_t>() != total_steps_) {
    throw ConfigError("checkpoint was written for " + md.at("total_steps").dump() + " total steps, run plans " +
                      std::to_string(total_steps_));
  }
}

template <typename T>
void Trainer<T>::save_checkpoint(const std::filesystem::path& path, const nlohmann::json& extra) const {
  TensorContainer container;
  save_state(container);
  if (extra.is_object()) {
    for (const auto& [k, v] : extra.items()) container.metadata[k] = v;
  }
  write_container(path, container);
}

template <typename T>
void Trainer<T>::load_checkpoint(const std::filesystem::path& path) {
  load_state(read_container(path));
}

std::int64_t steps_per_epoch(std::size_t n, int batch_size) {
  if (n == 0) throw DataError("training set is empty");
  return static_cast<std::int64_t>((n + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size));
}

std::int64_t planned_steps(const TrainConfig& config, std::size_t n) {
  if (config.max_steps > 0) return config.max_steps;
  return static_cast<std::int64_t>(config.epochs) * steps_per_epoch(n, config.batch_size);
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t n, int batch_size, std::int64_t step) {
  const std::int64_t spe = steps_per_epoch(n, batch_size);
  const std::int64_t epoch = step / spe;
  const std::int64_t slot = step % spe;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(derive_seed(seed, SeedStream::kDataOrder, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  const std::size_t begin = static_cast<std::size_t>(slot) * static_cast<std::size_t>(batch_size);
  const std::size_t end = std::min(n, begin + static_cast<std::size_t>(batch_size));
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

template <typename T>
FitResult fit(Trainer<T>& trainer, const std::vector<data::RawSample>& train,
              const std::vector<data::RawSample>* validation, const data::AugmentConfig& augment,
              const FitOptions& options) {
  const auto& cfg = trainer.config();
  const auto& enc = trainer.model().config().encoder;
  const std::int64_t spe = steps_per_epoch(train.size(), cfg.batch_size);
  const std::int64_t eval_every = cfg.eval_every > 0 ? cfg.eval_every : spe;
  std::ofstream log;
  if (options.metric_log) {
    if (options.metric_log->has_parent_path()) std::filesystem::create_directories(options.metric_log->parent_path());
    log.open(*options.metric_log, trainer.step() > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw DataError("cannot write " + options.metric_log->string());
  }
  FitResult result;
  while (trainer.step() < trainer.total_steps()) {
    const std::int64_t s = trainer.step();
    const auto indices = batch_indices(cfg.seed, train.size(), cfg.batch_size, s);
    std::vector<data::PaddedSample> batch;
    batch.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const auto aug_seed = derive_seed(cfg.seed, SeedStream::kAugment,
                                        static_cast<std::uint64_t>(s) * static_cast<std::uint64_t>(cfg.batch_size) + i);
      batch.push_back(data::prepare(data::augment(train[indices[i]], aug_seed, augment), enc.height, enc.width));
    }
    const auto report = trainer.train_step(batch);
    result.reports.push_back(report);
    if (log) {
      auto rec = report.to_json();
      rec["kind"] = "step";
      log << rec.dump() << '\n';
    }
    if (options.on_step) options.on_step(report);
    if (validation && !validation->empty() && trainer.step() % eval_every == 0) {
      EvalConfig ec;
      const auto ev = eval::evaluate(trainer.model(), *validation, ec, "validation");
      result.eval_history.push_back(ev.f1);
      if (log) {
        auto rec = ev.to_json();
        rec["kind"] = "eval";
        rec["step"] = trainer.step();
        log << rec.dump() << '\n';
      }
      if (early_stop(result.eval_history, cfg.early_stop_patience)) {
        result.stopped_early = true;
        break;
      }
    }
  }
  return result;
}

template <typename T>
ag::Var<T> mae_masked_loss(const ag::Var<T>& pred, const std::vector<T>& target, const MaskingPlan& plan) {
  const std::int64_t cols = pred.size(1);
  if (static_cast<std::int64_t>(target.size()) != pred.numel()) throw std::invalid_argument("mae_masked_loss: size");
  if (plan.masked.empty()) return ag::Var<T>::scalar(T(0));
  const auto rows = static_cast<std::int64_t>(plan.masked.size());
  const auto map = ag::row_gather_map(plan.masked, cols);
  std::vector<T> picked;
  picked.reserve(static_cast<std::size_t>(rows * cols));
  for (auto r : plan.masked) {
    const auto* row = target.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols);
    picked.insert(picked.end(), row, row + cols);
  }
  auto pred_rows = ag::index_select(pred, map, {rows, cols});
  return ag::mse(pred_rows, ag::Var<T>::leaf({rows, cols}, std::move(picked)));
}

PretrainResult toy_mae_pretrain(const std::vector<Image>& corpus, const ModelConfig& model,
                                const PretrainConfig& config) {
  if (corpus.empty()) throw DataError("pretrain: corpus is empty");
  if (config.steps <= 0) throw ConfigError("pretrain.steps: must be positive");
  if (!(config.mask_ratio > 0.0 && config.mask_ratio < 1.0)) throw ConfigError("pretrain.mask_ratio: must be in (0,1)");
  model.validate();
  const auto& ec = model.encoder;
  nn::Registry<float> reg;
  std::mt19937_64 rng(derive_seed(config.seed, SeedStream::kInit));
  VitEncoder<float> encoder(reg, ec, rng);
  ReconDecoder<float> decoder(reg, "mae_decoder", ec, model.recon, rng);
  AdamW<float> optimizer(AdamWConfig{0.9, 0.95, 1e-8, config.weight_decay});
  const auto warmup = static_cast<std::int64_t>(std::floor(config.warmup_fraction * config.steps));

  std::vector<Image> canvases;
  std::vector<std::vector<float>> targets;
  canvases.reserve(corpus.size());
  for (const auto& img : corpus) {
    auto padded = data::prepare(data::RawSample{img, Mask(img.height, img.width)}, ec.height, ec.width);
    targets.push_back(patchify<float>(padded.image, ec.patch_size));
    canvases.push_back(std::move(padded.image));
  }

  PretrainResult result;
  for (int s = 0; s < config.steps; ++s) {
    const auto idx = batch_indices(config.seed, corpus.size(), 1, s).front();
    auto [kept, plan] = encoder.encode_masked(canvases[idx], config.mask_ratio,
                                              derive_seed(config.seed, SeedStream::kMasking, static_cast<std::uint64_t>(s)));
    auto loss = mae_masked_loss(decoder.decode_tokens(kept, plan), targets[idx], plan);
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericalError("pretrain loss is non-finite at step " + std::to_string(s));
    result.loss_history.push_back(value);
    ag::backward(loss);
    clip_grad_norm(reg.parameters(), 1.0);
    optimizer.step(reg.parameters(), lr_schedule(s, config.steps, config.base_lr, warmup));
    reg.clear_grads();
  }
  for (const auto& [name, v] : reg.all()) {
    if (name.starts_with("encoder.")) result.checkpoint.put(name, v);
  }
  result.checkpoint.metadata["model"] = to_json(model);
  result.checkpoint.metadata["pretrain_steps"] = config.steps;
  return result;
}

#define TAMPERLOC_INSTANTIATE_TRAINER(T)                                                                      \
  template ag::Var<T> combined_loss_graph(const PmaeModel<T>&, const data::PaddedSample&, double, double,    \
                                          std::uint64_t);                                                    \
  template class Trainer<T>;                                                                                 \
  template FitResult fit(Trainer<T>&, const std::vector<data::RawSample>&, const std::vector<data::RawSample>*, \
                         const data::AugmentConfig&, const FitOptions&);                                     \
  template ag::Var<T> mae_masked_loss(const ag::Var<T>&, const std::vector<T>&, const MaskingPlan&);

TAMPERLOC_INSTANTIATE_TRAINER(float)
TAMPERLOC_INSTANTIATE_TRAINER(double)

}  // namespace tamperloc
