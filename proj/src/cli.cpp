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

#include "tamperloc/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>

#include "tamperloc/checkpoint.hpp"
#include "tamperloc/config.hpp"
#include "tamperloc/data_pipeline.hpp"
#include "tamperloc/errors.hpp"
#include "tamperloc/eval_harness.hpp"
#include "tamperloc/mask_ops.hpp"
#include "tamperloc/model.hpp"
#include "tamperloc/rng.hpp"
#include "tamperloc/trainer.hpp"

namespace tamperloc::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out = "tamperloc_out";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON run configuration");
  sub->add_option("--override", c.overrides, "key=value (full dotted path or unique suffix); repeatable");
  sub->add_option("--seed", c.seed, "base seed for every random draw (overrides train.seed)");
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
}

RunConfig resolve(const Common& c) {
  RunConfig rc = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  rc = apply_overrides(rc, c.overrides);
  if (c.seed) rc.train.seed = *c.seed;
  rc.validate();
  return rc;
}

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << doc.dump(2) << '\n';
}

void snapshot(const fs::path& out, const std::string& command, const RunConfig& rc) {
  write_json(out / "resolved_config.json", {{"command", command}, {"config", to_json(rc)}});
}

std::vector<data::RawSample> load_samples(const fs::path& manifest_path, std::ostream& out) {
  const auto manifest = data::load_manifest(manifest_path);
  out << manifest_path.string() << ": " << manifest.summary() << '\n';
  std::vector<data::RawSample> samples;
  samples.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) samples.push_back(data::load_sample(e));
  return samples;
}

std::unique_ptr<PmaeModel<float>> load_model(const fs::path& path) {
  const auto container = read_container(path);
  if (!container.metadata.contains("model")) throw DataError(path.string() + " carries no model configuration");
  auto model = std::make_unique<PmaeModel<float>>(model_config_from_json(container.metadata.at("model")), 0);
  model->load_from(container);
  return model;
}

std::string lambda_tag(double lambda) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", lambda);
  return std::string("lambda_") + buf;
}

Image var_to_image(const ag::Var<float>& v, int height, int width, Extent extent) {
  Image img(extent.height, extent.width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < extent.height; ++y)
      for (int x = 0; x < extent.width; ++x) {
        const float value = v.data()[(static_cast<std::size_t>(c) * height + y) * width + x];
        img.at(c, y, x) = std::clamp(value, 0.0f, 1.0f);
      }
  return img;
}

int cmd_synth(const Common& c, int n, int size, std::ostream& out) {
  const auto rc = resolve(c);
  if (n <= 0) throw ConfigError("synth.n: must be positive");
  if (size < 32) throw ConfigError("synth.size: must be at least 32");
  const fs::path dir(c.out);
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  const auto samples = data::synthetic_dataset(static_cast<std::size_t>(n), size, size, rc.train.seed);
  data::DatasetManifest manifest;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "%05zu.png", i);
    const auto img = dir / "images" / stem;
    const auto msk = dir / "masks" / stem;
    write_image(img, samples[i].image);
    write_mask(msk, samples[i].mask);
    manifest.entries.push_back({img, msk, data::Label::kManipulated});
  }
  data::save_manifest(dir / "manifest.jsonl", manifest);
  snapshot(dir, "synth", rc);
  out << "wrote " << n << " samples to " << (dir / "manifest.jsonl").string() << '\n';
  return kExitOk;
}

int cmd_pretrain(const Common& c, const std::string& manifest, int steps, double lr, std::ostream& out) {
  const auto rc = resolve(c);
  const fs::path dir(c.out);
  snapshot(dir, "pretrain", rc);
  std::vector<Image> corpus;
  for (auto& s : load_samples(manifest, out)) corpus.push_back(std::move(s.image));
  PretrainConfig pc;
  pc.steps = steps;
  pc.base_lr = lr;
  pc.mask_ratio = rc.train.mask_ratio;
  pc.seed = rc.train.seed;
  const auto result = toy_mae_pretrain(corpus, rc.model, pc);
  std::vector<json> records;
  for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
    records.push_back({{"step", i}, {"mae_loss", result.loss_history[i]}});
  }
  eval::write_records(dir / "pretrain_log.jsonl", records);
  write_container(dir / "pretrained.ckpt", result.checkpoint);
  out << "pretrain: " << steps << " steps, final masked-patch loss " << result.loss_history.back() << '\n';
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& manifest, const std::string& val_manifest,
              const std::string& resume, bool sweep, std::ostream& out) {
  const auto base = resolve(c);
  const fs::path root(c.out);
  snapshot(root, "train", base);
  const auto train = load_samples(manifest, out);
  std::vector<data::RawSample> val;
  if (!val_manifest.empty()) val = load_samples(val_manifest, out);
  const std::vector<double> lambdas = sweep ? std::vector<double>{1.0, 0.1, 0.01, 0.001}
                                            : std::vector<double>{base.train.lambda};
  if (sweep && !resume.empty()) throw ConfigError("train: --resume cannot be combined with --lambda-sweep");
  for (double lambda : lambdas) {
    RunConfig rc = base;
    rc.train.lambda = lambda;
    const fs::path dir = sweep ? root / lambda_tag(lambda) : root;
    if (sweep) snapshot(dir, "train", rc);
    PmaeModel<float> model(rc.model, rc.train.seed);
    if (!rc.init_checkpoint.empty()) {
      const auto report = model.load_pretrained_encoder(read_container(rc.init_checkpoint));
      out << "pretrained encoder: " << report.loaded.size() << " loaded, " << report.interpolated.size()
          << " resampled, " << report.missing.size() << " missing\n";
    }
    Trainer<float> trainer(model, rc.train, planned_steps(rc.train, train.size()));
    if (!resume.empty()) {
      trainer.load_checkpoint(resume);
      out << "resumed at step " << trainer.step() << '\n';
    }
    FitOptions options;
    options.metric_log = dir / "metrics.jsonl";
    const auto result = fit(trainer, train, val.empty() ? nullptr : &val, rc.augment, options);
    trainer.save_checkpoint(dir / "checkpoint.ckpt", {{"run", to_json(rc)}});
    out << lambda_tag(lambda) << ": " << trainer.step() << "/" << trainer.total_steps() << " steps";
    if (!result.reports.empty()) out << ", final combined loss " << result.reports.back().combined;
    if (result.stopped_early) out << ", stopped early";
    out << '\n';
  }
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& manifest, std::ostream& out) {
  const auto rc = resolve(c);
  const fs::path dir(c.out);
  snapshot(dir, "eval", rc);
  const auto model = load_model(checkpoint);
  const auto result = eval::evaluate(*model, load_samples(manifest, out), rc.eval, fs::path(manifest).stem().string());
  eval::write_records(dir / "eval.jsonl", {result.to_json()});
  out << "pixel F1 " << result.f1 << "  pixel AUC " << result.auc << "  (" << result.n_images << " images, "
      << result.n_auc_images << " with both classes)\n";
  return kExitOk;
}

int cmd_robustness(const Common& c, const std::string& checkpoint, const std::string& manifest, bool plot,
                   std::ostream& out) {
  const auto rc = resolve(c);
  const fs::path dir(c.out);
  snapshot(dir, "robustness", rc);
  const auto model = load_model(checkpoint);
  const auto rows = eval::robustness_sweep(*model, load_samples(manifest, out), rc.eval.distortions, rc.eval);
  std::vector<json> records;
  for (const auto& r : rows) records.push_back(r.to_json());
  eval::write_records(dir / "robustness.jsonl", records);
  const auto table = eval::render_table(rows);
  std::ofstream(dir / "robustness.txt") << table;
  if (plot) eval::write_bar_plot(dir / "robustness.png", rows);
  out << table;
  return kExitOk;
}

int cmd_predict(const Common& c, const std::string& checkpoint, const std::vector<std::string>& images,
                bool overlay, bool dump_recon, std::ostream& out) {
  const auto rc = resolve(c);
  const fs::path dir(c.out);
  snapshot(dir, "predict", rc);
  const auto model = load_model(checkpoint);
  const auto& enc = model->config().encoder;
  for (const auto& path : images) {
    const Image raw = read_image(path);
    Extent extent;
    const auto prob = eval::predict_probability(*model, raw, &extent);
    const std::string stem = fs::path(path).stem().string();
    write_probability(dir / (stem + "_prob.png"), prob, extent.height, extent.width);
    const auto padded = data::prepare(data::RawSample{raw, Mask(raw.height, raw.width)}, enc.height, enc.width);
    if (overlay) {
      const auto scaled = data::crop_to_extent(padded).image;
      write_image(dir / (stem + "_overlay.png"), eval::overlay(scaled, prob));
    }
    if (dump_recon) {
      ag::NoGradGuard no_grad;
      auto [kept, plan] = model->encoder().encode_masked(padded.image, rc.train.mask_ratio,
                                                         derive_seed(rc.train.seed, SeedStream::kMasking));
      const auto recon = model->recon().decode_reconstruction(kept, plan);
      write_image(dir / (stem + "_reconstruction.png"), var_to_image(recon.image, enc.height, enc.width, extent));
    }
    out << path << " -> " << (dir / (stem + "_prob.png")).string() << '\n';
  }
  return kExitOk;
}

int cmd_inspect_masks(const Common& c, const std::vector<std::string>& mask_paths, int radius, std::ostream& out) {
  const auto rc = resolve(c);
  const fs::path dir(c.out);
  snapshot(dir, "inspect-masks", rc);
  const int r = radius > 0 ? radius : rc.model.edge_radius;
  const auto& enc = rc.model.encoder;
  for (const auto& path : mask_paths) {
    const Mask mask = read_mask(path);
    const auto padded = data::prepare(data::RawSample{Image(mask.height, mask.width), mask}, enc.height, enc.width);
    const auto edge = masks::edge_mask(padded.mask, r);
    const auto patch = masks::patch_edge_mask(edge, enc.patch_size);
    const std::string stem = fs::path(path).stem().string();
    write_mask(dir / (stem + "_edge.png"), edge.grid);
    write_mask(dir / (stem + "_patch_edge.png"), patch.grid);
    out << path << ": " << edge.grid.count() << " edge pixels, " << patch.grid.count() / (enc.patch_size * enc.patch_size)
        << " edge patches\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tamper localization with a shared ViT encoder and a reconstruction side branch", "tamperloc"};
  app.require_subcommand(1);

  Common common;
  int n = 0, size = 256, steps = 500, radius = 0;
  double lr = 1.5e-4;
  std::string manifest, val_manifest, checkpoint, resume;
  std::vector<std::string> images, mask_paths;
  bool sweep = false, plot = false, overlay = false, dump_recon = false;

  auto* synth = app.add_subcommand("synth", "render synthetic tampered images, masks and a manifest");
  add_common(synth, common);
  synth->add_option("--n", n, "number of samples")->required();
  synth->add_option("--size", size, "image side in pixels")->capture_default_str();

  auto* pretrain = app.add_subcommand("pretrain", "masked-autoencoder pretraining of the encoder");
  add_common(pretrain, common);
  pretrain->add_option("--manifest", manifest, "images to pretrain on")->required();
  pretrain->add_option("--steps", steps, "optimizer steps")->capture_default_str();
  pretrain->add_option("--lr", lr, "base learning rate")->capture_default_str();

  auto* train = app.add_subcommand("train", "joint training of both branches");
  add_common(train, common);
  train->add_option("--manifest", manifest, "training manifest")->required();
  train->add_option("--val-manifest", val_manifest, "validation manifest for early stopping");
  train->add_option("--resume", resume, "trainer checkpoint to resume from");
  train->add_flag("--lambda-sweep", sweep, "train once per lambda in {1, 0.1, 0.01, 0.001}");

  auto* evaluate = app.add_subcommand("eval", "pixel F1 / AUC on a manifest");
  add_common(evaluate, common);
  evaluate->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  evaluate->add_option("--manifest", manifest, "evaluation manifest")->required();

  auto* robust = app.add_subcommand("robustness", "F1 under JPEG and blur distortions");
  add_common(robust, common);
  robust->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  robust->add_option("--manifest", manifest, "evaluation manifest")->required();
  robust->add_flag("--plot", plot, "also write a bar plot PNG");

  auto* predict = app.add_subcommand("predict", "probability maps for individual images");
  add_common(predict, common);
  predict->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  predict->add_option("--image", images, "input image; repeatable")->required();
  predict->add_flag("--overlay", overlay, "also write an overlay PNG");
  predict->add_flag("--dump-reconstruction", dump_recon, "also write the reconstruction branch output");

  auto* inspect = app.add_subcommand("inspect-masks", "dump edge and patch edge masks as PNGs");
  add_common(inspect, common);
  inspect->add_option("--mask", mask_paths, "mask PNG; repeatable")->required();
  inspect->add_option("--radius", radius, "edge radius in pixels (default: model.edge_radius)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(common, n, size, out);
    if (*pretrain) return cmd_pretrain(common, manifest, steps, lr, out);
    if (*train) return cmd_train(common, manifest, val_manifest, resume, sweep, out);
    if (*evaluate) return cmd_eval(common, checkpoint, manifest, out);
    if (*robust) return cmd_robustness(common, checkpoint, manifest, plot, out);
    if (*predict) return cmd_predict(common, checkpoint, images, overlay, dump_recon, out);
    if (*inspect) return cmd_inspect_masks(common, mask_paths, radius, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}

}  // namespace tamperloc::cli
