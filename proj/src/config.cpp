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

#include "tamperloc/config.hpp"

#include <fstream>
#include <functional>

#include "tamperloc/errors.hpp"

namespace tamperloc {

using nlohmann::json;

namespace {

void check(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError(field + ": " + why);
}

// Copies `src` into `dst`, refusing keys that `dst` does not already have.
void strict_merge(json& dst, const json& src, const std::string& path) {
  check(src.is_object(), path.empty() ? "<root>" : path, "expected an object");
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string field = path.empty() ? it.key() : path + "." + it.key();
    check(dst.contains(it.key()), field, "unknown key");
    json& slot = dst[it.key()];
    if (slot.is_object()) {
      strict_merge(slot, it.value(), field);
    } else {
      const bool numeric_ok = slot.is_number() && it.value().is_number();
      const bool same = slot.type() == it.value().type() || numeric_ok || slot.is_null() || it.value().is_null();
      check(same, field, std::string("expected ") + slot.type_name() + ", got " + it.value().type_name());
      slot = it.value();
    }
  }
}

void collect_leaf_paths(const json& node, const std::string& path, std::vector<std::string>& out) {
  if (node.is_object()) {
    for (auto it = node.begin(); it != node.end(); ++it)
      collect_leaf_paths(it.value(), path.empty() ? it.key() : path + "." + it.key(), out);
  } else {
    out.push_back(path);
  }
}

template <typename V>
V get(const json& j, const char* key, const std::string& path) {
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key + ": " + e.what());
  }
}

json distortion_to_json(const data::DistortionSpec& d) {
  switch (d.kind) {
    case data::DistortionKind::kJpeg:
      return {{"kind", "jpeg"}, {"quality", d.jpeg_quality}};
    case data::DistortionKind::kGaussianBlur:
      return {{"kind", "gaussian_blur"}, {"kernel", d.blur_kernel}};
    case data::DistortionKind::kNone:
      break;
  }
  return {{"kind", "none"}};
}

data::DistortionSpec distortion_from_json(const json& j, const std::string& path) {
  const auto kind = get<std::string>(j, "kind", path);
  if (kind == "none") return data::DistortionSpec::none();
  if (kind == "jpeg") return data::DistortionSpec::jpeg(get<int>(j, "quality", path));
  if (kind == "gaussian_blur") return data::DistortionSpec::blur(get<int>(j, "kernel", path));
  throw ConfigError(path + ".kind: unknown distortion \"" + kind + "\"");
}

}  // namespace

void EncoderConfig::validate() const {
  check(patch_size > 0 && height % patch_size == 0 && width % patch_size == 0, "model.encoder.patch_size",
        "canvas must be divisible by the patch size");
  check(depth > 0 && global_every > 0 && depth % global_every == 0, "model.encoder.depth",
        "depth must be divisible by global_every");
  check(window_size > 0 && grid_h() % window_size == 0 && grid_w() % window_size == 0,
        "model.encoder.window_size", "patch grid must be divisible by the window size");
  check(heads > 0 && embed_dim % heads == 0, "model.encoder.heads", "embed_dim must be divisible by heads");
  check(embed_dim % 4 == 0, "model.encoder.embed_dim", "must be divisible by 4 for 2D sin-cos encoding");
  check(mlp_ratio > 0, "model.encoder.mlp_ratio", "must be positive");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.encoder = EncoderConfig{16, 768, 12, 12, 16, 3, 4, 1024, 1024};
  c.seg = SegConfig{256, 256};
  c.recon = ReconConfig{512, 8, 16};
  c.perceptual.widths = {64, 128, 256};
  c.edge_radius = 7;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.encoder = EncoderConfig{8, 16, 2, 2, 2, 2, 2, 32, 32};
  c.seg = SegConfig{4, 4};
  c.recon = ReconConfig{8, 1, 2};
  c.perceptual.widths = {2, 3, 4};
  c.edge_radius = 1;
  return c;
}

void ModelConfig::validate() const {
  encoder.validate();
  check(seg.pyramid_channels > 0 && seg.decoder_channels > 0, "model.seg", "channel counts must be positive");
  check(recon.decoder_dim % 4 == 0 && recon.decoder_heads > 0 && recon.decoder_dim % recon.decoder_heads == 0,
        "model.recon.decoder_dim", "must be divisible by 4 and by decoder_heads");
  check(recon.decoder_depth > 0, "model.recon.decoder_depth", "must be positive");
  for (int w : perceptual.widths) check(w > 0, "model.perceptual.widths", "must be positive");
  check(encoder.height % 4 == 0 && encoder.width % 4 == 0, "model.encoder.height", "must be divisible by 4");
  check(edge_radius >= 1, "model.edge_radius", "must be >= 1");
}

void TrainConfig::validate() const {
  check(lambda >= 0.0, "train.lambda", "must be >= 0");
  check(base_lr > 0.0, "train.base_lr", "must be > 0");
  check(mask_ratio > 0.0 && mask_ratio < 1.0, "train.mask_ratio", "must lie in (0, 1)");
  check(batch_size >= 1, "train.batch_size", "must be >= 1");
  check(epochs >= 1, "train.epochs", "must be >= 1");
  check(early_stop_patience >= 1, "train.early_stop_patience", "must be >= 1");
  check(warmup_fraction >= 0.0 && warmup_fraction < 1.0, "train.warmup_fraction", "must lie in [0, 1)");
  check(clip_norm >= 0.0, "train.clip_norm", "must be >= 0");
  check(max_steps >= 0, "train.max_steps", "must be >= 0");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  check(eval.threshold > 0.0 && eval.threshold < 1.0, "eval.threshold", "must lie in (0, 1)");
  for (const auto& d : eval.distortions) d.validate();
}

json to_json(const ModelConfig& c) {
  const auto& e = c.encoder;
  return {
      {"encoder",
       {{"patch_size", e.patch_size}, {"embed_dim", e.embed_dim}, {"depth", e.depth}, {"heads", e.heads},
        {"window_size", e.window_size}, {"global_every", e.global_every}, {"mlp_ratio", e.mlp_ratio},
        {"height", e.height}, {"width", e.width}}},
      {"seg", {{"pyramid_channels", c.seg.pyramid_channels}, {"decoder_channels", c.seg.decoder_channels}}},
      {"recon",
       {{"decoder_dim", c.recon.decoder_dim}, {"decoder_depth", c.recon.decoder_depth},
        {"decoder_heads", c.recon.decoder_heads}}},
      {"perceptual",
       {{"widths", c.perceptual.widths}, {"seed", c.perceptual.seed}, {"weights_path", c.perceptual.weights_path}}},
      {"edge_radius", c.edge_radius},
  };
}

ModelConfig model_config_from_json(const json& doc) {
  json full = to_json(ModelConfig::desk());
  strict_merge(full, doc, "model");
  ModelConfig c;
  const auto& e = full["encoder"];
  const std::string ep = "model.encoder";
  c.encoder = EncoderConfig{get<int>(e, "patch_size", ep),  get<int>(e, "embed_dim", ep),
                            get<int>(e, "depth", ep),       get<int>(e, "heads", ep),
                            get<int>(e, "window_size", ep), get<int>(e, "global_every", ep),
                            get<int>(e, "mlp_ratio", ep),   get<int>(e, "height", ep),
                            get<int>(e, "width", ep)};
  c.seg.pyramid_channels = get<int>(full["seg"], "pyramid_channels", "model.seg");
  c.seg.decoder_channels = get<int>(full["seg"], "decoder_channels", "model.seg");
  c.recon.decoder_dim = get<int>(full["recon"], "decoder_dim", "model.recon");
  c.recon.decoder_depth = get<int>(full["recon"], "decoder_depth", "model.recon");
  c.recon.decoder_heads = get<int>(full["recon"], "decoder_heads", "model.recon");
  c.perceptual.widths = get<std::array<int, 3>>(full["perceptual"], "widths", "model.perceptual");
  c.perceptual.seed = get<std::uint64_t>(full["perceptual"], "seed", "model.perceptual");
  c.perceptual.weights_path = get<std::string>(full["perceptual"], "weights_path", "model.perceptual");
  c.edge_radius = get<int>(full, "edge_radius", "model");
  return c;
}

json to_json(const RunConfig& c) {
  const auto& t = c.train;
  const auto& a = c.augment;
  json distortions = json::array();
  for (const auto& d : c.eval.distortions) distortions.push_back(distortion_to_json(d));
  return {
      {"model", to_json(c.model)},
      {"train",
       {{"lambda", t.lambda}, {"base_lr", t.base_lr}, {"epochs", t.epochs}, {"batch_size", t.batch_size},
        {"mask_ratio", t.mask_ratio}, {"early_stop_patience", t.early_stop_patience}, {"seed", t.seed},
        {"scale_preset", t.scale_preset == ScalePreset::kPaper ? "paper" : "desk"}, {"max_steps", t.max_steps},
        {"weight_decay", t.weight_decay}, {"beta1", t.beta1}, {"beta2", t.beta2},
        {"warmup_fraction", t.warmup_fraction}, {"clip_norm", t.clip_norm}, {"eval_every", t.eval_every}}},
      {"augment",
       {{"hflip_prob", a.hflip_prob}, {"vflip_prob", a.vflip_prob}, {"rot90_prob", a.rot90_prob},
        {"rescale_prob", a.rescale_prob}, {"rescale_min", a.rescale_min}, {"rescale_max", a.rescale_max},
        {"blur_prob", a.blur_prob}, {"blur_kernels", a.blur_kernels}}},
      {"eval", {{"threshold", c.eval.threshold}, {"distortions", distortions}}},
      {"init_checkpoint", c.init_checkpoint},
  };
}

RunConfig run_config_from_json(const json& doc) {
  RunConfig defaults;
  // The preset picks the model defaults that the document then refines.
  if (doc.contains("train") && doc["train"].contains("scale_preset")) {
    const auto preset = doc["train"]["scale_preset"];
    check(preset.is_string() && (preset == "desk" || preset == "paper"), "train.scale_preset",
          "expected \"desk\" or \"paper\"");
    if (preset == "paper") {
      defaults.model = ModelConfig::paper();
      defaults.train.scale_preset = ScalePreset::kPaper;
    }
  }
  json full = to_json(defaults);
  // Array-valued leaves are replaced wholesale.
  strict_merge(full, doc, "");

  RunConfig c;
  json model_doc = full["model"];
  json model_full = to_json(defaults.model);
  strict_merge(model_full, model_doc, "model");
  c.model = model_config_from_json(model_full);

  const auto& t = full["train"];
  const std::string tp = "train";
  c.train.lambda = get<double>(t, "lambda", tp);
  c.train.base_lr = get<double>(t, "base_lr", tp);
  c.train.epochs = get<int>(t, "epochs", tp);
  c.train.batch_size = get<int>(t, "batch_size", tp);
  c.train.mask_ratio = get<double>(t, "mask_ratio", tp);
  c.train.early_stop_patience = get<int>(t, "early_stop_patience", tp);
  c.train.seed = get<std::uint64_t>(t, "seed", tp);
  const auto preset = get<std::string>(t, "scale_preset", tp);
  check(preset == "desk" || preset == "paper", "train.scale_preset", "expected \"desk\" or \"paper\"");
  c.train.scale_preset = preset == "paper" ? ScalePreset::kPaper : ScalePreset::kDesk;
  c.train.max_steps = get<int>(t, "max_steps", tp);
  c.train.weight_decay = get<double>(t, "weight_decay", tp);
  c.train.beta1 = get<double>(t, "beta1", tp);
  c.train.beta2 = get<double>(t, "beta2", tp);
  c.train.warmup_fraction = get<double>(t, "warmup_fraction", tp);
  c.train.clip_norm = get<double>(t, "clip_norm", tp);
  c.train.eval_every = get<int>(t, "eval_every", tp);

  const auto& a = full["augment"];
  const std::string ap = "augment";
  c.augment.hflip_prob = get<double>(a, "hflip_prob", ap);
  c.augment.vflip_prob = get<double>(a, "vflip_prob", ap);
  c.augment.rot90_prob = get<double>(a, "rot90_prob", ap);
  c.augment.rescale_prob = get<double>(a, "rescale_prob", ap);
  c.augment.rescale_min = get<double>(a, "rescale_min", ap);
  c.augment.rescale_max = get<double>(a, "rescale_max", ap);
  c.augment.blur_prob = get<double>(a, "blur_prob", ap);
  c.augment.blur_kernels = get<std::vector<int>>(a, "blur_kernels", ap);

  c.eval.threshold = get<double>(full["eval"], "threshold", "eval");
  const auto& ds = full["eval"]["distortions"];
  check(ds.is_array(), "eval.distortions", "expected an array");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    c.eval.distortions.push_back(distortion_from_json(ds[i], "eval.distortions[" + std::to_string(i) + "]"));
  }
  c.init_checkpoint = get<std::string>(full, "init_checkpoint", "");
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(doc);
}

RunConfig apply_overrides(const RunConfig& config, const std::vector<std::string>& overrides) {
  json doc = to_json(config);
  std::vector<std::string> leaves;
  collect_leaf_paths(doc, "", leaves);
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    check(eq != std::string::npos && eq > 0, item, "override must look like key=value");
    const std::string key = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);

    std::vector<std::string> matches;
    for (const auto& leaf : leaves) {
      if (leaf == key || (leaf.size() > key.size() && leaf.ends_with("." + key))) matches.push_back(leaf);
    }
    check(!matches.empty(), key, "unknown key");
    if (matches.size() > 1) {
      std::string all;
      for (const auto& m : matches) all += (all.empty() ? "" : ", ") + m;
      throw ConfigError(key + ": ambiguous key, candidates: " + all);
    }
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json::json_pointer ptr("/" + [&] {
      std::string p = matches.front();
      for (auto& ch : p)
        if (ch == '.') ch = '/';
      return p;
    }());
    json patch = json::object();
    patch[ptr] = value;
    strict_merge(doc, patch, "");
  }
  return run_config_from_json(doc);
}

}  // namespace tamperloc
