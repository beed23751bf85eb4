// SPDX-License-Identifier: Apache-2.0

#include "moetrack/config.hpp"

#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace moetrack {

using nlohmann::json;

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (layers < 0) fail("layers must be >= 0");
  if (dim <= 0 || heads <= 0 || dim % heads != 0) fail("dim must be divisible by heads");
  if (patch <= 0) fail("patch must be positive");
  if (ref_size % patch != 0) fail("ref_size must be divisible by patch");
  if (search_size % patch != 0) fail("search_size must be divisible by patch");
  if (experts < 1) fail("experts must be >= 1");
  if (rank < 1 || rank > dim) fail("rank must satisfy 1 <= r <= dim");
  if (refs < 1) fail("refs must be >= 1");
  if (ref_crop_factor <= 0 || search_crop_factor <= 0) fail("crop factors must be positive");
}

void RunConfig::validate() const {
  model.validate();
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (train.steps < 0 || train.batch < 1) fail("bad train.steps/batch");
  if (train.warmup_steps < 0 || train.warmup_steps > train.steps)
    fail("warmup_steps must be in [0, steps]");
  if (scene.canvas < 16) fail("scene.canvas too small");
  if (scene.target_shape != "rectangle" && scene.target_shape != "ellipse")
    fail("scene.shape must be rectangle or ellipse");
  if (scene.target_size < 2) fail("scene.target_size too small");
  if (history_stride < 1) fail("history_stride must be >= 1");
}

Variant variant_from_string(const std::string& s) {
  if (s == "tmoe") return Variant::tmoe;
  if (s == "per_expert_compression") return Variant::per_expert_compression;
  if (s == "conventional_moe") return Variant::conventional_moe;
  if (s == "lora_baseline") return Variant::lora_baseline;
  throw std::invalid_argument("config: unknown variant '" + s + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::tmoe: return "tmoe";
    case Variant::per_expert_compression: return "per_expert_compression";
    case Variant::conventional_moe: return "conventional_moe";
    case Variant::lora_baseline: return "lora_baseline";
  }
  return "?";
}

namespace {

void reject_unknown(const json& obj, const char* where,
                    std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok)
      throw std::invalid_argument(std::string("config: unknown key '") + it.key() +
                                  "' in " + where);
  }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) obj.at(key).get_to(out);
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json j = json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  reject_unknown(j, "top level",
                 {"model", "variant", "train", "scene", "history_stride", "seed"});
  RunConfig cfg;
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m, "model",
                   {"layers", "dim", "heads", "patch", "rank", "experts", "ref_size",
                    "search_size", "ref_crop_factor", "search_crop_factor", "refs",
                    "freeze_patch_embed"});
    read(m, "layers", cfg.model.layers);
    read(m, "dim", cfg.model.dim);
    read(m, "heads", cfg.model.heads);
    read(m, "patch", cfg.model.patch);
    read(m, "rank", cfg.model.rank);
    read(m, "experts", cfg.model.experts);
    read(m, "ref_size", cfg.model.ref_size);
    read(m, "search_size", cfg.model.search_size);
    read(m, "ref_crop_factor", cfg.model.ref_crop_factor);
    read(m, "search_crop_factor", cfg.model.search_crop_factor);
    read(m, "refs", cfg.model.refs);
    read(m, "freeze_patch_embed", cfg.model.freeze_patch_embed);
  }
  if (j.contains("variant")) cfg.variant = variant_from_string(j.at("variant").get<std::string>());
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t, "train",
                   {"steps", "batch", "base_lr", "warmup_lr", "final_lr", "weight_decay",
                    "warmup_steps", "video_length", "center_jitter"});
    read(t, "steps", cfg.train.steps);
    read(t, "batch", cfg.train.batch);
    read(t, "base_lr", cfg.train.base_lr);
    read(t, "warmup_lr", cfg.train.warmup_lr);
    read(t, "final_lr", cfg.train.final_lr);
    read(t, "weight_decay", cfg.train.weight_decay);
    read(t, "warmup_steps", cfg.train.warmup_steps);
    read(t, "video_length", cfg.train.video_length);
    read(t, "center_jitter", cfg.train.center_jitter);
  }
  if (j.contains("scene")) {
    const json& s = j.at("scene");
    reject_unknown(s, "scene",
                   {"canvas", "shape", "color", "velocity", "scale_drift", "noise",
                    "distractors", "seed", "target_size"});
    read(s, "canvas", cfg.scene.canvas);
    read(s, "shape", cfg.scene.target_shape);
    read(s, "color", cfg.scene.color);
    read(s, "velocity", cfg.scene.velocity);
    read(s, "scale_drift", cfg.scene.scale_drift);
    read(s, "noise", cfg.scene.noise);
    read(s, "distractors", cfg.scene.distractors);
    read(s, "seed", cfg.scene.seed);
    read(s, "target_size", cfg.scene.target_size);
  }
  read(j, "history_stride", cfg.history_stride);
  read(j, "seed", cfg.seed);
  for (const char* var : {"SPM_SEED", "MOETRACK_SEED"}) {
    if (const char* env = std::getenv(var)) {
      cfg.seed = std::strtoull(env, nullptr, 10);
      break;
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["model"] = {{"layers", cfg.model.layers},
                {"dim", cfg.model.dim},
                {"heads", cfg.model.heads},
                {"patch", cfg.model.patch},
                {"rank", cfg.model.rank},
                {"experts", cfg.model.experts},
                {"ref_size", cfg.model.ref_size},
                {"search_size", cfg.model.search_size},
                {"ref_crop_factor", cfg.model.ref_crop_factor},
                {"search_crop_factor", cfg.model.search_crop_factor},
                {"refs", cfg.model.refs},
                {"freeze_patch_embed", cfg.model.freeze_patch_embed}};
  j["variant"] = to_string(cfg.variant);
  j["train"] = {{"steps", cfg.train.steps},
                {"batch", cfg.train.batch},
                {"base_lr", cfg.train.base_lr},
                {"warmup_lr", cfg.train.warmup_lr},
                {"final_lr", cfg.train.final_lr},
                {"weight_decay", cfg.train.weight_decay},
                {"warmup_steps", cfg.train.warmup_steps},
                {"video_length", cfg.train.video_length},
                {"center_jitter", cfg.train.center_jitter}};
  j["scene"] = {{"canvas", cfg.scene.canvas},
                {"shape", cfg.scene.target_shape},
                {"color", cfg.scene.color},
                {"velocity", cfg.scene.velocity},
                {"scale_drift", cfg.scene.scale_drift},
                {"noise", cfg.scene.noise},
                {"distractors", cfg.scene.distractors},
                {"seed", cfg.scene.seed},
                {"target_size", cfg.scene.target_size}};
  j["history_stride"] = cfg.history_stride;
  j["seed"] = cfg.seed;
  return j.dump(2);
}

RunConfig desk_config() {
  RunConfig cfg;
  cfg.model.layers = 2;
  cfg.model.dim = 64;
  cfg.model.heads = 4;
  cfg.model.patch = 8;
  cfg.model.rank = 8;
  cfg.model.experts = 2;
  cfg.model.ref_size = 32;
  cfg.model.search_size = 64;
  cfg.model.refs = 3;
  cfg.model.freeze_patch_embed = false;
  cfg.train.steps = 2000;
  cfg.train.batch = 8;
  cfg.train.warmup_steps = 100;
  cfg.validate();
  return cfg;
}

}  // namespace moetrack
