// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace moetrack {

// Architecture hyperparameters. Defaults are the base preset (ViT-B scale,
// 14px patches, 196/378 crops, 3 reference frames, 4 routed experts, r=64).
struct ModelConfig {
  int layers = 12;
  int dim = 768;
  int heads = 12;
  int patch = 14;
  int rank = 64;           // compression dim r
  int experts = 4;         // routed expert count N_e
  int ref_size = 196;
  int search_size = 378;
  double ref_crop_factor = 2.0;
  double search_crop_factor = 5.0;
  int refs = 3;            // reference frame count N
  bool freeze_patch_embed = false;

  int ref_tokens() const { return (ref_size / patch) * (ref_size / patch); }
  int search_tokens() const { return (search_size / patch) * (search_size / patch); }
  int search_cells() const { return search_size / patch; }
  int seq_len() const { return 1 + refs * ref_tokens() + search_tokens(); }
  int ffn_dim() const { return 4 * dim; }

  void validate() const;  // throws std::invalid_argument
};

enum class Variant { tmoe, per_expert_compression, conventional_moe, lora_baseline };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct SceneSpec {
  int canvas = 96;
  std::string target_shape = "rectangle";  // or "ellipse"
  std::array<double, 3> color = {0.9, 0.2, 0.1};
  std::array<double, 2> velocity = {1.5, 0.8};
  double scale_drift = 0.0;   // relative side change per frame
  double noise = 0.08;        // background noise amplitude
  int distractors = 1;
  std::uint64_t seed = 0;
  double target_size = 18.0;  // nominal side at frame 0, px
};

struct TrainConfig {
  int steps = 2000;
  int batch = 8;
  double base_lr = 1e-4;
  double warmup_lr = 1e-7;
  double final_lr = 1e-6;
  double weight_decay = 0.1;
  int warmup_steps = 100;
  int video_length = 240;
  double center_jitter = 0.2;  // search-crop center jitter, fraction of crop side
};

struct RunConfig {
  ModelConfig model;
  Variant variant = Variant::tmoe;
  TrainConfig train;
  SceneSpec scene;
  int history_stride = 1;  // keep every k-th tracked frame
  std::uint64_t seed = 0;

  void validate() const;
};

// Parses the JSON config document. Unknown keys anywhere are an error.
// The MOETRACK_SEED / SPM_SEED environment variables override `seed`.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

// The desk-scale default: CPU-trainable in minutes, exercises every path.
RunConfig desk_config();

// Serializes a RunConfig as a JSON document parse_run_config accepts.
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace moetrack
