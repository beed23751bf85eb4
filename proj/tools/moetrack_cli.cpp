// SPDX-License-Identifier: Apache-2.0

// Command line frontend: parameter reports, training on synthetic videos,
// tracking over a directory of frames, and prediction scoring.
// Exit codes: 0 ok, 1 usage/config errors, 2 missing or unwritable files,
// 3 training aborted on non-finite loss (last good weights are saved).

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moetrack/checkpoint.hpp"
#include "moetrack/config.hpp"
#include "moetrack/model.hpp"
#include "moetrack/param_count.hpp"
#include "moetrack/tracking.hpp"
#include "moetrack/training.hpp"

namespace fs = std::filesystem;
using namespace moetrack;

namespace {

BBox parse_box(const std::string& s) {
  BBox b;
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf", &b.x, &b.y, &b.w, &b.h) != 4 ||
      b.w <= 0 || b.h <= 0)
    throw CLI::ValidationError("--init", "expected x,y,w,h with positive extents");
  return b;
}

std::vector<fs::path> list_frames(const std::string& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    const std::string ext = e.path().extension().string();
    if (ext == ".ppm" || ext == ".png") out.push_back(e.path());
  }
  if (ec) throw std::runtime_error("cannot read directory " + dir);
  std::sort(out.begin(), out.end());
  return out;
}

std::map<int, BBox> read_box_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::map<int, BBox> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || !std::isdigit(static_cast<unsigned char>(line[0]))) continue;
    int idx;
    BBox b;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &idx, &b.x, &b.y, &b.w, &b.h) == 5)
      out[idx] = b;
  }
  return out;
}

int cmd_params(const std::string& config_path) {
  const RunConfig cfg = load_run_config(config_path);
  std::cout << count_params(cfg.model, cfg.variant).to_text(to_string(cfg.variant));
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_path, int steps) {
  RunConfig cfg = load_run_config(config_path);
  if (steps > 0) {
    cfg.train.steps = steps;
    cfg.train.warmup_steps = std::min(cfg.train.warmup_steps, steps);
  }
  {
    std::ofstream probe(out_path, std::ios::binary | std::ios::app);
    if (!probe) {
      std::cerr << "error: cannot write " << out_path << "\n";
      return 2;
    }
  }
  Rng rng(cfg.seed);
  Model<float> model = Model<float>::init(cfg.model, rng);
  Trainer<float> trainer(model, cfg);
  std::cout << "step,loss,lr\n";
  for (int s = 0; s < cfg.train.steps; ++s) {
    const auto st = trainer.run_step();
    std::printf("%d,%.6f,%.8g\n", st.step, st.loss, st.lr);
    if (st.skipped) {
      // the skipped step left the weights untouched, save them and stop
      save_checkpoint(out_path, snapshot(model, run_config_to_json(cfg)));
      std::cerr << "error: non-finite loss at step " << st.step
                << ", last good weights saved to " << out_path << "\n";
      return 3;
    }
  }
  save_checkpoint(out_path, snapshot(model, run_config_to_json(cfg)));
  return 0;
}

int cmd_track(const std::string& ckpt_path, const std::string& frames_dir,
              const std::string& init_str) {
  const BBox init = parse_box(init_str);
  Checkpoint ck = load_checkpoint(ckpt_path);
  const RunConfig cfg = parse_run_config(ck.config_json);
  Rng rng(cfg.seed);
  Model<float> model = Model<float>::init(cfg.model, rng);
  restore(model, ck);

  const std::vector<fs::path> frames = list_frames(frames_dir);
  if (frames.empty()) {
    std::cerr << "error: no .ppm/.png frames in " << frames_dir << "\n";
    return 2;
  }
  Tracker<float> tracker(&model, cfg);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Image frame = read_image(frames[i].string());
    BBox b;
    if (i == 0) {
      tracker.reset(frame, init);
      b = init;
    } else {
      b = tracker.step(frame).box;
    }
    std::printf("%zu,%.2f,%.2f,%.2f,%.2f\n", i, b.x, b.y, b.w, b.h);
  }
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path) {
  const std::map<int, BBox> pred = read_box_csv(pred_path);
  const std::map<int, BBox> gt = read_box_csv(gt_path);
  double iou_sum = 0;
  int n = 0, hits50 = 0, hits75 = 0;
  for (const auto& [idx, g] : gt) {
    auto it = pred.find(idx);
    if (it == pred.end()) continue;
    const double v = iou(it->second, g);
    iou_sum += v;
    hits50 += v > 0.5 ? 1 : 0;
    hits75 += v > 0.75 ? 1 : 0;
    ++n;
  }
  if (n == 0) {
    std::cerr << "error: no overlapping frame indices\n";
    return 2;
  }
  std::printf("mean_iou=%.4f sr_0.50=%.4f sr_0.75=%.4f n=%d\n", iou_sum / n,
              static_cast<double>(hits50) / n, static_cast<double>(hits75) / n, n);
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir, int frames,
              std::uint64_t video_seed) {
  const RunConfig cfg = load_run_config(config_path);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const SyntheticVideo video(cfg.scene, video_seed, frames);
  std::ofstream gt(fs::path(out_dir) / "gt.csv");
  if (!gt) {
    std::cerr << "error: cannot write to " << out_dir << "\n";
    return 2;
  }
  gt << "frame,x,y,w,h\n";
  for (int t = 0; t < frames; ++t) {
    const SynthFrame f = video.frame(t);
    char name[32];
    std::snprintf(name, sizeof name, "%06d.ppm", t);
    write_ppm((fs::path(out_dir) / name).string(), f.image);
    char row[128];
    std::snprintf(row, sizeof row, "%d,%.2f,%.2f,%.2f,%.2f\n", t, f.box.x, f.box.y,
                  f.box.w, f.box.h);
    gt << row;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense mixture-of-experts visual tracker"};
  app.require_subcommand(1);

  std::string config_path, out_path, ckpt_path, frames_dir, init_str;
  std::string pred_path, gt_path;
  int steps = 0, synth_frames = 60;
  std::uint64_t video_seed = 0;

  auto* params = app.add_subcommand("params", "print the parameter count report");
  params->add_option("--config", config_path, "run config JSON")->required();

  auto* train = app.add_subcommand("train", "train on synthetic videos");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--out", out_path, "output checkpoint path")->required();
  train->add_option("--steps", steps, "override train.steps");

  auto* track = app.add_subcommand("track", "track a target through a frame directory");
  track->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  track->add_option("--frames", frames_dir, "directory of .ppm/.png frames")->required();
  track->add_option("--init", init_str, "initial box x,y,w,h")->required();

  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("--pred", pred_path, "prediction CSV")->required();
  eval->add_option("--gt", gt_path, "ground truth CSV")->required();

  auto* synth = app.add_subcommand("synth", "render a synthetic video to disk");
  synth->add_option("--config", config_path, "run config JSON")->required();
  synth->add_option("--out", out_path, "output directory")->required();
  synth->add_option("--frames", synth_frames, "frame count");
  synth->add_option("--video-seed", video_seed, "video seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (params->parsed()) return cmd_params(config_path);
    if (train->parsed()) return cmd_train(config_path, out_path, steps);
    if (track->parsed()) return cmd_track(ckpt_path, frames_dir, init_str);
    if (eval->parsed()) return cmd_eval(pred_path, gt_path);
    if (synth->parsed()) return cmd_synth(config_path, out_path, synth_frames, video_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    const std::string msg = e.what();
    return msg.find("cannot open") != std::string::npos ||
                   msg.find("cannot read") != std::string::npos ||
                   msg.find("cannot write") != std::string::npos
               ? 2
               : 1;
  }
  return 0;
}
