// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "moetrack/config.hpp"
#include "moetrack/training.hpp"

using namespace moetrack;

namespace {

RunConfig small_run() {
  RunConfig cfg = desk_config();
  cfg.model.layers = 1;
  cfg.model.dim = 16;
  cfg.model.heads = 2;
  cfg.train.batch = 2;
  cfg.seed = 3;
  cfg.validate();
  return cfg;
}

// One fixed training sample: reference tokens plus one search frame target.
template <class T>
struct FixedSample {
  std::vector<RefInput<T>> refs;
  Tensor<T> search_tokens;
  int gt_cell;
  std::array<T, 4> gt_norm;
};

template <class T>
FixedSample<T> make_sample(const Model<T>& model, const SyntheticVideo& video,
                           const ModelConfig& mc) {
  FixedSample<T> s;
  for (int k = 0; k < 3; ++k) {
    SynthFrame f = video.frame(k * 5);
    auto [crop, tf] = crop_and_resize(f.image, f.box, mc.ref_crop_factor, mc.ref_size);
    s.refs.push_back({model.patch_embed(crop, false), tf.to_crop(f.box)});
  }
  SynthFrame f = video.frame(20);
  auto [crop, tf] = crop_and_resize(f.image, f.box, mc.search_crop_factor, mc.search_size);
  s.search_tokens = model.patch_embed(crop, true);
  const BBox in_crop = tf.to_crop(f.box);
  const int g = mc.search_cells();
  const double cell_px = static_cast<double>(mc.search_size) / g;
  const int col = std::clamp(static_cast<int>(in_crop.cx() / cell_px), 0, g - 1);
  const int row = std::clamp(static_cast<int>(in_crop.cy() / cell_px), 0, g - 1);
  s.gt_cell = row * g + col;
  const T sz = static_cast<T>(mc.search_size);
  s.gt_norm = {static_cast<T>(in_crop.cx()) / sz, static_cast<T>(in_crop.cy()) / sz,
               static_cast<T>(in_crop.w) / sz, static_cast<T>(in_crop.h) / sz};
  return s;
}

}  // namespace

TEST_CASE("lr schedule endpoints and midpoint") {
  TrainConfig c;
  c.steps = 2000;
  c.warmup_steps = 100;
  CHECK(lr_schedule(0, c) == doctest::Approx(1e-7).epsilon(1e-12));
  CHECK(lr_schedule(100, c) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_schedule(2000, c) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(lr_schedule(100 + 950, c) == doctest::Approx(5.05e-5).epsilon(1e-12));
  // monotone decay after warmup
  for (int s = 101; s <= 2000; ++s) CHECK(lr_schedule(s, c) < lr_schedule(s - 1, c));
}

TEST_CASE("sequence sampling: gaps in range, half the draws reversed") {
  Rng rng(17);
  const int len = 100000;
  int reversed = 0, forward = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::vector<int> idx = sample_frame_indices(len, rng);
    REQUIRE(idx.size() == 5);
    bool desc = idx[0] > idx[4];
    for (int k = 1; k < 5; ++k) {
      const int gap = std::abs(idx[static_cast<std::size_t>(k)] -
                               idx[static_cast<std::size_t>(k - 1)]);
      const bool clamped = idx[0] == len - 1 || idx[4] == len - 1;
      if (!clamped) {
        CHECK(gap >= 1);
        CHECK(gap <= 200);
      }
      CHECK(idx[static_cast<std::size_t>(k)] >= 0);
      CHECK(idx[static_cast<std::size_t>(k)] < len);
    }
    (desc ? reversed : forward) += 1;
  }
  const double freq = reversed / 10000.0;
  CHECK(freq > 0.48);
  CHECK(freq < 0.52);
}

TEST_CASE("short videos repeat the last frame") {
  Rng rng(18);
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<int> idx = sample_frame_indices(3, rng);
    for (int v : idx) {
      CHECK(v >= 0);
      CHECK(v <= 2);
    }
  }
}

TEST_CASE("synthetic video is deterministic and targets stay boxed") {
  SceneSpec spec;
  spec.seed = 42;
  SyntheticVideo a(spec, 7, 30), b(spec, 7, 30);
  for (int t : {0, 7, 29}) {
    const SynthFrame fa = a.frame(t), fb = b.frame(t);
    CHECK(fa.image.rgb == fb.image.rgb);
    CHECK(fa.box.x == fb.box.x);
    // tight box stays inside the canvas
    CHECK(fa.box.x >= -1e-9);
    CHECK(fa.box.y >= -1e-9);
    CHECK(fa.box.x + fa.box.w <= spec.canvas + 1e-9);
    CHECK(fa.box.y + fa.box.h <= spec.canvas + 1e-9);
  }
  SyntheticVideo c(spec, 8, 5);
  CHECK(a.frame(0).image.rgb != c.frame(0).image.rgb);
}

TEST_CASE("kinematics: configured velocity until the wall bounce") {
  SceneSpec spec;
  spec.velocity = {2.0, 0.0};
  spec.scale_drift = 0.0;
  spec.seed = 5;
  SyntheticVideo v(spec, 1, 60);
  const BBox b0 = v.box(0);
  for (int t = 1; t < 60; ++t) {
    const BBox bt = v.box(t), prev = v.box(t - 1);
    CHECK(bt.y == doctest::Approx(b0.y).epsilon(1e-9));
    CHECK(bt.w == doctest::Approx(b0.w).epsilon(1e-9));
    const double step = std::abs(bt.x - prev.x);
    CHECK(step <= 2.0 + 1e-9);  // exactly 2 except across a bounce
    if (prev.x > b0.w / 4 && prev.x + prev.w < spec.canvas - b0.w / 4)
      CHECK(step == doctest::Approx(2.0).epsilon(1e-9));
  }
  SceneSpec still = spec;
  still.velocity = {0.0, 0.0};
  SyntheticVideo s(still, 1, 10);
  for (int t = 1; t < 10; ++t) {
    CHECK(s.box(t).x == s.box(0).x);
    CHECK(s.box(t).y == s.box(0).y);
  }
}

TEST_CASE("target pixels carry the target color") {
  SceneSpec spec;
  spec.seed = 9;
  spec.noise = 0.0;
  SyntheticVideo v(spec, 2, 4);
  const SynthFrame f = v.frame(1);
  const int cx = static_cast<int>(f.box.cx()), cy = static_cast<int>(f.box.cy());
  CHECK(f.image.at(cx, cy, 0) == doctest::Approx(spec.color[0]).epsilon(1e-6));
  CHECK(f.image.at(cx, cy, 1) == doctest::Approx(spec.color[1]).epsilon(1e-6));
}

TEST_CASE("decoupled weight decay: analytic one-parameter step") {
  Tensor<double> w = Tensor<double>::from({1}, {2.0}, true);
  w.zero_grad();
  backward(scale(w, 0.5));  // grad = 0.5
  AdamW<double> opt({{"w", &w}}, 0.1);
  const double lr = 0.01, g = 0.5, eps = 1e-8;
  // bias-corrected first step: mhat = g, vhat = g^2
  const double want = 2.0 - lr * 0.1 * 2.0 - lr * g / (std::sqrt(g * g) + eps);
  opt.step(lr);
  CHECK(w.at(0) == doctest::Approx(want).epsilon(1e-12));
  // decay is multiplicative on the weight, not folded into the moment:
  // a zero-gradient parameter still shrinks geometrically
  Tensor<double> z = Tensor<double>::from({1}, {1.0}, true);
  z.zero_grad();
  AdamW<double> opt2({{"z", &z}}, 0.5);
  backward(scale(z, 0.0));
  opt2.step(0.1);
  CHECK(z.at(0) == doctest::Approx(1.0 - 0.1 * 0.5 * 1.0).epsilon(1e-12));
}

TEST_CASE("frozen parameters are bit-identical after optimizer steps") {
  RunConfig cfg = small_run();
  Rng rng(cfg.seed);
  Model<float> model = Model<float>::init(cfg.model, rng);
  std::vector<std::vector<float>> frozen_before;
  for (auto& p : model.all_params())
    if (!p.tensor->requires_grad()) frozen_before.push_back(p.tensor->values());
  Trainer<float> trainer(model, cfg);
  for (int s = 0; s < 5; ++s) {
    auto st = trainer.run_step();
    CHECK(!st.skipped);
    CHECK(std::isfinite(st.loss));
  }
  std::size_t i = 0;
  for (auto& p : model.all_params())
    if (!p.tensor->requires_grad()) CHECK(p.tensor->values() == frozen_before[i++]);
}

TEST_CASE("training is reproducible at f64") {
  RunConfig cfg = small_run();
  auto run = [&] {
    Rng rng(cfg.seed);
    Model<double> model = Model<double>::init(cfg.model, rng);
    Trainer<double> trainer(model, cfg);
    std::vector<double> losses;
    for (int s = 0; s < 4; ++s) losses.push_back(trainer.run_step().loss);
    return losses;
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(std::abs(a[i] - b[i]) < 1e-6);
}

TEST_CASE("overfitting a single repeated sample collapses the loss") {
  RunConfig cfg = small_run();
  Rng rng(11);
  Model<float> model = Model<float>::init(cfg.model, rng);
  SyntheticVideo video(cfg.scene, 1, 30);
  const FixedSample<float> s = make_sample(model, video, cfg.model);
  AdamW<float> opt(model.trainable_params(), 0.0);
  double initial = 0, final = 0;
  for (int step = 0; step < 200; ++step) {
    auto out = model.forward(model.emb.state_token, s.refs, s.search_tokens);
    Tensor<float> loss = tracking_loss(out.head, s.gt_cell, s.gt_norm);
    const double v = static_cast<double>(loss.item());
    if (step == 0) initial = v;
    final = v;
    model.zero_grads();
    backward(loss);
    opt.step(3e-3);
  }
  CHECK(final < 0.1 * initial);
}

TEST_CASE("pass-2 loss reaches pass-1 computation through the carried state") {
  RunConfig cfg = small_run();
  Rng rng(12);
  Model<float> model = Model<float>::init(cfg.model, rng);
  std::normal_distribution<double> d(0.0, 0.1);
  for (auto& p : model.trainable_params())
    for (auto& v : p.tensor->values()) v += static_cast<float>(d(rng));
  SyntheticVideo video(cfg.scene, 2, 30);
  const FixedSample<float> s1 = make_sample(model, video, cfg.model);

  // pass-1 search tokens exist only in pass 1; their gradient can only come
  // through the carried state token
  Tensor<float> xs1 = s1.search_tokens;
  xs1.set_requires_grad(true);
  xs1.zero_grad();
  auto out1 = model.forward(model.emb.state_token, s1.refs, xs1);
  Tensor<float> carried = add(model.emb.state_token, out1.state_out);
  SynthFrame f2 = video.frame(25);
  auto [crop2, tf2] =
      crop_and_resize(f2.image, f2.box, cfg.model.search_crop_factor, cfg.model.search_size);
  auto out2 = model.forward(carried, s1.refs, model.patch_embed(crop2, true));
  backward(tracking_loss(out2.head, 0, {0.5f, 0.5f, 0.2f, 0.2f}));
  REQUIRE(xs1.has_grad());
  double total = 0;
  for (float g : xs1.grad()) total += std::abs(g);
  CHECK(total > 0.0);
}
