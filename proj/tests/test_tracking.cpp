// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "moetrack/config.hpp"
#include "moetrack/tracking.hpp"
#include "moetrack/training.hpp"

using namespace moetrack;

namespace {

RunConfig small_run() {
  RunConfig cfg = desk_config();
  cfg.model.layers = 1;
  cfg.model.dim = 16;
  cfg.model.heads = 2;
  cfg.seed = 5;
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_CASE("crop geometry: factor 2 around a square box") {
  Image frame(128, 128);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      for (int c = 0; c < 3; ++c)
        frame.at(x, y, c) = static_cast<float>(((x + y) % 7) / 7.0);
  const BBox box{50, 50, 28, 28};  // center (64, 64), crop side 2*28 = 56
  auto [crop, tf] = crop_and_resize(frame, box, 2.0, 56);
  CHECK(crop.w == 56);
  CHECK(tf.scale == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tf.origin_x == doctest::Approx(36.0).epsilon(1e-12));
  CHECK(tf.origin_y == doctest::Approx(36.0).epsilon(1e-12));
  // scale 1 crop copies pixels
  for (int y = 0; y < 56; ++y)
    for (int x = 0; x < 56; ++x)
      CHECK(crop.at(x, y, 0) == doctest::Approx(frame.at(36 + x, 36 + y, 0)).epsilon(1e-6));
}

TEST_CASE("crop transform round-trips boxes") {
  Image frame(96, 96);
  const BBox box{30.5, 40.25, 17, 11};
  auto [crop, tf] = crop_and_resize(frame, box, 5.0, 64);
  const BBox there = tf.to_crop(box);
  const BBox back = tf.to_frame(there);
  CHECK(back.x == doctest::Approx(box.x).epsilon(1e-9));
  CHECK(back.y == doctest::Approx(box.y).epsilon(1e-9));
  CHECK(back.w == doctest::Approx(box.w).epsilon(1e-9));
  CHECK(back.h == doctest::Approx(box.h).epsilon(1e-9));
  // box center maps to the crop center
  CHECK(there.cx() == doctest::Approx(32.0).epsilon(1e-9));
  CHECK(there.cy() == doctest::Approx(32.0).epsilon(1e-9));
}

TEST_CASE("out-of-frame crop regions are mean-padded") {
  Image frame(32, 32);
  for (auto& v : frame.rgb) v = 0.25f;
  auto [crop, tf] = crop_and_resize(frame, {0, 0, 10, 10}, 5.0, 50);
  // the crop extends far above and left of the frame; padding equals the mean
  CHECK(crop.at(0, 0, 0) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(crop.at(49, 49, 1) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("reference schedule disperses over the tracked past") {
  CHECK(select_reference_frames(1, 3) == std::vector<int>{0, 0, 0});
  CHECK(select_reference_frames(2, 3) == std::vector<int>{0, 0, 1});
  CHECK(select_reference_frames(3, 3) == std::vector<int>{0, 1, 2});
  CHECK(select_reference_frames(50, 3) == std::vector<int>{0, 16, 33});
  for (int t = 4; t <= 1000; ++t) {
    const std::vector<int> want = {0, t / 3, 2 * t / 3};
    CHECK(select_reference_frames(t, 3) == want);
  }
  CHECK_THROWS_AS(select_reference_frames(0, 3), std::invalid_argument);
}

TEST_CASE("hanning window closed form") {
  const std::vector<double> w = hanning_window(5);
  const std::vector<double> want = {0.0, 0.5, 1.0, 0.5, 0.0};
  REQUIRE(w.size() == want.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(w[i] == doctest::Approx(want[i]).epsilon(1e-12));
  CHECK(hanning_window(1) == std::vector<double>{1.0});
}

TEST_CASE("hanning penalty multiplies the separable window") {
  std::vector<double> scores(9, 1.0);
  const std::vector<double> pen = hanning_penalty(scores, 3);
  const std::vector<double> w = hanning_window(3);  // {0, 1, 0}
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      CHECK(pen[static_cast<std::size_t>(r) * 3 + c] ==
            doctest::Approx(w[static_cast<std::size_t>(r)] * w[static_cast<std::size_t>(c)])
                .epsilon(1e-12));
  CHECK_THROWS_AS(hanning_penalty(scores, 4), std::invalid_argument);
}

TEST_CASE("tracker steps produce in-frame boxes and advance state") {
  RunConfig cfg = small_run();
  Rng rng(cfg.seed);
  Model<float> model = Model<float>::init(cfg.model, rng);
  SyntheticVideo video(cfg.scene, 3, 12);

  Tracker<float> tracker(&model, cfg);
  SynthFrame f0 = video.frame(0);
  tracker.reset(f0.image, f0.box);
  CHECK(tracker.frame_index() == 1);
  for (int t = 1; t < 12; ++t) {
    auto res = tracker.step(video.frame(t).image);
    CHECK(res.box.x >= 0);
    CHECK(res.box.y >= 0);
    CHECK(res.box.x + res.box.w <= cfg.scene.canvas + 1e-9);
    CHECK(res.box.y + res.box.h <= cfg.scene.canvas + 1e-9);
    CHECK(std::isfinite(res.score));
  }
  CHECK(tracker.frame_index() == 12);
}

TEST_CASE("tracking is deterministic") {
  RunConfig cfg = small_run();
  Rng rng(cfg.seed);
  Model<float> model = Model<float>::init(cfg.model, rng);
  SyntheticVideo video(cfg.scene, 9, 8);

  auto run = [&] {
    Tracker<float> tr(&model, cfg);
    SynthFrame f0 = video.frame(0);
    tr.reset(f0.image, f0.box);
    std::vector<double> xs;
    for (int t = 1; t < 8; ++t) xs.push_back(tr.step(video.frame(t).image).box.x);
    return xs;
  };
  CHECK(run() == run());
}

TEST_CASE("the carried state changes across steps") {
  // With a propagating state token, feeding the same frame twice does not
  // give identical outputs after the first step.
  RunConfig cfg = small_run();
  Rng rng(cfg.seed + 1);
  Model<float> model = Model<float>::init(cfg.model, rng);
  // nonzero routed weights so the encoder actually moves the state token
  std::normal_distribution<double> d(0.0, 0.1);
  for (auto& p : model.trainable_params())
    for (auto& v : p.tensor->values()) v += static_cast<float>(d(rng));

  SyntheticVideo video(cfg.scene, 11, 4);
  SynthFrame f0 = video.frame(0);
  const Image f1 = video.frame(1).image;

  Tracker<float> tr(&model, cfg);
  tr.reset(f0.image, f0.box);
  const auto first = tr.step(f1);
  const auto second = tr.step(f1);  // same image, but state + history moved
  const bool changed = std::abs(first.score - second.score) > 0 ||
                       std::abs(first.box.x - second.box.x) > 0 ||
                       std::abs(first.box.y - second.box.y) > 0;
  CHECK(changed);
}

TEST_CASE("history stride keeps sparse frames but tracking still runs") {
  RunConfig cfg = small_run();
  cfg.history_stride = 4;
  Rng rng(cfg.seed);
  Model<float> model = Model<float>::init(cfg.model, rng);
  SyntheticVideo video(cfg.scene, 21, 14);
  Tracker<float> tr(&model, cfg);
  SynthFrame f0 = video.frame(0);
  tr.reset(f0.image, f0.box);
  for (int t = 1; t < 14; ++t) {
    auto res = tr.step(video.frame(t).image);
    CHECK(std::isfinite(res.box.x));
  }
}
