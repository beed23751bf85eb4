// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "moetrack/config.hpp"
#include "moetrack/image.hpp"
#include "moetrack/model.hpp"

// Online tracking: reference frames are re-cropped from tracked history per
// the dispersed schedule, the state token propagates (detached) across
// frames, and the score map gets a Hanning motion prior before argmax.

namespace moetrack {

// Reference frame indices for search frame t (frames 0..t-1 are available):
// floor(i*t/N) for i = 0..N-1. Disperses over the past for t > N and
// degenerates to template repeats {0,0,0}, {0,0,1}, {0,1,2} for small t.
inline std::vector<int> select_reference_frames(int t, int n_refs) {
  if (t < 1 || n_refs < 1)
    throw std::invalid_argument("select_reference_frames: need t >= 1, n_refs >= 1");
  std::vector<int> out(static_cast<std::size_t>(n_refs));
  for (int i = 0; i < n_refs; ++i)
    out[static_cast<std::size_t>(i)] = static_cast<int>(
        static_cast<long long>(i) * t / n_refs);
  return out;
}

// hann(i) = 0.5 * (1 - cos(2*pi*i / (n-1))); n == 1 gives {1}.
inline std::vector<double> hanning_window(int n) {
  if (n < 1) throw std::invalid_argument("hanning_window: n must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  if (n == 1) return w;
  for (int i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] =
        0.5 * (1.0 - std::cos(2.0 * M_PI * i / (n - 1)));
  return w;
}

// Elementwise product of a side*side score map with the separable 2-D window.
template <class T>
std::vector<T> hanning_penalty(const std::vector<T>& scores, int side) {
  if (scores.size() != static_cast<std::size_t>(side) * side)
    throw std::invalid_argument("hanning_penalty: size does not match side^2");
  const std::vector<double> w = hanning_window(side);
  std::vector<T> out(scores.size());
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * side + c;
      out[i] = static_cast<T>(scores[i] * w[static_cast<std::size_t>(r)] *
                              w[static_cast<std::size_t>(c)]);
    }
  return out;
}

template <class T>
struct StepResult {
  BBox box;
  double score = 0;       // penalized peak score
  bool fallback = false;  // non-finite output, previous box reused
};

// Penalized peak scores below this are treated as "target lost this frame".
inline constexpr double kMinConfidence = 0.2;

template <class T>
class Tracker {
 public:
  Tracker(const Model<T>* model, const RunConfig& cfg) : model_(model), cfg_(cfg) {}

  // Frame 0 carries the ground-truth box and is never predicted.
  void reset(const Image& frame0, const BBox& init) {
    kept_.clear();
    kept_.push_back({0, frame0, init});
    last_box_ = init;
    anchor_w_ = init.w;
    anchor_h_ = init.h;
    state_ = model_->emb.state_token.detach();
    t_ = 1;
  }

  int frame_index() const { return t_; }
  const BBox& last_box() const { return last_box_; }

  StepResult<T> step(const Image& frame) {
    const ModelConfig& mc = cfg_.model;
    std::vector<RefInput<T>> refs;
    for (int idx : select_reference_frames(t_, mc.refs)) {
      const Kept& k = kept_at_or_before(idx);
      auto [crop, tf] =
          crop_and_resize(k.frame, k.box, mc.ref_crop_factor, mc.ref_size);
      refs.push_back({model_->patch_embed(crop, false), tf.to_crop(k.box)});
    }
    // the crop is sized from the slow anchor, not the per-frame prediction:
    // crop side scales with box area, so feeding predictions (which carry a
    // systematic size bias) straight back in produces runaway scale drift
    auto [scrop, stf] = crop_and_resize(
        frame, BBox::from_center(last_box_.cx(), last_box_.cy(), anchor_w_, anchor_h_),
        mc.search_crop_factor, mc.search_size);
    auto out = model_->forward(state_, refs, model_->patch_embed(scrop, true));

    StepResult<T> res;
    const int side = mc.search_cells();
    std::vector<T> raw(out.head.score.values());
    bool finite = true;
    for (T v : raw) finite = finite && std::isfinite(static_cast<double>(v));
    for (T v : out.head.box.values())
      finite = finite && std::isfinite(static_cast<double>(v));
    if (!finite) {
      res.box = last_box_;
      res.fallback = true;
    } else {
      std::vector<T> pen = hanning_penalty(raw, side);
      std::size_t cell = 0;
      for (std::size_t i = 1; i < pen.size(); ++i)
        if (pen[i] > pen[cell]) cell = i;
      res.score = static_cast<double>(pen[cell]);
      const T* b = out.head.box.data() + cell * 4;
      // normalized (cx, cy, w, h) in the search crop -> frame pixels
      BBox in_crop = BBox::from_center(b[0] * mc.search_size, b[1] * mc.search_size,
                                       b[2] * mc.search_size, b[3] * mc.search_size);
      BBox cand = stf.to_frame(in_crop).clamped(frame.w, frame.h);
      if (cand.w < 1 || cand.h < 1 || res.score < kMinConfidence) {
        // low confidence or degenerate box: hold position, the target stays
        // inside the search region and can be reacquired
        res.box = last_box_;
        res.fallback = true;
      } else {
        // report the predicted center with a size damped toward the anchor:
        // the regressed size is the noisiest output, so it is blended 50/50
        // with the anchor and kept inside a tight trust region around it
        const double w =
            std::clamp(0.5 * anchor_w_ + 0.5 * cand.w, 0.85 * anchor_w_, 1.18 * anchor_w_);
        const double h =
            std::clamp(0.5 * anchor_h_ + 0.5 * cand.h, 0.85 * anchor_h_, 1.18 * anchor_h_);
        res.box = BBox::from_center(cand.cx(), cand.cy(), w, h).clamped(frame.w, frame.h);
        // the anchor follows only predictions that already agree with it
        // (within the trust region), at 2% per confident frame; predictions
        // with a persistent size bias therefore cannot drag it along
        if (cand.w > 0.8 * anchor_w_ && cand.w < 1.25 * anchor_w_)
          anchor_w_ = 0.98 * anchor_w_ + 0.02 * cand.w;
        if (cand.h > 0.8 * anchor_h_ && cand.h < 1.25 * anchor_h_)
          anchor_h_ = 0.98 * anchor_h_ + 0.02 * cand.h;
      }
    }

    if (t_ % cfg_.history_stride == 0) kept_.push_back({t_, frame, res.box});
    last_box_ = res.box;
    // additive carry, matching training: next input state is the learnable
    // token plus this frame's output state
    state_ = add(model_->emb.state_token, out.state_out).detach();
    ++t_;
    return res;
  }

 private:
  struct Kept {
    int index;
    Image frame;
    BBox box;
  };

  const Kept& kept_at_or_before(int idx) const {
    const Kept* best = &kept_.front();
    for (const auto& k : kept_)
      if (k.index <= idx && k.index >= best->index) best = &k;
    return *best;
  }

  const Model<T>* model_;
  RunConfig cfg_;
  std::vector<Kept> kept_;
  Tensor<T> state_;
  BBox last_box_;
  double anchor_w_ = 0, anchor_h_ = 0;  // slow size estimate for crop sizing
  int t_ = 0;
};

}  // namespace moetrack
