// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <tuple>
#include <vector>

#include "moetrack/config.hpp"
#include "moetrack/image.hpp"
#include "moetrack/model.hpp"

// Training on procedurally generated videos: a colored target bouncing over
// a noisy canvas with distractor shapes. Each optimizer step draws 5-frame
// sequences (3 references, 2 search frames) and runs two forward passes so
// the state token learns to carry information between consecutive searches.

namespace moetrack {

// ------------------------------------------------------------- synthesis ---

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform [0,1) from a chain of seeds, order-independent.
inline double hash_unit(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  const std::uint64_t h = splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct SynthFrame {
  Image image;
  BBox box;  // tight ground truth for the target
};

class SyntheticVideo {
 public:
  // Deterministic in (spec, video_seed, length); frames render on demand.
  SyntheticVideo(const SceneSpec& spec, std::uint64_t video_seed, int length)
      : spec_(spec), seed_(splitmix64(spec.seed ^ splitmix64(video_seed))),
        length_(length) {
    objects_.push_back(make_object(0, spec_.color, spec_.target_size));
    static constexpr std::array<std::array<double, 3>, 4> kPalette = {{
        {0.15, 0.35, 0.9}, {0.15, 0.8, 0.35}, {0.9, 0.8, 0.15}, {0.65, 0.15, 0.9}}};
    for (int i = 0; i < spec_.distractors; ++i)
      objects_.push_back(make_object(i + 1, kPalette[static_cast<std::size_t>(i) % 4],
                                     spec_.target_size * 0.8));
  }

  int length() const { return length_; }

  SynthFrame frame(int t) const {
    if (t < 0 || t >= length_) throw std::invalid_argument("frame index out of range");
    const int n = spec_.canvas;
    SynthFrame out{Image(n, n), {}};
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const std::uint64_t px = static_cast<std::uint64_t>(y) * n + x;
        for (int c = 0; c < 3; ++c)
          out.image.at(x, y, c) = static_cast<float>(
              0.5 + spec_.noise * (hash_unit(seed_, static_cast<std::uint64_t>(t),
                                             px * 3 + static_cast<std::uint64_t>(c)) -
                                   0.5));
      }
    // distractors first so the target draws on top
    for (std::size_t i = objects_.size(); i-- > 0;) {
      const BBox b = object_box(objects_[i], t);
      draw(out.image, b, objects_[i].color);
      if (i == 0) out.box = b;
    }
    return out;
  }

  BBox box(int t) const { return object_box(objects_.front(), t); }

 private:
  struct Object {
    double x0, y0, vx, vy, w0, h0;
    std::array<double, 3> color;
  };

  Object make_object(int idx, const std::array<double, 3>& color, double size) const {
    const std::uint64_t k = static_cast<std::uint64_t>(idx);
    Object o;
    o.w0 = size;
    o.h0 = size * 0.75;
    const double margin_x = o.w0 / 2 + 1, margin_y = o.h0 / 2 + 1;
    o.x0 = margin_x + hash_unit(seed_, 11, k) * (spec_.canvas - 2 * margin_x);
    o.y0 = margin_y + hash_unit(seed_, 12, k) * (spec_.canvas - 2 * margin_y);
    if (idx == 0) {
      // the target moves at exactly the configured velocity
      o.vx = spec_.velocity[0];
      o.vy = spec_.velocity[1];
    } else {
      const double sx = hash_unit(seed_, 13, k) < 0.5 ? -1 : 1;
      const double sy = hash_unit(seed_, 14, k) < 0.5 ? -1 : 1;
      o.vx = sx * spec_.velocity[0] * (0.75 + 0.5 * hash_unit(seed_, 15, k));
      o.vy = sy * spec_.velocity[1] * (0.75 + 0.5 * hash_unit(seed_, 16, k));
    }
    o.color = color;
    return o;
  }

  // Constant velocity with wall bounces, closed form via triangle-wave fold.
  static double bounce(double p0, double v, double t, double lo, double hi) {
    const double span = hi - lo;
    if (span <= 0) return (lo + hi) / 2;
    double u = std::fmod(p0 - lo + v * t, 2 * span);
    if (u < 0) u += 2 * span;
    return lo + (u <= span ? u : 2 * span - u);
  }

  BBox object_box(const Object& o, int t) const {
    double w = o.w0 * std::pow(1.0 + spec_.scale_drift, t);
    double h = o.h0 * std::pow(1.0 + spec_.scale_drift, t);
    const double max_side = spec_.canvas / 2.0;
    w = std::clamp(w, 3.0, max_side);
    h = std::clamp(h, 3.0, max_side);
    const double cx = bounce(o.x0, o.vx, t, w / 2, spec_.canvas - w / 2);
    const double cy = bounce(o.y0, o.vy, t, h / 2, spec_.canvas - h / 2);
    return BBox::from_center(cx, cy, w, h);
  }

  void draw(Image& img, const BBox& b, const std::array<double, 3>& color) const {
    const int x0 = std::max(0, static_cast<int>(std::floor(b.x)));
    const int y0 = std::max(0, static_cast<int>(std::floor(b.y)));
    const int x1 = std::min(img.w, static_cast<int>(std::ceil(b.x + b.w)));
    const int y1 = std::min(img.h, static_cast<int>(std::ceil(b.y + b.h)));
    const bool ellipse = spec_.target_shape == "ellipse";
    const double rx = b.w / 2, ry = b.h / 2;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        if (ellipse) {
          const double dx = (x + 0.5 - b.cx()) / rx, dy = (y + 0.5 - b.cy()) / ry;
          if (dx * dx + dy * dy > 1) continue;
        }
        for (int c = 0; c < 3; ++c)
          img.at(x, y, c) = static_cast<float>(color[static_cast<std::size_t>(c)]);
      }
  }

  SceneSpec spec_;
  std::uint64_t seed_;
  int length_;
  std::vector<Object> objects_;
};

// -------------------------------------------------------------- sampling ---

// 5 frame indices: start anywhere, successive gaps iid uniform [1, 200]
// clamped at the final frame, order reversed with probability 1/2.
inline std::vector<int> sample_frame_indices(int video_length, Rng& rng) {
  if (video_length < 1) throw std::invalid_argument("empty video");
  std::uniform_int_distribution<int> start_dist(0, video_length - 1);
  std::uniform_int_distribution<int> gap_dist(1, 200);
  std::vector<int> idx(5);
  idx[0] = start_dist(rng);
  for (int k = 1; k < 5; ++k)
    idx[static_cast<std::size_t>(k)] =
        std::min(idx[static_cast<std::size_t>(k - 1)] + gap_dist(rng), video_length - 1);
  if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.5)
    std::reverse(idx.begin(), idx.end());
  return idx;
}

// ------------------------------------------------------------- schedule ----

// Linear warmup to base_lr, then cosine decay to final_lr at the last step.
inline double lr_schedule(int step, const TrainConfig& c) {
  if (step < 0) throw std::invalid_argument("lr_schedule: negative step");
  if (step < c.warmup_steps)
    return c.warmup_lr + (c.base_lr - c.warmup_lr) * step / c.warmup_steps;
  const int span = c.steps - c.warmup_steps;
  if (span <= 0) return c.base_lr;
  const double prog = static_cast<double>(step - c.warmup_steps) / span;
  return c.final_lr + (c.base_lr - c.final_lr) * 0.5 * (1.0 + std::cos(M_PI * prog));
}

// --------------------------------------------------------------- optimizer --

// AdamW with decoupled weight decay; moments kept in double.
template <class T>
class AdamW {
 public:
  AdamW(std::vector<typename Model<T>::Named> params, double weight_decay,
        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    for (auto& p : params)
      slots_.push_back({p.tensor, std::vector<double>(p.tensor->size(), 0),
                        std::vector<double>(p.tensor->size(), 0)});
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (auto& s : slots_) {
      if (!s.param->has_grad()) continue;
      const auto& g = s.param->grad();
      auto& w = s.param->values();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        s.m[i] = b1_ * s.m[i] + (1.0 - b1_) * gi;
        s.v[i] = b2_ * s.v[i] + (1.0 - b2_) * gi * gi;
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        double wi = static_cast<double>(w[i]);
        wi -= lr * wd_ * wi;  // decoupled decay, not part of the moments
        wi -= lr * mhat / (std::sqrt(vhat) + eps_);
        w[i] = static_cast<T>(wi);
      }
    }
  }

  int steps_taken() const { return t_; }

 private:
  struct Slot {
    Tensor<T>* param;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  double wd_, b1_, b2_, eps_;
  int t_ = 0;
};

// ----------------------------------------------------------------- trainer --

template <class T>
class Trainer {
 public:
  Trainer(Model<T>& model, const RunConfig& cfg, int video_pool = 16)
      : model_(model), cfg_(cfg),
        opt_(model.trainable_params(), cfg.train.weight_decay),
        rng_(splitmix64(cfg.seed ^ 0x7261696eULL)) {
    for (int i = 0; i < video_pool; ++i)
      videos_.emplace_back(cfg.scene, cfg.seed * 1000 + static_cast<std::uint64_t>(i),
                           cfg.train.video_length);
  }

  struct StepStats {
    int step = 0;
    double loss = 0;
    double lr = 0;
    bool skipped = false;  // non-finite loss, no parameter update
  };

  StepStats run_step() {
    const ModelConfig& mc = cfg_.model;
    StepStats st;
    st.step = step_;
    st.lr = lr_schedule(step_, cfg_.train);

    std::vector<Tensor<T>> losses;
    for (int b = 0; b < cfg_.train.batch; ++b) {
      const SyntheticVideo& video =
          videos_[std::uniform_int_distribution<std::size_t>(0, videos_.size() - 1)(rng_)];
      const std::vector<int> idx = sample_frame_indices(video.length(), rng_);

      std::vector<RefInput<T>> refs;
      for (int k = 0; k < 3; ++k) {
        SynthFrame f = video.frame(idx[static_cast<std::size_t>(k)]);
        // mild center/scale jitter: inference crops around predicted boxes,
        // so exact-gt crops would be a train/test mismatch
        const double sj = std::exp(std::uniform_real_distribution<double>(-0.1, 0.1)(rng_));
        const double side = mc.ref_crop_factor * std::sqrt(f.box.w * f.box.h) * sj;
        std::uniform_real_distribution<double> cj(-0.05, 0.05);
        const BBox around = BBox::from_center(f.box.cx() + cj(rng_) * side,
                                              f.box.cy() + cj(rng_) * side,
                                              f.box.w * sj, f.box.h * sj);
        auto [crop, tf] = crop_and_resize(f.image, around, mc.ref_crop_factor, mc.ref_size);
        refs.push_back({model_.patch_embed(crop, false), tf.to_crop(f.box)});
      }

      Tensor<T> state = model_.emb.state_token;
      for (int k = 3; k < 5; ++k) {
        SynthFrame f = video.frame(idx[static_cast<std::size_t>(k)]);
        auto [target_cell, target_norm, tokens] = search_sample(f);
        auto out = model_.forward(state, refs, tokens);
        losses.push_back(tracking_loss(out.head, target_cell, target_norm));
        // graph-connected carry: the second pass trains the propagation path
        state = add(model_.emb.state_token, out.state_out);
      }
    }

    Tensor<T> total = scale(losses[0], T(0));
    for (const auto& l : losses) total = add(total, l);
    total = scale(total, T(1) / static_cast<T>(losses.size()));
    st.loss = static_cast<double>(total.item());

    if (!std::isfinite(st.loss)) {
      st.skipped = true;
    } else {
      model_.zero_grads();
      backward(total);
      opt_.step(st.lr);
    }
    ++step_;
    return st;
  }

  int step_count() const { return step_; }

 private:
  // Crops the search region around a jittered center, returns the target
  // cell index, the normalized (cx, cy, w, h) target, and the patch tokens.
  std::tuple<int, std::array<T, 4>, Tensor<T>> search_sample(const SynthFrame& f) {
    const ModelConfig& mc = cfg_.model;
    // scale jitter: the tracker sizes its crop from the previous predicted
    // box, so train on crops that are somewhat too large or too small
    const double sj = std::exp(std::uniform_real_distribution<double>(-0.2, 0.2)(rng_));
    const double side =
        mc.search_crop_factor * std::sqrt(std::max(f.box.w * f.box.h, 1.0)) * sj;
    std::uniform_real_distribution<double> jit(-cfg_.train.center_jitter,
                                               cfg_.train.center_jitter);
    BBox crop_ref = BBox::from_center(f.box.cx() + jit(rng_) * side,
                                      f.box.cy() + jit(rng_) * side,
                                      f.box.w * sj, f.box.h * sj);
    auto [crop, tf] = crop_and_resize(f.image, crop_ref, mc.search_crop_factor,
                                      mc.search_size);
    const BBox in_crop = tf.to_crop(f.box);
    const int g = mc.search_cells();
    const double cell_px = static_cast<double>(mc.search_size) / g;
    const int col = std::clamp(static_cast<int>(in_crop.cx() / cell_px), 0, g - 1);
    const int row = std::clamp(static_cast<int>(in_crop.cy() / cell_px), 0, g - 1);
    const T s = static_cast<T>(mc.search_size);
    return {row * g + col,
            {static_cast<T>(in_crop.cx()) / s, static_cast<T>(in_crop.cy()) / s,
             static_cast<T>(in_crop.w) / s, static_cast<T>(in_crop.h) / s},
            model_.patch_embed(crop, true)};
  }

  Model<T>& model_;
  RunConfig cfg_;
  AdamW<T> opt_;
  Rng rng_;
  std::vector<SyntheticVideo> videos_;
  int step_ = 0;
};

}  // namespace moetrack
