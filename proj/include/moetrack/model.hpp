// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include "moetrack/bbox.hpp"
#include "moetrack/config.hpp"
#include "moetrack/image.hpp"
#include "moetrack/tensor.hpp"
#include "moetrack/tmoe.hpp"

// The tracker model: patch embedding, token assembly (state token, N
// reference frames with foreground/background type embeddings, search
// region), a stack of pre-norm blocks whose attention and FFN projections
// are all TMoE layers, and the decoupled classification/regression head fed
// by state-token reweighted search tokens.

namespace moetrack {

template <class T>
struct Embeddings {
  Tensor<T> patch_proj_w;  // [3*M*M x d]
  Tensor<T> patch_proj_b;  // [d]
  Tensor<T> pe_ref;        // [N_T x d], one table shared by all reference slots
  Tensor<T> pe_search;     // [N_X x d]
  Tensor<T> te_fg, te_bg, te_search;  // [d]
  Tensor<T> state_token;   // [1 x d], the learnable propagating token
};

template <class T>
struct Block {
  Tensor<T> ln1_g, ln1_b, ln2_g, ln2_b;
  TMoEParams<T> q, k, v, o;    // d -> d
  TMoEParams<T> fc1;           // d -> 4d
  TMoEParams<T> fc2;           // 4d -> d
  int heads = 1;
};

template <class T>
struct HeadMLP {
  // Two decoupled 3-layer MLPs (hidden width d, GELU), no shared parameters.
  Tensor<T> cls_w1, cls_b1, cls_w2, cls_b2, cls_w3, cls_b3;  // d->d->d->1
  Tensor<T> reg_w1, reg_b1, reg_w2, reg_b2, reg_w3, reg_b3;  // d->d->d->4
};

// One reference frame after cropping: its tokens plus the target box in
// crop pixel coordinates (drives the fg/bg type embedding assignment).
template <class T>
struct RefInput {
  Tensor<T> tokens;  // [N_T x d]
  BBox box_in_crop;
};

template <class T>
struct HeadOut {
  Tensor<T> score;   // [N_X x 1], sigmoid-bounded
  Tensor<T> box;     // [N_X x 4], per-cell (cx, cy, w, h) in [0,1] crop coords
  Tensor<T> weight;  // [N_X], the mean-one reweighting vector U
};

// ---------------------------------------------------------------- patches ---

// Non-overlapping M x M patches flattened row-major (pixel-major,
// channel-minor), normalized by the fixed channel statistics.
template <class T>
Tensor<T> image_patches(const Image& img, int M) {
  if (img.w != img.h || img.w % M != 0)
    throw std::invalid_argument("image_patches: size " + std::to_string(img.w) + "x" +
                                std::to_string(img.h) + " not divisible by patch " +
                                std::to_string(M));
  const int g = img.w / M;
  const int pdim = 3 * M * M;
  std::vector<T> out(static_cast<std::size_t>(g) * g * pdim);
  std::size_t idx = 0;
  for (int pr = 0; pr < g; ++pr)
    for (int pc = 0; pc < g; ++pc)
      for (int py = 0; py < M; ++py)
        for (int px = 0; px < M; ++px)
          for (int c = 0; c < 3; ++c)
            out[idx++] = static_cast<T>(
                (img.at(pc * M + px, pr * M + py, c) - kChannelMean[c]) / kChannelStd[c]);
  return Tensor<T>::from({g * g, pdim}, std::move(out));
}

// ------------------------------------------------------------------ model ---

template <class T>
struct Model {
  ModelConfig cfg;
  Embeddings<T> emb;
  std::vector<Block<T>> blocks;
  Tensor<T> lnf_g, lnf_b;  // final LN, applied before the head
  HeadMLP<T> head;

  struct Named {
    std::string name;
    Tensor<T>* tensor;
  };

  static Model init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    const int d = cfg.dim, M = cfg.patch;
    const T s = T(0.02);
    m.emb.patch_proj_w =
        Tensor<T>::randn({3 * M * M, d}, rng, s, !cfg.freeze_patch_embed);
    m.emb.patch_proj_b = Tensor<T>::zeros({d}, !cfg.freeze_patch_embed);
    m.emb.pe_ref = Tensor<T>::randn({cfg.ref_tokens(), d}, rng, s, true);
    m.emb.pe_search = Tensor<T>::randn({cfg.search_tokens(), d}, rng, s, true);
    m.emb.te_fg = Tensor<T>::randn({d}, rng, s, true);
    m.emb.te_bg = Tensor<T>::randn({d}, rng, s, true);
    m.emb.te_search = Tensor<T>::randn({d}, rng, s, true);
    m.emb.state_token = Tensor<T>::randn({1, d}, rng, s, true);
    m.blocks.reserve(static_cast<std::size_t>(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) {
      Block<T> b;
      b.heads = cfg.heads;
      b.ln1_g = Tensor<T>::filled({d}, T(1), false);
      b.ln1_b = Tensor<T>::zeros({d}, false);
      b.ln2_g = Tensor<T>::filled({d}, T(1), false);
      b.ln2_b = Tensor<T>::zeros({d}, false);
      b.q = TMoEParams<T>::init(d, d, cfg.experts, cfg.rank, rng);
      b.k = TMoEParams<T>::init(d, d, cfg.experts, cfg.rank, rng);
      b.v = TMoEParams<T>::init(d, d, cfg.experts, cfg.rank, rng);
      b.o = TMoEParams<T>::init(d, d, cfg.experts, cfg.rank, rng);
      b.fc1 = TMoEParams<T>::init(d, cfg.ffn_dim(), cfg.experts, cfg.rank, rng);
      b.fc2 = TMoEParams<T>::init(cfg.ffn_dim(), d, cfg.experts, cfg.rank, rng);
      m.blocks.push_back(std::move(b));
    }
    m.lnf_g = Tensor<T>::filled({d}, T(1), false);
    m.lnf_b = Tensor<T>::zeros({d}, false);
    auto linear = [&](int din, int dout, Tensor<T>& w, Tensor<T>& b2) {
      w = Tensor<T>::randn({din, dout}, rng, T(1) / std::sqrt(T(din)), true);
      b2 = Tensor<T>::zeros({dout}, true);
    };
    linear(d, d, m.head.cls_w1, m.head.cls_b1);
    linear(d, d, m.head.cls_w2, m.head.cls_b2);
    linear(d, 1, m.head.cls_w3, m.head.cls_b3);
    linear(d, d, m.head.reg_w1, m.head.reg_b1);
    linear(d, d, m.head.reg_w2, m.head.reg_b2);
    linear(d, 4, m.head.reg_w3, m.head.reg_b3);
    return m;
  }

  std::vector<Named> all_params() {
    std::vector<Named> out;
    auto p = [&](const std::string& n, Tensor<T>& t) { out.push_back({n, &t}); };
    p("emb.patch_proj_w", emb.patch_proj_w);
    p("emb.patch_proj_b", emb.patch_proj_b);
    p("emb.pe_ref", emb.pe_ref);
    p("emb.pe_search", emb.pe_search);
    p("emb.te_fg", emb.te_fg);
    p("emb.te_bg", emb.te_bg);
    p("emb.te_search", emb.te_search);
    p("emb.state_token", emb.state_token);
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      const std::string bp = "block" + std::to_string(l) + ".";
      Block<T>& b = blocks[l];
      p(bp + "ln1_g", b.ln1_g);
      p(bp + "ln1_b", b.ln1_b);
      p(bp + "ln2_g", b.ln2_g);
      p(bp + "ln2_b", b.ln2_b);
      auto moe = [&](const std::string& mp, TMoEParams<T>& t) {
        p(mp + ".shared_w", t.shared_w);
        p(mp + ".shared_b", t.shared_b);
        p(mp + ".router_w", t.router_w);
        p(mp + ".router_b", t.router_b);
        p(mp + ".compress_w", t.compress_w);
        for (std::size_t i = 0; i < t.routed_w.size(); ++i)
          p(mp + ".routed_w" + std::to_string(i), t.routed_w[i]);
      };
      moe(bp + "q", b.q);
      moe(bp + "k", b.k);
      moe(bp + "v", b.v);
      moe(bp + "o", b.o);
      moe(bp + "fc1", b.fc1);
      moe(bp + "fc2", b.fc2);
    }
    p("ln_f.g", lnf_g);
    p("ln_f.b", lnf_b);
    p("head.cls_w1", head.cls_w1); p("head.cls_b1", head.cls_b1);
    p("head.cls_w2", head.cls_w2); p("head.cls_b2", head.cls_b2);
    p("head.cls_w3", head.cls_w3); p("head.cls_b3", head.cls_b3);
    p("head.reg_w1", head.reg_w1); p("head.reg_b1", head.reg_b1);
    p("head.reg_w2", head.reg_w2); p("head.reg_b2", head.reg_b2);
    p("head.reg_w3", head.reg_w3); p("head.reg_b3", head.reg_b3);
    return out;
  }

  std::vector<Named> trainable_params() {
    std::vector<Named> out;
    for (auto& n : all_params())
      if (n.tensor->requires_grad()) out.push_back(n);
    return out;
  }

  void zero_grads() {
    for (auto& n : trainable_params()) n.tensor->zero_grad();
  }

  // ------------------------------------------------------------ pipeline ---

  Tensor<T> patch_embed(const Image& img, bool search) const {
    const int want = search ? cfg.search_size : cfg.ref_size;
    if (img.w != want || img.h != want)
      throw std::invalid_argument("patch_embed: expected " + std::to_string(want) +
                                  "px crop, got " + std::to_string(img.w));
    return add_rowvec(matmul(image_patches<T>(img, cfg.patch), emb.patch_proj_w),
                      emb.patch_proj_b);
  }

  // Foreground mask over the N_T reference tokens: patch center inside the
  // half-open box [x, x+w) x [y, y+h), in crop pixels.
  std::vector<T> fg_mask(const BBox& box_in_crop) const {
    const int g = cfg.ref_size / cfg.patch;
    BBox b = box_in_crop;
    if (b.x < 0 || b.y < 0 || b.x + b.w > cfg.ref_size || b.y + b.h > cfg.ref_size) {
      std::fprintf(stderr, "warning: reference bbox outside crop, clamping\n");
      b = b.clamped(cfg.ref_size, cfg.ref_size);
    }
    std::vector<T> mask(static_cast<std::size_t>(g) * g, T(0));
    for (int row = 0; row < g; ++row)
      for (int col = 0; col < g; ++col) {
        const double cx = col * cfg.patch + cfg.patch / 2.0;
        const double cy = row * cfg.patch + cfg.patch / 2.0;
        if (cx >= b.x && cx < b.x + b.w && cy >= b.y && cy < b.y + b.h)
          mask[static_cast<std::size_t>(row) * g + col] = T(1);
      }
    return mask;
  }

  // I = Concat(state, T_1..T_N, X) with positional + type embeddings applied.
  Tensor<T> assemble_input(const Tensor<T>& state_in,
                           const std::vector<RefInput<T>>& refs,
                           const Tensor<T>& search_tokens) const {
    if (static_cast<int>(refs.size()) != cfg.refs)
      throw std::invalid_argument("assemble_input: expected " + std::to_string(cfg.refs) +
                                  " reference frames, got " + std::to_string(refs.size()));
    const int nt = cfg.ref_tokens(), nx = cfg.search_tokens();
    std::vector<Tensor<T>> parts;
    parts.push_back(state_in);  // no positional embedding on the state token
    for (const auto& ref : refs) {
      std::vector<T> m = fg_mask(ref.box_in_crop);
      std::vector<T> inv(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) inv[i] = T(1) - m[i];
      Tensor<T> type = add(mul_rows(repeat_row(emb.te_fg, nt),
                                    Tensor<T>::from({nt}, std::move(m))),
                           mul_rows(repeat_row(emb.te_bg, nt),
                                    Tensor<T>::from({nt}, std::move(inv))));
      parts.push_back(add(add(ref.tokens, emb.pe_ref), type));
    }
    parts.push_back(add(add(search_tokens, emb.pe_search),
                        repeat_row(emb.te_search, nx)));
    return concat_rows(parts);
  }

  // --------------------------------------------------------------- blocks ---

  static Tensor<T> m2sa(const Tensor<T>& tokens, const Block<T>& b) {
    const int n = tokens.dim(0), d = tokens.dim(1);
    const int dh = d / b.heads;
    Tensor<T> q = tmoe_forward(tokens, b.q);
    Tensor<T> k = tmoe_forward(tokens, b.k);
    Tensor<T> v = tmoe_forward(tokens, b.v);
    std::vector<Tensor<T>> heads;
    heads.reserve(static_cast<std::size_t>(b.heads));
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    for (int h = 0; h < b.heads; ++h) {
      Tensor<T> qh = slice_cols(q, h * dh, dh);
      Tensor<T> kh = slice_cols(k, h * dh, dh);
      Tensor<T> vh = slice_cols(v, h * dh, dh);
      Tensor<T> attn = softmax(scale(matmul_nt(qh, kh), inv_sqrt));  // [n x n]
      heads.push_back(matmul(attn, vh));
    }
    (void)n;
    return tmoe_forward(concat_cols(heads), b.o);
  }

  static Tensor<T> mffn(const Tensor<T>& tokens, const Block<T>& b) {
    return tmoe_forward(gelu(tmoe_forward(tokens, b.fc1)), b.fc2);
  }

  static Tensor<T> block_forward(const Tensor<T>& x, const Block<T>& b) {
    Tensor<T> a = add(m2sa(layer_norm(x, b.ln1_g, b.ln1_b), b), x);
    return add(mffn(layer_norm(a, b.ln2_g, b.ln2_b), b), a);
  }

  // The L pre-norm blocks; the final LN is applied separately before the head
  // so that a zero-weight stack is exactly the identity.
  Tensor<T> encoder_forward(const Tensor<T>& input) const {
    Tensor<T> x = input;
    for (const auto& b : blocks) x = block_forward(x, b);
    return x;
  }

  struct SplitOut {
    Tensor<T> state;                // H' [1 x d]
    std::vector<Tensor<T>> refs;    // N of [N_T x d]
    Tensor<T> search;               // X' [N_X x d]
  };

  SplitOut split(const Tensor<T>& encoded) const {
    const int nt = cfg.ref_tokens(), nx = cfg.search_tokens();
    SplitOut s;
    s.state = slice_rows(encoded, 0, 1);
    for (int i = 0; i < cfg.refs; ++i)
      s.refs.push_back(slice_rows(encoded, 1 + i * nt, nt));
    s.search = slice_rows(encoded, 1 + cfg.refs * nt, nx);
    return s;
  }

  // ----------------------------------------------------------------- head ---

  HeadOut<T> head_forward(const Tensor<T>& hp, const Tensor<T>& xp) const {
    const int nx = xp.dim(0), d = xp.dim(1);
    // U = softmax(X'H'^T / sqrt(d)) * N_X: mean one, so H' = 0 leaves X' as-is.
    Tensor<T> logits = scale(matmul_nt(xp, hp), T(1) / std::sqrt(static_cast<T>(d)));
    Tensor<T> u = scale(softmax(reshape(logits, {1, nx})), static_cast<T>(nx));
    u = reshape(u, {nx});
    Tensor<T> f = mul_rows(xp, u);
    auto mlp3 = [&](const Tensor<T>& w1, const Tensor<T>& b1, const Tensor<T>& w2,
                    const Tensor<T>& b2, const Tensor<T>& w3, const Tensor<T>& b3) {
      Tensor<T> h1 = gelu(add_rowvec(matmul(f, w1), b1));
      Tensor<T> h2 = gelu(add_rowvec(matmul(h1, w2), b2));
      return sigmoid(add_rowvec(matmul(h2, w3), b3));
    };
    HeadOut<T> out;
    out.score = mlp3(head.cls_w1, head.cls_b1, head.cls_w2, head.cls_b2,
                     head.cls_w3, head.cls_b3);
    out.box = mlp3(head.reg_w1, head.reg_b1, head.reg_w2, head.reg_b2,
                   head.reg_w3, head.reg_b3);
    out.weight = u;
    return out;
  }

  struct ForwardOut {
    HeadOut<T> head;
    Tensor<T> state_out;  // H' (pre final-LN), carried to the next frame
  };

  ForwardOut forward(const Tensor<T>& state_in, const std::vector<RefInput<T>>& refs,
                     const Tensor<T>& search_tokens) const {
    Tensor<T> encoded = encoder_forward(assemble_input(state_in, refs, search_tokens));
    SplitOut s = split(encoded);
    ForwardOut out;
    out.state_out = s.state;
    out.head = head_forward(layer_norm(s.state, lnf_g, lnf_b),
                            layer_norm(s.search, lnf_g, lnf_b));
    return out;
  }
};

// ------------------------------------------------------------------- loss ---

// Differentiable generalized IoU between a predicted [1 x 4] (cx,cy,w,h) row
// and a constant target box, both in normalized crop coordinates.
template <class T>
Tensor<T> giou_t(const Tensor<T>& pred, const std::array<T, 4>& gt) {
  auto comp = [&](int i) { return reshape(slice_cols(pred, i, 1), {1}); };
  Tensor<T> cx = comp(0), cy = comp(1), w = comp(2), h = comp(3);
  Tensor<T> half = Tensor<T>::scalar(T(0.5));
  Tensor<T> ax1 = sub(cx, mul(w, half)), ax2 = add(cx, mul(w, half));
  Tensor<T> ay1 = sub(cy, mul(h, half)), ay2 = add(cy, mul(h, half));
  const T bx1 = gt[0] - gt[2] / 2, bx2 = gt[0] + gt[2] / 2;
  const T by1 = gt[1] - gt[3] / 2, by2 = gt[1] + gt[3] / 2;
  auto c = [](T v) { return Tensor<T>::scalar(v); };
  Tensor<T> iw = relu(sub(min_t(ax2, c(bx2)), max_t(ax1, c(bx1))));
  Tensor<T> ih = relu(sub(min_t(ay2, c(by2)), max_t(ay1, c(by1))));
  Tensor<T> inter = mul(iw, ih);
  Tensor<T> area_a = mul(w, h);
  const T area_b = gt[2] * gt[3];
  Tensor<T> uni = sub(add_const(area_a, area_b), inter);
  Tensor<T> cw = sub(max_t(ax2, c(bx2)), min_t(ax1, c(bx1)));
  Tensor<T> ch = sub(max_t(ay2, c(by2)), min_t(ay1, c(by1)));
  Tensor<T> enc = mul(cw, ch);
  const T tiny = T(1e-9);
  Tensor<T> iou_term = div(inter, add_const(uni, tiny));
  Tensor<T> penalty = div(sub(enc, uni), add_const(enc, tiny));
  return sub(iou_term, penalty);
}

// BCE over the one-hot center map (mean reduction) plus 1 - GIoU at the
// ground-truth cell; both weights 1.
template <class T>
Tensor<T> tracking_loss(const HeadOut<T>& out, int gt_cell,
                        const std::array<T, 4>& gt_box_norm, T eps = T(1e-7)) {
  const int nx = out.score.dim(0);
  if (gt_cell < 0 || gt_cell >= nx)
    throw std::invalid_argument("tracking_loss: gt cell out of range");
  std::vector<T> target(static_cast<std::size_t>(nx), T(0));
  target[static_cast<std::size_t>(gt_cell)] = T(1);
  Tensor<T> t = Tensor<T>::from({nx, 1}, std::move(target));
  Tensor<T> s = clamp(out.score, eps, T(1) - eps);
  Tensor<T> ones = Tensor<T>::filled({nx, 1}, T(1));
  Tensor<T> bce = scale(
      mean(add(mul(t, log_t(s)), mul(sub(ones, t), log_t(sub(ones, s))))), T(-1));
  Tensor<T> g = giou_t(slice_rows(out.box, gt_cell, 1), gt_box_norm);
  return add(bce, sub(Tensor<T>::scalar(T(1)), g));
}

}  // namespace moetrack
