// SPDX-License-Identifier: Apache-2.0

#include "moetrack/param_count.hpp"

#include <cstdio>
#include <sstream>

namespace moetrack {

std::int64_t ParamReport::total() const {
  std::int64_t s = 0;
  for (const auto& e : entries) s += e.total;
  return s;
}

std::int64_t ParamReport::trainable() const {
  std::int64_t s = 0;
  for (const auto& e : entries) s += e.trainable;
  return s;
}

std::string ParamReport::to_text(const std::string& title) const {
  std::ostringstream os;
  os << title << "\n";
  char buf[128];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof(buf), "  %-14s total %12lld  trainable %12lld\n",
                  e.module.c_str(), static_cast<long long>(e.total),
                  static_cast<long long>(e.trainable));
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "  %-14s total %12lld  trainable %12lld (%.1f M / %.1f M)\n",
                "TOTAL", static_cast<long long>(total()),
                static_cast<long long>(trainable()), total() / 1e6, trainable() / 1e6);
  os << buf;
  return os.str();
}

namespace {

using i64 = std::int64_t;

struct Count {
  i64 total = 0;
  i64 trainable = 0;
  void frozen(i64 n) { total += n; }
  void train(i64 n) { total += n; trainable += n; }
};

// Trainable side of one linear replacement (input din, output dout).
void add_adapter(Count& c, Variant v, i64 din, i64 dout, i64 ne, i64 r) {
  switch (v) {
    case Variant::tmoe:
      c.train(din * ne + ne);       // router
      c.train(din * r);             // shared compression expert
      c.train(ne * r * dout);       // routed experts
      break;
    case Variant::per_expert_compression:
      c.train(din * ne + ne);
      c.train(ne * (din * r + r * dout));
      break;
    case Variant::lora_baseline:
      c.train(din * r + r * dout);
      break;
    case Variant::conventional_moe:
      // handled at block level
      break;
  }
}

}  // namespace

ParamReport count_params(const ModelConfig& cfg, Variant variant) {
  cfg.validate();
  const i64 d = cfg.dim, f = cfg.ffn_dim(), ne = cfg.experts, r = cfg.rank;
  const i64 nt = cfg.ref_tokens(), nx = cfg.search_tokens();

  ParamReport rep;

  Count emb;
  {
    const i64 proj = 3 * i64(cfg.patch) * cfg.patch * d + d;
    if (cfg.freeze_patch_embed) emb.frozen(proj); else emb.train(proj);
    emb.train(nt * d);       // pe_ref (shared by all reference slots)
    emb.train(nx * d);       // pe_search
    emb.train(3 * d);        // te_fg, te_bg, te_search
    emb.train(d);            // target state token
  }
  rep.entries.push_back({"embeddings", emb.total, emb.trainable});

  Count bb;
  for (int l = 0; l < cfg.layers; ++l) {
    bb.frozen(4 * d);  // two pre-norm LN layers
    if (variant == Variant::conventional_moe) {
      // LoRA-adapted attention, MoE FFN with FFN-sized experts.
      bb.frozen(4 * (d * d + d));
      for (int p = 0; p < 4; ++p) bb.train(d * r + r * d);
      const i64 ffn = (d * f + f) + (f * d + d);
      bb.frozen(ffn);            // frozen shared FFN
      bb.train(ne * ffn);        // routed FFN experts
      bb.train(d * ne + ne);     // router
    } else {
      // q, k, v, o projections
      for (int p = 0; p < 4; ++p) {
        bb.frozen(d * d + d);
        add_adapter(bb, variant, d, d, ne, r);
      }
      bb.frozen(d * f + f);
      add_adapter(bb, variant, d, f, ne, r);
      bb.frozen(f * d + d);
      add_adapter(bb, variant, f, d, ne, r);
    }
  }
  bb.frozen(2 * d);  // final LN
  rep.entries.push_back({"backbone", bb.total, bb.trainable});

  Count head;
  head.train(2 * (d * d + d) + (d * 1 + 1));  // classification MLP
  head.train(2 * (d * d + d) + (d * 4 + 4));  // regression MLP
  rep.entries.push_back({"head", head.total, head.trainable});

  return rep;
}

}  // namespace moetrack
