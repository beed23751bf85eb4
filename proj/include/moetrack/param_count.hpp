// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moetrack/config.hpp"

namespace moetrack {

// Closed-form parameter accounting; no model instantiation. Counts mirror
// the construction in model.hpp exactly for the tmoe and
// per_expert_compression layouts; the conventional_moe and lora_baseline
// layouts are count-only comparison points.
struct ParamReport {
  struct Entry {
    std::string module;
    std::int64_t total = 0;
    std::int64_t trainable = 0;
  };
  std::vector<Entry> entries;

  std::int64_t total() const;
  std::int64_t trainable() const;
  std::string to_text(const std::string& title) const;
};

ParamReport count_params(const ModelConfig& cfg, Variant variant);

}  // namespace moetrack
