// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "moetrack/model.hpp"

// Checkpoint file layout: 8-byte magic, little-endian u64 manifest length,
// JSON manifest (embedded config plus per-tensor name/shape/dtype/offset/
// frozen), then the raw little-endian f32 payload. Save -> load -> save is
// byte-identical.

namespace moetrack {

struct TensorRecord {
  std::string name;
  Shape shape;
  bool frozen = false;
  std::vector<float> data;
};

struct Checkpoint {
  std::string config_json;
  std::vector<TensorRecord> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

template <class T>
Checkpoint snapshot(Model<T>& m, const std::string& config_json) {
  Checkpoint ck;
  ck.config_json = config_json;
  for (auto& p : m.all_params()) {
    TensorRecord r;
    r.name = p.name;
    r.shape = p.tensor->shape();
    r.frozen = !p.tensor->requires_grad();
    r.data.assign(p.tensor->values().begin(), p.tensor->values().end());
    ck.tensors.push_back(std::move(r));
  }
  return ck;
}

template <class T>
void restore(Model<T>& m, const Checkpoint& ck) {
  std::unordered_map<std::string, const TensorRecord*> by_name;
  for (const auto& r : ck.tensors) by_name[r.name] = &r;
  for (auto& p : m.all_params()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: missing tensor " + p.name);
    const TensorRecord& r = *it->second;
    if (r.shape != p.tensor->shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name + ": " +
                               shape_str(r.shape) + " vs " + shape_str(p.tensor->shape()));
    for (std::size_t i = 0; i < r.data.size(); ++i)
      p.tensor->values()[i] = static_cast<T>(r.data[i]);
    p.tensor->set_requires_grad(!r.frozen);
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw std::runtime_error("checkpoint: unexpected tensor " + by_name.begin()->first);
}

}  // namespace moetrack
