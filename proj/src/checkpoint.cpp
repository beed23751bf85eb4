// SPDX-License-Identifier: Apache-2.0

#include "moetrack/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace moetrack {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'T', 'C', 'K', 'P', 'T', '1', '\n'};

void put_u64le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  json manifest;
  manifest["config"] = json::parse(ck.config_json);
  json tensors = json::array();
  std::uint64_t offset = 0;  // bytes into the payload
  for (const auto& r : ck.tensors) {
    tensors.push_back({{"name", r.name},
                       {"shape", r.shape},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"frozen", r.frozen}});
    offset += std::uint64_t(r.data.size()) * 4;
  }
  manifest["tensors"] = std::move(tensors);
  const std::string header = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, 8);
  put_u64le(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& r : ck.tensors) {
    // f32 little-endian; byte-swap only needed on big-endian hosts
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(r.data.data()),
              static_cast<std::streamsize>(r.data.size() * 4));
  }
  if (!out) throw std::runtime_error("checkpoint: short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint64_t hlen = get_u64le(in);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("checkpoint: truncated manifest in " + path);
  json manifest = json::parse(header);

  Checkpoint ck;
  ck.config_json = manifest.at("config").dump(2);
  std::uint64_t expect_offset = 0;
  for (const json& t : manifest.at("tensors")) {
    TensorRecord r;
    r.name = t.at("name").get<std::string>();
    r.shape = t.at("shape").get<Shape>();
    r.frozen = t.at("frozen").get<bool>();
    if (t.at("dtype").get<std::string>() != "f32")
      throw std::runtime_error("checkpoint: unsupported dtype for " + r.name);
    if (t.at("offset").get<std::uint64_t>() != expect_offset)
      throw std::runtime_error("checkpoint: non-contiguous payload at " + r.name);
    r.data.resize(shape_numel(r.shape));
    in.read(reinterpret_cast<char*>(r.data.data()),
            static_cast<std::streamsize>(r.data.size() * 4));
    if (!in) throw std::runtime_error("checkpoint: truncated payload in " + path);
    expect_offset += std::uint64_t(r.data.size()) * 4;
    ck.tensors.push_back(std::move(r));
  }
  return ck;
}

}  // namespace moetrack
