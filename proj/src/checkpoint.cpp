// Copyright 2026 The mmastream Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mma/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mma {

namespace {
constexpr char kMagic[4] = {'M', 'M', 'A', '1'};
}

void write_checkpoint(const std::string& path, const nlohmann::json& config,
                      const std::vector<NamedParam>& params) {
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& p : params) {
    manifest.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  }
  const nlohmann::json meta = {{"config", config}, {"params", manifest}};
  const std::string meta_str = meta.dump();
  if (meta_str.size() > 0xffffffffull) throw std::runtime_error("checkpoint metadata too large");

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(kMagic, 4);
  const uint32_t n = static_cast<uint32_t>(meta_str.size());
  const unsigned char len[4] = {static_cast<unsigned char>(n & 0xff),
                                static_cast<unsigned char>((n >> 8) & 0xff),
                                static_cast<unsigned char>((n >> 16) & 0xff),
                                static_cast<unsigned char>((n >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(len), 4);
  f.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  for (const auto& p : params) {
    f.write(reinterpret_cast<const char*>(p.tensor.data()),
            static_cast<std::streamsize>(p.tensor.vec().size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("write failed for checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  unsigned char len[4];
  f.read(reinterpret_cast<char*>(len), 4);
  if (!f) throw std::runtime_error("truncated checkpoint header in " + path);
  const uint32_t n = static_cast<uint32_t>(len[0]) | (static_cast<uint32_t>(len[1]) << 8) |
                     (static_cast<uint32_t>(len[2]) << 16) | (static_cast<uint32_t>(len[3]) << 24);
  std::string meta_str(n, '\0');
  f.read(meta_str.data(), n);
  if (!f) throw std::runtime_error("truncated checkpoint metadata in " + path);

  Checkpoint ckpt;
  nlohmann::json meta = nlohmann::json::parse(meta_str);
  ckpt.config = meta.at("config");
  for (const auto& entry : meta.at("params")) {
    ckpt.names.push_back(entry.at("name").get<std::string>());
    ckpt.shapes.push_back(entry.at("shape").get<std::vector<int>>());
    int64_t numel = 1;
    for (int d : ckpt.shapes.back()) numel *= d;
    std::vector<float> blob(static_cast<size_t>(numel));
    f.read(reinterpret_cast<char*>(blob.data()),
           static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!f) throw std::runtime_error("truncated parameter data in " + path);
    ckpt.blobs.push_back(std::move(blob));
  }
  return ckpt;
}

void load_into(const Checkpoint& ckpt, std::vector<NamedParam>& params) {
  if (ckpt.names.size() != params.size())
    throw std::runtime_error("checkpoint manifest length mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (ckpt.names[i] != params[i].name)
      throw std::runtime_error("checkpoint manifest name mismatch at " + ckpt.names[i] +
                               " vs " + params[i].name);
    if (ckpt.shapes[i] != params[i].tensor.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + ckpt.names[i]);
    params[i].tensor.vec() = ckpt.blobs[i];
  }
}

}  // namespace mma
