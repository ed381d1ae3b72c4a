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

#ifndef MMA_CHECKPOINT_HPP
#define MMA_CHECKPOINT_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "mma/tensor.hpp"

namespace mma {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Checkpoint layout: magic "MMA1", u32 little-endian metadata length, UTF-8
// JSON metadata {"config": ..., "params": [{"name", "shape"}, ...]}, then raw
// little-endian f32 data in manifest order.
void write_checkpoint(const std::string& path, const nlohmann::json& config,
                      const std::vector<NamedParam>& params);

struct Checkpoint {
  nlohmann::json config;
  std::vector<std::string> names;
  std::vector<std::vector<int>> shapes;
  std::vector<std::vector<float>> blobs;
};

Checkpoint read_checkpoint(const std::string& path);

// Copies blobs into the given parameter list, enforcing matching manifest
// order, names, and shapes.
void load_into(const Checkpoint& ckpt, std::vector<NamedParam>& params);

}  // namespace mma

#endif  // MMA_CHECKPOINT_HPP
