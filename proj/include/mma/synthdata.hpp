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

#ifndef MMA_SYNTHDATA_HPP
#define MMA_SYNTHDATA_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "mma/tensor.hpp"

// Synthetic monotonic transduction task: each token emits a short run of a
// fixed prototype vector plus Gaussian noise, with the gold boundary frame
// recorded per token.

namespace mma {

struct TaskConfig {
  int V_s = 20;    // task vocabulary size
  int d_in = 8;    // feature dimension
  int d_min = 4;   // span duration range, raw frames
  int d_max = 8;
  float noise_sigma = 0.1f;
  int U_min = 4;  // tokens per utterance
  int U_max = 12;
  // trailing noise-only frames after the last token, the analog of tail
  // silence; gives the end-of-sequence step frames to align to
  int sil_frames = 8;
  int n_train = 2000;
  int n_dev = 200;
  int n_test = 200;
  uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const TaskConfig& cfg);
void from_json(const nlohmann::json& j, TaskConfig& cfg);

struct SyntheticSample {
  std::string id;
  Tensor frames;                     // [T_raw, d_in]
  std::vector<int> tokens;           // task symbols
  std::vector<int> true_boundaries;  // 1-based last frame per token, post-stacking
};

using Dataset = std::vector<SyntheticSample>;

struct DatasetSplits {
  Dataset train, dev, test;
};

// Prototype vectors are a fixed function of the seed and shared across
// splits. Token sequences are kept disjoint across splits where the
// configuration leaves enough room (a warning is printed otherwise).
std::vector<std::vector<float>> task_prototypes(const TaskConfig& cfg);
DatasetSplits generate(const TaskConfig& cfg, int frame_stack_factor);

// JSONL, one sample per line: {"id", "tokens", "true_boundaries", "frames"}.
void save_jsonl(const Dataset& ds, const std::string& path);
Dataset load_jsonl(const std::string& path);

// FNV-1a over the raw bytes of a file, for the dataset manifest.
std::string file_content_hash(const std::string& path);

}  // namespace mma

#endif  // MMA_SYNTHDATA_HPP
