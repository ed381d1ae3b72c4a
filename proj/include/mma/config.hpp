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

#ifndef MMA_CONFIG_HPP
#define MMA_CONFIG_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mma/decoding.hpp"
#include "mma/model.hpp"
#include "mma/synthdata.hpp"

namespace mma {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int steps = 3000;
  int batch_size = 8;
  int warmup = 400;
  float lr_constant = 1.0f;
  float beta1 = 0.9f;
  float beta2 = 0.98f;
  float adam_eps = 1e-9f;
  int log_every = 50;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

// Union of all component configs, resolved from defaults, then an optional
// JSON file, then --set overrides (in that precedence order, later wins).
// Unknown keys anywhere are rejected.
struct RunConfig {
  uint64_t seed = 1;
  ModelConfig model;
  TaskConfig task;
  TrainConfig train;
  BeamConfig beam;
  int threads = 1;
  std::string data_dir = "data";
  std::string out_dir = "out";
  int align_limit = 16;

  // Derives model.d_in and model.vocab_size from the task and applies the
  // run seed to the task when it has none of its own; validates everything.
  void finalize();

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& config_path,
                        const std::vector<std::string>& overrides);

 private:
  bool task_seed_explicit_ = false;
  bool vocab_explicit_ = false;
  bool d_in_explicit_ = false;
};

// Parses "dotted.key=value" and applies it onto a JSON document; value is
// parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Removes tracked files unless commit() was called; keeps failed runs from
// leaving partial outputs behind.
class OutputGuard {
 public:
  ~OutputGuard();
  std::string track(const std::string& path);
  void commit() { committed_ = true; }

 private:
  std::vector<std::string> paths_;
  bool committed_ = false;
};

void write_text_file(const std::string& path, const std::string& content);

}  // namespace mma

#endif  // MMA_CONFIG_HPP
