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

#include "mma/synthdata.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "mma/rng.hpp"

namespace mma {

void TaskConfig::validate() const {
  if (V_s < 2) throw std::invalid_argument("task: V_s must be >= 2");
  if (d_in < 1) throw std::invalid_argument("task: d_in must be >= 1");
  if (d_min < 1 || d_min > d_max) throw std::invalid_argument("task: need 1 <= d_min <= d_max");
  if (U_min < 1 || U_min > U_max) throw std::invalid_argument("task: need 1 <= U_min <= U_max");
  if (noise_sigma < 0.0f) throw std::invalid_argument("task: noise_sigma must be >= 0");
  if (sil_frames < 0) throw std::invalid_argument("task: sil_frames must be >= 0");
  if (n_train < 0 || n_dev < 0 || n_test < 0) throw std::invalid_argument("task: negative split");
}

void to_json(nlohmann::json& j, const TaskConfig& cfg) {
  j = {{"V_s", cfg.V_s},         {"d_in", cfg.d_in},       {"d_min", cfg.d_min},
       {"d_max", cfg.d_max},     {"noise_sigma", cfg.noise_sigma},
       {"U_min", cfg.U_min},     {"U_max", cfg.U_max},     {"sil_frames", cfg.sil_frames},
       {"n_train", cfg.n_train},
       {"n_dev", cfg.n_dev},     {"n_test", cfg.n_test},   {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, TaskConfig& cfg) {
  j.at("V_s").get_to(cfg.V_s);
  j.at("d_in").get_to(cfg.d_in);
  j.at("d_min").get_to(cfg.d_min);
  j.at("d_max").get_to(cfg.d_max);
  j.at("noise_sigma").get_to(cfg.noise_sigma);
  j.at("U_min").get_to(cfg.U_min);
  j.at("U_max").get_to(cfg.U_max);
  if (j.contains("sil_frames")) j.at("sil_frames").get_to(cfg.sil_frames);
  j.at("n_train").get_to(cfg.n_train);
  j.at("n_dev").get_to(cfg.n_dev);
  j.at("n_test").get_to(cfg.n_test);
  if (j.contains("seed")) j.at("seed").get_to(cfg.seed);
}

std::vector<std::vector<float>> task_prototypes(const TaskConfig& cfg) {
  RngStream rng = RngStream(cfg.seed, "prototypes");
  std::vector<std::vector<float>> protos(cfg.V_s);
  for (int v = 0; v < cfg.V_s; ++v) {
    protos[v].resize(cfg.d_in);
    for (int d = 0; d < cfg.d_in; ++d) protos[v][d] = static_cast<float>(rng.normal());
  }
  return protos;
}

namespace {

SyntheticSample draw_sample(const TaskConfig& cfg, int frame_stack_factor,
                            const std::vector<std::vector<float>>& protos, RngStream rng,
                            const std::set<std::vector<int>>* avoid) {
  std::vector<int> tokens;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const int u = cfg.U_min + static_cast<int>(rng.below(cfg.U_max - cfg.U_min + 1));
    tokens.clear();
    for (int i = 0; i < u; ++i) tokens.push_back(static_cast<int>(rng.below(cfg.V_s)));
    if (avoid == nullptr || avoid->find(tokens) == avoid->end()) break;
  }

  std::vector<int> durations;
  int t_raw = cfg.sil_frames;
  for (size_t i = 0; i < tokens.size(); ++i) {
    const int dur = cfg.d_min + static_cast<int>(rng.below(cfg.d_max - cfg.d_min + 1));
    durations.push_back(dur);
    t_raw += dur;
  }

  SyntheticSample s;
  s.tokens = tokens;
  s.frames = Tensor::zeros({t_raw, cfg.d_in});
  int frame = 0;
  int raw_boundary = 0;
  for (size_t i = 0; i < tokens.size(); ++i) {
    const auto& proto = protos[tokens[i]];
    for (int d = 0; d < durations[i]; ++d, ++frame) {
      float* row = s.frames.data() + static_cast<size_t>(frame) * cfg.d_in;
      for (int k = 0; k < cfg.d_in; ++k)
        row[k] = proto[k] + static_cast<float>(rng.normal() * cfg.noise_sigma);
    }
    raw_boundary += durations[i];
    // last stacked frame covering the last raw frame of this token's span
    s.true_boundaries.push_back((raw_boundary + frame_stack_factor - 1) / frame_stack_factor);
  }
  for (int d = 0; d < cfg.sil_frames; ++d, ++frame) {
    float* row = s.frames.data() + static_cast<size_t>(frame) * cfg.d_in;
    for (int k = 0; k < cfg.d_in; ++k)
      row[k] = static_cast<float>(rng.normal() * cfg.noise_sigma);
  }
  return s;
}

Dataset make_split(const TaskConfig& cfg, int frame_stack_factor,
                   const std::vector<std::vector<float>>& protos, RngStream base,
                   const std::string& prefix, int count, int id_offset,
                   std::set<std::vector<int>>* seen) {
  Dataset out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    SyntheticSample s =
        draw_sample(cfg, frame_stack_factor, protos, base.child(uint64_t(id_offset + i)), seen);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s-%05d", prefix.c_str(), i);
    s.id = buf;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

DatasetSplits generate(const TaskConfig& cfg, int frame_stack_factor) {
  cfg.validate();
  if (frame_stack_factor < 1) throw std::invalid_argument("generate: bad frame_stack_factor");

  const double combos = std::pow(static_cast<double>(cfg.V_s), cfg.U_min);
  const int total = cfg.n_train + cfg.n_dev + cfg.n_test;
  if (combos < total) {
    std::fprintf(stderr,
                 "[synthdata] warning: V_s^U_min = %.0f < %d samples; duplicate sequences "
                 "across splits are likely\n",
                 combos, total);
  }

  const auto protos = task_prototypes(cfg);
  RngStream base = RngStream(cfg.seed, "samples");

  DatasetSplits splits;
  std::set<std::vector<int>> seen;
  splits.train = make_split(cfg, frame_stack_factor, protos, base, "train", cfg.n_train, 0, nullptr);
  for (const auto& s : splits.train) seen.insert(s.tokens);
  splits.dev = make_split(cfg, frame_stack_factor, protos, base, "dev", cfg.n_dev,
                          cfg.n_train, &seen);
  for (const auto& s : splits.dev) seen.insert(s.tokens);
  splits.test = make_split(cfg, frame_stack_factor, protos, base, "test", cfg.n_test,
                           cfg.n_train + cfg.n_dev, &seen);
  return splits;
}

void save_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& s : ds) {
    nlohmann::json frames = nlohmann::json::array();
    const int t = s.frames.rows(), d = s.frames.cols();
    for (int i = 0; i < t; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int j = 0; j < d; ++j) row.push_back(s.frames.at(i, j));
      frames.push_back(std::move(row));
    }
    nlohmann::json line = {{"id", s.id},
                           {"tokens", s.tokens},
                           {"true_boundaries", s.true_boundaries},
                           {"frames", std::move(frames)}};
    f << line.dump() << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

Dataset load_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open dataset: " + path);
  Dataset out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      SyntheticSample s;
      s.id = j.at("id").get<std::string>();
      s.tokens = j.at("tokens").get<std::vector<int>>();
      s.true_boundaries = j.at("true_boundaries").get<std::vector<int>>();
      const auto& frames = j.at("frames");
      const int t = static_cast<int>(frames.size());
      const int d = t > 0 ? static_cast<int>(frames.at(0).size()) : 0;
      s.frames = Tensor::zeros({t, d});
      for (int i = 0; i < t; ++i) {
        const auto& row = frames.at(i);
        if (static_cast<int>(row.size()) != d)
          throw std::runtime_error("ragged frame rows");
        for (int k = 0; k < d; ++k)
          s.frames.vec()[static_cast<size_t>(i) * d + k] = row.at(k).get<float>();
      }
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": malformed line " + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return out;
}

std::string file_content_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for hashing: " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!f) break;
  }
  char out[32];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace mma
