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

#include "mma/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace mma {

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = {{"steps", cfg.steps},       {"batch_size", cfg.batch_size},
       {"warmup", cfg.warmup},     {"lr_constant", cfg.lr_constant},
       {"beta1", cfg.beta1},       {"beta2", cfg.beta2},
       {"adam_eps", cfg.adam_eps}, {"log_every", cfg.log_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  if (j.contains("steps")) j.at("steps").get_to(cfg.steps);
  if (j.contains("batch_size")) j.at("batch_size").get_to(cfg.batch_size);
  if (j.contains("warmup")) j.at("warmup").get_to(cfg.warmup);
  if (j.contains("lr_constant")) j.at("lr_constant").get_to(cfg.lr_constant);
  if (j.contains("beta1")) j.at("beta1").get_to(cfg.beta1);
  if (j.contains("beta2")) j.at("beta2").get_to(cfg.beta2);
  if (j.contains("adam_eps")) j.at("adam_eps").get_to(cfg.adam_eps);
  if (j.contains("log_every")) j.at("log_every").get_to(cfg.log_every);
}

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& ctx) {
  if (!j.is_object()) throw ConfigError("config section '" + ctx + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (allowed.find(it.key()) == allowed.end())
      throw ConfigError("unknown config key '" + ctx + "." + it.key() + "'");
  }
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

void RunConfig::finalize() {
  if (!task_seed_explicit_) task.seed = seed;
  if (!d_in_explicit_) model.d_in = task.d_in;
  if (!vocab_explicit_) model.vocab_size = task.V_s + kTokenOffset;

  task.validate();
  if (model.d_in != task.d_in)
    throw ConfigError("model.d_in must match task.d_in");
  if (model.vocab_size != task.V_s + kTokenOffset)
    throw ConfigError("model.vocab_size must equal task.V_s + 3 (pad/sos/eos)");
  try {
    model.validate();
    beam.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (train.steps < 0 || train.batch_size < 1 || train.warmup < 1)
    throw ConfigError("bad training configuration");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (align_limit < 0) throw ConfigError("align_limit must be >= 0");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["model"] = model;
  nlohmann::json tj = task;
  j["task"] = tj;
  j["train"] = train;
  j["beam"] = beam;
  j["threads"] = threads;
  j["data_dir"] = data_dir;
  j["out_dir"] = out_dir;
  j["align_limit"] = align_limit;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  check_keys(j, {"seed", "model", "task", "train", "beam", "threads", "data_dir", "out_dir",
                 "align_limit"},
             "run");
  RunConfig cfg;
  try {
    get_if(j, "seed", cfg.seed);
    if (j.contains("model")) {
      check_keys(j.at("model"),
                 {"d_model", "d_ff", "H", "H_ma", "H_ca", "w", "E", "D", "D_lm", "p_hd",
                  "frame_stack_factor", "vocab_size", "label_smoothing", "chunk_mask", "dropout",
                  "noise_std", "d_in", "max_positions"},
                 "model");
      nlohmann::json m = nlohmann::json(cfg.model);
      m.update(j.at("model"));
      m.get_to(cfg.model);
      cfg.vocab_explicit_ = j.at("model").contains("vocab_size");
      cfg.d_in_explicit_ = j.at("model").contains("d_in");
    }
    if (j.contains("task")) {
      check_keys(j.at("task"),
                 {"V_s", "d_in", "d_min", "d_max", "noise_sigma", "U_min", "U_max", "sil_frames",
                  "n_train", "n_dev", "n_test", "seed"},
                 "task");
      nlohmann::json t = nlohmann::json(cfg.task);
      t.update(j.at("task"));
      t.get_to(cfg.task);
      cfg.task_seed_explicit_ = j.at("task").contains("seed");
    }
    if (j.contains("train")) {
      check_keys(j.at("train"),
                 {"steps", "batch_size", "warmup", "lr_constant", "beta1", "beta2", "adam_eps",
                  "log_every"},
                 "train");
      j.at("train").get_to(cfg.train);
    }
    if (j.contains("beam")) {
      check_keys(j.at("beam"),
                 {"B", "eps_wait", "alpha_lm", "beta_len", "L_max", "head_sync", "eos_threshold"},
                 "beam");
      nlohmann::json b = nlohmann::json(cfg.beam);
      b.update(j.at("beam"));
      b.get_to(cfg.beam);
    }
    get_if(j, "threads", cfg.threads);
    get_if(j, "data_dir", cfg.data_dir);
    get_if(j, "out_dir", cfg.out_dir);
    get_if(j, "align_limit", cfg.align_limit);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  return cfg;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (...) {
    parsed = value;  // bare string
  }

  nlohmann::json* node = &doc;
  size_t pos = 0;
  while (true) {
    const size_t dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (part.empty()) throw ConfigError("bad override key: " + key);
    if (dot == std::string::npos) {
      (*node)[part] = parsed;
      break;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

RunConfig RunConfig::load(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw ConfigError("cannot open config file: " + config_path);
    try {
      f >> doc;
    } catch (const std::exception& e) {
      throw ConfigError("config parse error in " + config_path + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig cfg = from_json(doc);
  cfg.finalize();
  return cfg;
}

OutputGuard::~OutputGuard() {
  if (!committed_) {
    for (const auto& p : paths_) std::remove(p.c_str());
  }
}

std::string OutputGuard::track(const std::string& path) {
  paths_.push_back(path);
  return path;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace mma
