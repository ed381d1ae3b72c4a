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

#ifndef MMA_OPTIM_HPP
#define MMA_OPTIM_HPP

#include <vector>

#include "mma/tensor.hpp"

namespace mma {

struct OptimConfig {
  float beta1 = 0.9f;
  float beta2 = 0.98f;
  float eps = 1e-9f;
  float lr_constant = 1.0f;
  int warmup_steps = 400;
  int d_model = 64;
};

// lr(step) = constant * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)
double noam_lr(const OptimConfig& cfg, int step);

class AdamNoam {
 public:
  AdamNoam(std::vector<Tensor> params, OptimConfig cfg);

  // One update at 1-based `step`. Returns false and leaves everything
  // untouched if any gradient is non-finite.
  bool step(int step);
  void zero_grads();
  const std::vector<Tensor>& params() const { return params_; }
  const OptimConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_, v_;
  OptimConfig cfg_;
};

}  // namespace mma

#endif  // MMA_OPTIM_HPP
