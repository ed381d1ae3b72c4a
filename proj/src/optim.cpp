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

#include "mma/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "mma/kernels.hpp"

namespace mma {

double noam_lr(const OptimConfig& cfg, int step) {
  if (step < 1) throw std::invalid_argument("noam_lr: step must be >= 1");
  const double s = step;
  const double w = cfg.warmup_steps;
  return cfg.lr_constant * std::pow(static_cast<double>(cfg.d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

AdamNoam::AdamNoam(std::vector<Tensor> params, OptimConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (auto& p : params_) {
    m_.emplace_back(p.vec().size(), 0.0f);
    v_.emplace_back(p.vec().size(), 0.0f);
  }
}

bool AdamNoam::step(int step) {
  for (auto& p : params_) {
    const auto& g = p.ensure_grad();
    if (!kern::all_finite(g.data(), g.size())) return false;
  }
  const double lr = noam_lr(cfg_, step);
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, step);
  const double bc2 = 1.0 - std::pow(b2, step);
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    auto& data = params_[pi].vec();
    const auto& grad = params_[pi].grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      data[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
  return true;
}

void AdamNoam::zero_grads() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace mma
