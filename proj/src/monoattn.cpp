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

#include "mma/monoattn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mma/kernels.hpp"

namespace mma {

MonotonicHeadParams make_monotonic_head(int d_model, int d_k, RngStream& rng) {
  MonotonicHeadParams p;
  p.w_s = Tensor::xavier_uniform(d_model, d_k, rng);
  p.w_h = Tensor::xavier_uniform(d_model, d_k, rng);
  p.r = Tensor::scalar(-2.0f, true);
  return p;
}

ChunkHeadParams make_chunk_head(int d_model, int d_c, RngStream& rng) {
  ChunkHeadParams p;
  p.w_q = Tensor::xavier_uniform(d_model, d_c, rng);
  p.w_k = Tensor::xavier_uniform(d_model, d_c, rng);
  p.w_v = Tensor::xavier_uniform(d_model, d_c, rng);
  return p;
}

Tensor attention_energy(const Tensor& h, const Tensor& s, const Tensor& w_q, const Tensor& w_k,
                        const Tensor* r) {
  if (h.cols() != w_k.rows() || s.cols() != w_q.rows())
    throw std::invalid_argument("attention_energy: projection shape mismatch");
  const int d_k = w_q.cols();
  Tensor q = matmul(s, w_q);  // [U, d_k]
  Tensor k = matmul(h, w_k);  // [T, d_k]
  Tensor e = scale(matmul_nt(q, k), static_cast<float>(1.0 / std::sqrt(double(d_k))));
  if (r != nullptr) e = add_scalar_t(e, *r);
  return e;
}

Tensor selection_probs(const Tensor& energies, Mode mode, float noise_std, RngStream& noise_rng) {
  if (noise_std < 0.0f) throw std::invalid_argument("selection_probs: noise_std must be >= 0");
  if (mode == Mode::kTrain && noise_std > 0.0f) {
    Tensor noise = Tensor::zeros(energies.shape());
    for (auto& v : noise.vec()) v = static_cast<float>(noise_rng.normal() * noise_std);
    return sigmoid(add(energies, noise));
  }
  return sigmoid(energies);
}

std::optional<int> hard_boundary(std::span<const float> p_row, int t_prev) {
  if (t_prev < 0 || t_prev >= static_cast<int>(p_row.size()))
    throw std::invalid_argument("hard_boundary: t_prev out of range");
  for (int j = t_prev; j < static_cast<int>(p_row.size()); ++j) {
    if (p_row[j] >= 0.5f) return j;
  }
  return std::nullopt;
}

namespace {

// band[k][l] = 1 iff l in [k-w+1, k]; denom = e_u band^T, acc = ratio band.
Tensor window_band(int t, int w) {
  Tensor band = Tensor::zeros({t, t});
  for (int k = 0; k < t; ++k) {
    const int lo = std::max(0, k - w + 1);
    for (int l = lo; l <= k; ++l) band.vec()[static_cast<size_t>(k) * t + l] = 1.0f;
  }
  return band;
}

}  // namespace

Tensor chunk_beta(const Tensor& alpha, const Tensor& u, int w) {
  if (w < 1) throw std::invalid_argument("chunk_beta: w must be >= 1");
  if (alpha.shape() != u.shape()) throw std::invalid_argument("chunk_beta: shape mismatch");
  const int rows = alpha.rows(), t = alpha.cols();
  // beta is invariant to a per-row shift of u; shift by the detached row max
  // so the exponentials stay in range
  std::vector<float> shift(rows);
  for (int i = 0; i < rows; ++i) {
    float mx = u.at(i, 0);
    for (int j = 1; j < t; ++j) mx = std::max(mx, u.at(i, j));
    shift[i] = mx;
  }
  Tensor e_u = vexp(sub_row_shift(u, shift));
  Tensor band = window_band(t, w);
  Tensor denom = matmul_nt(e_u, band);        // denom[i][k] = sum of e_u over [k-w+1, k]
  Tensor ratio = vdiv(alpha, denom);
  Tensor acc = matmul(ratio, band);           // acc[i][j] = sum of ratio over [j, j+w-1]
  return mul(e_u, acc);
}

std::vector<float> chunk_window_weights(const float* u_row, int t, int w) {
  const int lo = std::max(0, t - w + 1);
  const int n = t - lo + 1;
  std::vector<float> out(n);
  kern::softmax_row(u_row + lo, nullptr, out.data(), n);
  return out;
}

HeadDropDraw draw_headdrop(int n_heads, const HeadDropConfig& cfg, RngStream& rng) {
  if (cfg.p_hd < 0.0f || cfg.p_hd >= 1.0f)
    throw std::invalid_argument("headdrop: p_hd must be in [0, 1)");
  HeadDropDraw d;
  d.keep.assign(n_heads, 1);
  for (int h = 0; h < n_heads; ++h) {
    if (rng.bernoulli(cfg.p_hd)) d.keep[h] = 0;
  }
  d.n_kept = static_cast<int>(std::count(d.keep.begin(), d.keep.end(), uint8_t{1}));
  if (d.n_kept == 0) {
    d.keep[rng.below(n_heads)] = 1;
    d.n_kept = 1;
  }
  d.scale = static_cast<float>(n_heads) / static_cast<float>(d.n_kept);
  return d;
}

}  // namespace mma
