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

#ifndef MMA_MONOATTN_HPP
#define MMA_MONOATTN_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mma/ops.hpp"
#include "mma/rng.hpp"
#include "mma/tensor.hpp"

// Monotonic attention math: energies, training-time expected alignments,
// test-time hard boundaries, chunkwise attention over boundary windows, and
// HeadDrop. All functions are pure over their inputs.

namespace mma {

// One monotonic attention head. The offset r starts at -2 so selection
// probabilities begin well below the 0.5 activation threshold.
struct MonotonicHeadParams {
  Tensor w_s;  // query projection [d_model, d_k]
  Tensor w_h;  // key projection   [d_model, d_k]
  Tensor r;    // learnable scalar offset
};

MonotonicHeadParams make_monotonic_head(int d_model, int d_k, RngStream& rng);

// One chunkwise attention head; chunk energy is the monotonic energy form
// without the offset. A decoder layer owns H_ca of these, shared across all
// of its MA heads.
struct ChunkHeadParams {
  Tensor w_q;  // [d_model, d_c]
  Tensor w_k;  // [d_model, d_c]
  Tensor w_v;  // [d_model, d_c]
};

ChunkHeadParams make_chunk_head(int d_model, int d_c, RngStream& rng);

enum class Mode { kTrain, kTest };

// (s w_q)(h w_k)^T / sqrt(d_k), plus r when given. h: [T, d_model],
// s: [U, d_model]; result [U, T].
Tensor attention_energy(const Tensor& h, const Tensor& s, const Tensor& w_q, const Tensor& w_k,
                        const Tensor* r);

inline Tensor monotonic_energy(const Tensor& h, const Tensor& s, const MonotonicHeadParams& p) {
  return attention_energy(h, s, p.w_s, p.w_h, &p.r);
}

// sigmoid(e), with pre-sigmoid Gaussian noise (std `noise_std`) in training
// mode so p saturates toward {0,1} and test-time thresholding matches.
Tensor selection_probs(const Tensor& energies, Mode mode, float noise_std, RngStream& noise_rng);

// expected_alignment(p) lives in ops.hpp; re-exported by this header.

// Smallest index j >= t_prev with p[j] >= 0.5, else nullopt. 0-based.
std::optional<int> hard_boundary(std::span<const float> p_row, int t_prev);

// Training-time MoChA weights: for each output row, spreads alpha over a
// width-w window of chunk energies u. Windows are clipped to [0, T) and the
// per-anchor softmax renormalizes over the clipped range, which preserves
// row mass exactly: sum_j beta[i][j] == sum_j alpha[i][j].
Tensor chunk_beta(const Tensor& alpha, const Tensor& u, int w);

// Test-time equivalent at a hard boundary t: softmax over u[lo..t] with
// lo = max(0, t - w + 1). Returns the w (or fewer) weights for frames lo..t.
std::vector<float> chunk_window_weights(const float* u_row, int t, int w);

struct HeadDropConfig {
  float p_hd = 0.0f;  // drop probability in [0, 1)
};

struct HeadDropDraw {
  std::vector<uint8_t> keep;  // per head
  int n_kept = 0;
  float scale = 1.0f;  // H_ma / H_ma^+
};

// Independently drops each head with probability p_hd. A draw that would
// drop every head retains one chosen uniformly, so the H/H+ rescale is
// always defined and the draw stays unbiased per head.
HeadDropDraw draw_headdrop(int n_heads, const HeadDropConfig& cfg, RngStream& rng);

}  // namespace mma

#endif  // MMA_MONOATTN_HPP
