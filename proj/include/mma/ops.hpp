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

#ifndef MMA_OPS_HPP
#define MMA_OPS_HPP

#include <optional>
#include <vector>

#include "mma/rng.hpp"
#include "mma/tensor.hpp"

// Differentiable ops. Each records its backward rule when grad tracking is on
// and any input requires grad. Every op validates shapes and rejects
// non-finite outputs.

namespace mma {

Tensor matmul(const Tensor& a, const Tensor& b);              // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);           // [m,k]x[n,k]^T
Tensor add(const Tensor& a, const Tensor& b);                 // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& a, const Tensor& b);          // a[m,n] + b[n]
Tensor add_scalar_t(const Tensor& a, const Tensor& s);        // a + s, s is [1]
Tensor scale(const Tensor& a, float c);
Tensor mul(const Tensor& a, const Tensor& b);                 // elementwise
Tensor vdiv(const Tensor& a, const Tensor& b);                // elementwise a/b
Tensor vexp(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sum_all(const Tensor& a);                              // scalar

// Subtracts a detached per-row shift: out[i][j] = a[i][j] - shift[i].
Tensor sub_row_shift(const Tensor& a, const std::vector<float>& shift);

// Softmax along the last axis. `allow` marks attendable positions (nonzero =
// allowed); it may be null (no mask), match x's shape, or be a single row
// broadcast over all rows. Fully masked rows come back all-zero.
Tensor masked_softmax(const Tensor& x, const Tensor* allow);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-6f);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// Monotonic-attention expected alignment: the division-free scan
//   q[i][j] = (1 - p[i][j-1]) * q[i][j-1] + alpha[i-1][j],  q[i][0] = alpha[i-1][0]
//   alpha[i][j] = p[i][j] * q[i][j]
// with alpha[-1] one-hot at frame 0. Differentiable w.r.t. p.
Tensor expected_alignment(const Tensor& p);

// Mean label-smoothed cross entropy over rows: (1-eps) on the gold token,
// eps/(V-1) spread over the rest.
Tensor softmax_xent_smoothed(const Tensor& logits, const std::vector<int>& targets,
                             float smoothing);

// Inverted-scale dropout on elements. Identity when !training or p == 0.
Tensor dropout(const Tensor& x, float p, RngStream& rng, bool training);

}  // namespace mma

#endif  // MMA_OPS_HPP
