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

#ifndef MMA_KERNELS_HPP
#define MMA_KERNELS_HPP

#include <cstddef>
#include <vector>

// Raw float kernels shared by the training graph and the incremental decoder.
// Storage is f32; every reduction (dot products, softmax sums, norm stats)
// accumulates in f64.

namespace mma::kern {

// c[m x n] = a[m x k] * b[k x n]
void matmul(const float* a, const float* b, float* c, int m, int k, int n);

// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt(const float* a, const float* b, float* c, int m, int k, int n);

// c[m x n] = a[r x m]^T * b[r x n], accumulated into c (c must be sized m*n)
void matmul_tn_acc(const float* a, const float* b, float* c, int r, int m, int n);

// y[n] += x[k] * w[k x n]
void matvec_acc(const float* x, const float* w, float* y, int k, int n);

double dot(const float* a, const float* b, int n);

// softmax over x[0..n), restricted to positions with allow != 0 (allow may be
// null = all allowed). Masked positions get exactly 0. If nothing is allowed
// the whole row is 0.
void softmax_row(const float* x, const float* allow, float* out, int n);

// log-softmax over a full row (no mask), f64 accumulation
void log_softmax_row(const float* x, float* out, int n);

// out = gain * (x - mean) / sqrt(var + eps) + bias, row of width n
void layer_norm_row(const float* x, const float* gain, const float* bias, float* out, int n,
                    float eps);

float sigmoidf(float x);

// true if every element is finite
bool all_finite(const float* x, size_t n);

// Minimal row-major float matrix for the decoder's cache-side math.
struct FloatMat {
  int rows = 0;
  int cols = 0;
  std::vector<float> v;

  FloatMat() = default;
  FloatMat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0f) {}
  float* row(int i) { return v.data() + static_cast<size_t>(i) * cols; }
  const float* row(int i) const { return v.data() + static_cast<size_t>(i) * cols; }
  float& at(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
  float at(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }
};

}  // namespace mma::kern

#endif  // MMA_KERNELS_HPP
