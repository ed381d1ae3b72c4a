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

#include "mma/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace mma::kern {

namespace {
thread_local std::vector<double> g_acc;
}

void matmul(const float* a, const float* b, float* c, int m, int k, int n) {
  g_acc.assign(n, 0.0);
  double* acc = g_acc.data();
  for (int i = 0; i < m; ++i) {
    std::fill(acc, acc + n, 0.0);
    const float* arow = a + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const float* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    float* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
  }
}

void matmul_nt(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<size_t>(i) * k;
    float* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      crow[j] = static_cast<float>(dot(arow, b + static_cast<size_t>(j) * k, k));
    }
  }
}

void matmul_tn_acc(const float* a, const float* b, float* c, int r, int m, int n) {
  g_acc.assign(static_cast<size_t>(m) * n, 0.0);
  double* acc = g_acc.data();
  for (int i = 0; i < r; ++i) {
    const float* arow = a + static_cast<size_t>(i) * m;
    const float* brow = b + static_cast<size_t>(i) * n;
    for (int j1 = 0; j1 < m; ++j1) {
      const double av = arow[j1];
      if (av == 0.0) continue;
      double* accrow = acc + static_cast<size_t>(j1) * n;
      for (int j2 = 0; j2 < n; ++j2) accrow[j2] += av * brow[j2];
    }
  }
  for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) c[i] += static_cast<float>(acc[i]);
}

void matvec_acc(const float* x, const float* w, float* y, int k, int n) {
  g_acc.assign(n, 0.0);
  double* acc = g_acc.data();
  for (int kk = 0; kk < k; ++kk) {
    const double xv = x[kk];
    const float* wrow = w + static_cast<size_t>(kk) * n;
    for (int j = 0; j < n; ++j) acc[j] += xv * wrow[j];
  }
  for (int j = 0; j < n; ++j) y[j] += static_cast<float>(acc[j]);
}

double dot(const float* a, const float* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

void softmax_row(const float* x, const float* allow, float* out, int n) {
  double mx = -1e300;
  bool any = false;
  for (int i = 0; i < n; ++i) {
    if (allow == nullptr || allow[i] != 0.0f) {
      any = true;
      if (x[i] > mx) mx = x[i];
    }
  }
  if (!any) {
    std::fill(out, out + n, 0.0f);
    return;
  }
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (allow == nullptr || allow[i] != 0.0f) {
      const double e = std::exp(static_cast<double>(x[i]) - mx);
      out[i] = static_cast<float>(e);
      sum += e;
    } else {
      out[i] = 0.0f;
    }
  }
  const double inv = 1.0 / sum;
  for (int i = 0; i < n; ++i) out[i] = static_cast<float>(out[i] * inv);
}

void log_softmax_row(const float* x, float* out, int n) {
  double mx = -1e300;
  for (int i = 0; i < n; ++i) mx = std::max(mx, static_cast<double>(x[i]));
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(static_cast<double>(x[i]) - mx);
  const double lse = mx + std::log(sum);
  for (int i = 0; i < n; ++i) out[i] = static_cast<float>(static_cast<double>(x[i]) - lse);
}

void layer_norm_row(const float* x, const float* gain, const float* bias, float* out, int n,
                    float eps) {
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += x[i];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = x[i] - mean;
    var += d * d;
  }
  var /= n;
  const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
  for (int i = 0; i < n; ++i) {
    out[i] = static_cast<float>((x[i] - mean) * inv * gain[i] + bias[i]);
  }
}

float sigmoidf(float x) {
  return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x))));
}

bool all_finite(const float* x, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) return false;
  }
  return true;
}

}  // namespace mma::kern
