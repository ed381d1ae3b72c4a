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

#include "mma/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mma/kernels.hpp"

namespace mma {

namespace {

using Impl = std::shared_ptr<TensorImpl>;

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void finite_or_throw(const Tensor& t, const char* op) {
  if (!kern::all_finite(t.data(), t.vec().size()))
    throw std::runtime_error(std::string("non-finite values produced by ") + op);
}

void ensure(const Impl& t) {
  if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0f);
}

void axpy(std::vector<float>& dst, const std::vector<float>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

bool track(std::initializer_list<const Tensor*> ins) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

void attach(Tensor& out, std::initializer_list<const Tensor*> ins, std::function<void()> bw) {
  out.impl()->requires_grad = true;
  for (const Tensor* t : ins) out.impl()->parents.push_back(t->impl());
  out.impl()->backward_fn = std::move(bw);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2 && a.cols() == b.rows(), "matmul: dimension mismatch");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<float> c(static_cast<size_t>(m) * n);
  kern::matmul(a.data(), b.data(), c.data(), m, k, n);
  Tensor out = Tensor::from_data({m, n}, std::move(c));
  finite_or_throw(out, "matmul");
  if (track({&a, &b})) {
    Impl ai = a.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&a, &b}, [ai, bi, oi, m, k, n] {
      const float* g = oi->grad.data();
      if (ai->requires_grad) {
        ensure(ai);
        std::vector<float> tmp(static_cast<size_t>(m) * k);
        kern::matmul_nt(g, bi->data.data(), tmp.data(), m, n, k);
        axpy(ai->grad, tmp);
      }
      if (bi->requires_grad) {
        ensure(bi);
        kern::matmul_tn_acc(ai->data.data(), g, bi->grad.data(), m, k, n);
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2 && a.cols() == b.cols(), "matmul_nt: dimension mismatch");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<float> c(static_cast<size_t>(m) * n);
  kern::matmul_nt(a.data(), b.data(), c.data(), m, k, n);
  Tensor out = Tensor::from_data({m, n}, std::move(c));
  finite_or_throw(out, "matmul_nt");
  if (track({&a, &b})) {
    Impl ai = a.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&a, &b}, [ai, bi, oi, m, k, n] {
      const float* g = oi->grad.data();
      if (ai->requires_grad) {
        ensure(ai);
        std::vector<float> tmp(static_cast<size_t>(m) * k);
        kern::matmul(g, bi->data.data(), tmp.data(), m, n, k);
        axpy(ai->grad, tmp);
      }
      if (bi->requires_grad) {
        ensure(bi);
        kern::matmul_tn_acc(g, ai->data.data(), bi->grad.data(), m, n, k);
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "add: shape mismatch");
  std::vector<float> c(a.vec().size());
  for (size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] + b.data()[i];
  Tensor out = Tensor::from_data(a.shape(), std::move(c));
  finite_or_throw(out, "add");
  if (track({&a, &b})) {
    Impl ai = a.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&a, &b}, [ai, bi, oi] {
      if (ai->requires_grad) {
        ensure(ai);
        axpy(ai->grad, oi->grad);
      }
      if (bi->requires_grad) {
        ensure(bi);
        axpy(bi->grad, oi->grad);
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0f)); }

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.numel() == a.cols(), "add_rowvec: shape mismatch");
  const int m = a.rows(), n = a.cols();
  std::vector<float> c(a.vec().size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      c[static_cast<size_t>(i) * n + j] = a.at(i, j) + b.data()[j];
  Tensor out = Tensor::from_data(a.shape(), std::move(c));
  finite_or_throw(out, "add_rowvec");
  if (track({&a, &b})) {
    Impl ai = a.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&a, &b}, [ai, bi, oi, m, n] {
      const float* g = oi->grad.data();
      if (ai->requires_grad) {
        ensure(ai);
        axpy(ai->grad, oi->grad);
      }
      if (bi->requires_grad) {
        ensure(bi);
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int i = 0; i < m; ++i) s += g[static_cast<size_t>(i) * n + j];
          bi->grad[j] += static_cast<float>(s);
        }
      }
    });
  }
  return out;
}

Tensor add_scalar_t(const Tensor& a, const Tensor& s) {
  check(s.numel() == 1, "add_scalar_t: s must be scalar");
  const float sv = s.data()[0];
  std::vector<float> c(a.vec().size());
  for (size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] + sv;
  Tensor out = Tensor::from_data(a.shape(), std::move(c));
  finite_or_throw(out, "add_scalar_t");
  if (track({&a, &s})) {
    Impl ai = a.impl(), si = s.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&a, &s}, [ai, si, oi] {
      if (ai->requires_grad) {
        ensure(ai);
        axpy(ai->grad, oi->grad);
      }
      if (si->requires_grad) {
        ensure(si);
        double acc = 0.0;
        for (float g : oi->grad) acc += g;
        si->grad[0] += static_cast<float>(acc);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, float c) {
  std::vector<float> o(a.vec().size());
  for (size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] * c;
  Tensor out = Tensor::from_data(a.shape(), std::move(o));
  finite_or_throw(out, "scale");
  if (track({&a})) {
    Impl ai = a.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&a}, [ai, oi, c] {
      ensure(ai);
      for (size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += oi->grad[i] * c;
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "mul: shape mismatch");
  std::vector<float> c(a.vec().size());
  for (size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] * b.data()[i];
  Tensor out = Tensor::from_data(a.shape(), std::move(c));
  finite_or_throw(out, "mul");
  if (track({&a, &b})) {
    Impl ai = a.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&a, &b}, [ai, bi, oi] {
      if (ai->requires_grad) {
        ensure(ai);
        for (size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += oi->grad[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        ensure(bi);
        for (size_t i = 0; i < bi->grad.size(); ++i) bi->grad[i] += oi->grad[i] * ai->data[i];
      }
    });
  }
  return out;
}

Tensor vdiv(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "vdiv: shape mismatch");
  std::vector<float> c(a.vec().size());
  for (size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] / b.data()[i];
  Tensor out = Tensor::from_data(a.shape(), std::move(c));
  finite_or_throw(out, "vdiv");
  if (track({&a, &b})) {
    Impl ai = a.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&a, &b}, [ai, bi, oi] {
      if (ai->requires_grad) {
        ensure(ai);
        for (size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += oi->grad[i] / bi->data[i];
      }
      if (bi->requires_grad) {
        ensure(bi);
        // -g*a/b^2 computed as -g*(a/b)/b; squaring b first underflows when
        // b is a tiny window sum
        for (size_t i = 0; i < bi->grad.size(); ++i)
          bi->grad[i] -= oi->grad[i] * oi->data[i] / bi->data[i];
      }
    });
  }
  return out;
}

Tensor vexp(const Tensor& a) {
  std::vector<float> c(a.vec().size());
  for (size_t i = 0; i < c.size(); ++i)
    c[i] = static_cast<float>(std::exp(static_cast<double>(a.data()[i])));
  Tensor out = Tensor::from_data(a.shape(), std::move(c));
  finite_or_throw(out, "vexp");
  if (track({&a})) {
    Impl ai = a.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&a}, [ai, oi] {
      ensure(ai);
      for (size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += oi->grad[i] * oi->data[i];
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  std::vector<float> c(a.vec().size());
  for (size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] > 0.0f ? a.data()[i] : 0.0f;
  Tensor out = Tensor::from_data(a.shape(), std::move(c));
  if (track({&a})) {
    Impl ai = a.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&a}, [ai, oi] {
      ensure(ai);
      for (size_t i = 0; i < ai->grad.size(); ++i)
        if (ai->data[i] > 0.0f) ai->grad[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  std::vector<float> c(a.vec().size());
  for (size_t i = 0; i < c.size(); ++i) c[i] = kern::sigmoidf(a.data()[i]);
  Tensor out = Tensor::from_data(a.shape(), std::move(c));
  finite_or_throw(out, "sigmoid");
  if (track({&a})) {
    Impl ai = a.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&a}, [ai, oi] {
      ensure(ai);
      for (size_t i = 0; i < ai->grad.size(); ++i) {
        const float y = oi->data[i];
        ai->grad[i] += oi->grad[i] * y * (1.0f - y);
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (float v : a.vec()) s += v;
  Tensor out = Tensor::scalar(static_cast<float>(s));
  finite_or_throw(out, "sum_all");
  if (track({&a})) {
    Impl ai = a.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&a}, [ai, oi] {
      ensure(ai);
      const float g = oi->grad[0];
      for (auto& v : ai->grad) v += g;
    });
  }
  return out;
}

Tensor sub_row_shift(const Tensor& a, const std::vector<float>& shift) {
  check(a.ndim() == 2 && static_cast<int>(shift.size()) == a.rows(),
        "sub_row_shift: shift length mismatch");
  const int m = a.rows(), n = a.cols();
  std::vector<float> c(a.vec().size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      c[static_cast<size_t>(i) * n + j] = a.at(i, j) - shift[i];
  Tensor out = Tensor::from_data(a.shape(), std::move(c));
  finite_or_throw(out, "sub_row_shift");
  if (track({&a})) {
    Impl ai = a.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&a}, [ai, oi] {
      ensure(ai);
      axpy(ai->grad, oi->grad);
    });
  }
  return out;
}

Tensor masked_softmax(const Tensor& x, const Tensor* allow) {
  check(x.ndim() <= 2, "masked_softmax: expects 1-D or 2-D input");
  const int m = x.ndim() == 2 ? x.rows() : 1;
  const int n = x.ndim() == 2 ? x.cols() : static_cast<int>(x.numel());
  const float* adata = nullptr;
  int astride = 0;
  if (allow != nullptr) {
    const int64_t an = allow->numel();
    check(an == static_cast<int64_t>(n) || an == x.numel(),
          "masked_softmax: mask not broadcastable");
    adata = allow->data();
    astride = an == static_cast<int64_t>(n) ? 0 : n;
  }
  std::vector<float> c(x.vec().size());
  for (int i = 0; i < m; ++i) {
    kern::softmax_row(x.data() + static_cast<size_t>(i) * n,
                      adata ? adata + static_cast<size_t>(i) * astride : nullptr,
                      c.data() + static_cast<size_t>(i) * n, n);
  }
  Tensor out = Tensor::from_data(x.shape(), std::move(c));
  finite_or_throw(out, "masked_softmax");
  if (track({&x})) {
    Impl xi = x.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&x}, [xi, oi, m, n] {
      ensure(xi);
      for (int i = 0; i < m; ++i) {
        const float* y = oi->data.data() + static_cast<size_t>(i) * n;
        const float* g = oi->grad.data() + static_cast<size_t>(i) * n;
        float* gx = xi->grad.data() + static_cast<size_t>(i) * n;
        double dotgy = 0.0;
        for (int j = 0; j < n; ++j) dotgy += static_cast<double>(g[j]) * y[j];
        for (int j = 0; j < n; ++j)
          gx[j] += static_cast<float>(y[j] * (g[j] - dotgy));
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  const int n = x.ndim() == 2 ? x.cols() : static_cast<int>(x.numel());
  const int m = x.ndim() == 2 ? x.rows() : 1;
  check(gain.numel() == n && bias.numel() == n, "layer_norm: gain/bias size mismatch");
  std::vector<float> c(x.vec().size());
  auto mean = std::make_shared<std::vector<float>>(m);
  auto istd = std::make_shared<std::vector<float>>(m);
  for (int i = 0; i < m; ++i) {
    const float* row = x.data() + static_cast<size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = row[j] - mu;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
    (*mean)[i] = static_cast<float>(mu);
    (*istd)[i] = static_cast<float>(is);
    float* orow = c.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j)
      orow[j] = static_cast<float>((row[j] - mu) * is * gain.data()[j] + bias.data()[j]);
  }
  Tensor out = Tensor::from_data(x.shape(), std::move(c));
  finite_or_throw(out, "layer_norm");
  if (track({&x, &gain, &bias})) {
    Impl xi = x.impl(), gi = gain.impl(), bi = bias.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&x, &gain, &bias}, [xi, gi, bi, oi, mean, istd, m, n] {
      for (int i = 0; i < m; ++i) {
        const float* row = xi->data.data() + static_cast<size_t>(i) * n;
        const float* g = oi->grad.data() + static_cast<size_t>(i) * n;
        const double mu = (*mean)[i], is = (*istd)[i];
        if (gi->requires_grad) {
          ensure(gi);
          for (int j = 0; j < n; ++j)
            gi->grad[j] += static_cast<float>(g[j] * (row[j] - mu) * is);
        }
        if (bi->requires_grad) {
          ensure(bi);
          for (int j = 0; j < n; ++j) bi->grad[j] += g[j];
        }
        if (xi->requires_grad) {
          ensure(xi);
          float* gx = xi->grad.data() + static_cast<size_t>(i) * n;
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int j = 0; j < n; ++j) {
            const double xhat = (row[j] - mu) * is;
            const double dxhat = static_cast<double>(g[j]) * gi->data[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
          }
          const double inv_n = 1.0 / n;
          for (int j = 0; j < n; ++j) {
            const double xhat = (row[j] - mu) * is;
            const double dxhat = static_cast<double>(g[j]) * gi->data[j];
            gx[j] += static_cast<float>(
                is * (dxhat - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat));
          }
        }
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_cols: empty input");
  const int m = parts[0].rows();
  int total = 0;
  for (const auto& p : parts) {
    check(p.ndim() == 2 && p.rows() == m, "concat_cols: row mismatch");
    total += p.cols();
  }
  std::vector<float> c(static_cast<size_t>(m) * total);
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        c[static_cast<size_t>(i) * total + off + j] = p.at(i, j);
    off += w;
  }
  Tensor out = Tensor::from_data({m, total}, std::move(c));
  bool any = false;
  if (grad_enabled())
    for (const auto& p : parts) any |= p.requires_grad();
  if (any) {
    std::vector<Impl> impls;
    impls.reserve(parts.size());
    for (const auto& p : parts) impls.push_back(p.impl());
    TensorImpl* oi = out.impl().get();
    out.impl()->requires_grad = true;
    for (const auto& p : parts) out.impl()->parents.push_back(p.impl());
    out.impl()->backward_fn = [impls, oi, m, total] {
      int off = 0;
      for (const auto& pi : impls) {
        const int w = pi->shape[1];
        if (pi->requires_grad) {
          ensure(pi);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
              pi->grad[static_cast<size_t>(i) * w + j] +=
                  oi->grad[static_cast<size_t>(i) * total + off + j];
        }
        off += w;
      }
    };
  }
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  check(table.ndim() == 2, "gather_rows: table must be 2-D");
  const int n = table.cols(), v = table.rows();
  const int m = static_cast<int>(ids.size());
  std::vector<float> c(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    check(ids[i] >= 0 && ids[i] < v, "gather_rows: id out of range");
    const float* src = table.data() + static_cast<size_t>(ids[i]) * n;
    std::copy(src, src + n, c.data() + static_cast<size_t>(i) * n);
  }
  Tensor out = Tensor::from_data({m, n}, std::move(c));
  if (track({&table})) {
    Impl ti = table.impl();
    TensorImpl* oi = out.impl().get();
    auto idcopy = std::make_shared<std::vector<int>>(ids);
    attach(out, {&table}, [ti, oi, idcopy, n] {
      ensure(ti);
      for (size_t i = 0; i < idcopy->size(); ++i) {
        const float* g = oi->grad.data() + i * n;
        float* dst = ti->grad.data() + static_cast<size_t>((*idcopy)[i]) * n;
        for (int j = 0; j < n; ++j) dst[j] += g[j];
      }
    });
  }
  return out;
}

Tensor expected_alignment(const Tensor& p) {
  check(p.ndim() == 2, "expected_alignment: p must be [U, T]");
  const int u = p.rows(), t = p.cols();
  std::vector<float> alpha(static_cast<size_t>(u) * t);
  auto qs = std::make_shared<std::vector<float>>(static_cast<size_t>(u) * t);
  // f64 scan; alpha[-1] is one-hot at frame 0
  std::vector<double> prev(t, 0.0);
  prev[0] = 1.0;
  std::vector<double> q(t);
  for (int i = 0; i < u; ++i) {
    const float* prow = p.data() + static_cast<size_t>(i) * t;
    q[0] = prev[0];
    for (int j = 1; j < t; ++j)
      q[j] = (1.0 - static_cast<double>(prow[j - 1])) * q[j - 1] + prev[j];
    for (int j = 0; j < t; ++j) {
      const double a = static_cast<double>(prow[j]) * q[j];
      alpha[static_cast<size_t>(i) * t + j] = static_cast<float>(a);
      (*qs)[static_cast<size_t>(i) * t + j] = static_cast<float>(q[j]);
      prev[j] = a;
    }
  }
  Tensor out = Tensor::from_data({u, t}, std::move(alpha));
  finite_or_throw(out, "expected_alignment");
  if (track({&p})) {
    Impl pi = p.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&p}, [pi, oi, qs, u, t] {
      ensure(pi);
      // reverse scan; within a row gq flows right to left, across rows the
      // alpha grad flows up through the prev term
      std::vector<double> ga(static_cast<size_t>(u) * t);
      for (size_t i = 0; i < ga.size(); ++i) ga[i] = oi->grad[i];
      std::vector<double> gq(t);
      for (int i = u - 1; i >= 0; --i) {
        const float* prow = pi->data.data() + static_cast<size_t>(i) * t;
        const float* qrow = qs->data() + static_cast<size_t>(i) * t;
        float* gp = pi->grad.data() + static_cast<size_t>(i) * t;
        for (int j = 0; j < t; ++j) {
          const double gaij = ga[static_cast<size_t>(i) * t + j];
          gq[j] = gaij * prow[j];
          gp[j] += static_cast<float>(gaij * qrow[j]);
        }
        for (int j = t - 1; j >= 1; --j) {
          if (i > 0) ga[static_cast<size_t>(i - 1) * t + j] += gq[j];
          gq[j - 1] += gq[j] * (1.0 - static_cast<double>(prow[j - 1]));
          gp[j - 1] -= static_cast<float>(gq[j] * qrow[j - 1]);
        }
        if (i > 0) ga[static_cast<size_t>(i - 1) * t] += gq[0];
      }
    });
  }
  return out;
}

Tensor softmax_xent_smoothed(const Tensor& logits, const std::vector<int>& targets,
                             float smoothing) {
  check(logits.ndim() == 2, "xent: logits must be [rows, vocab]");
  const int m = logits.rows(), v = logits.cols();
  check(static_cast<int>(targets.size()) == m, "xent: target count mismatch");
  check(v >= 2, "xent: vocab must be >= 2");
  const double on = 1.0 - smoothing;
  const double off = smoothing / (v - 1);
  auto logp = std::make_shared<std::vector<float>>(static_cast<size_t>(m) * v);
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    check(targets[i] >= 0 && targets[i] < v, "xent: target id out of range");
    kern::log_softmax_row(logits.data() + static_cast<size_t>(i) * v,
                          logp->data() + static_cast<size_t>(i) * v, v);
    const float* lp = logp->data() + static_cast<size_t>(i) * v;
    double row = 0.0;
    for (int j = 0; j < v; ++j) row += (j == targets[i] ? on : off) * lp[j];
    total -= row;
  }
  Tensor out = Tensor::scalar(static_cast<float>(total / m));
  finite_or_throw(out, "softmax_xent_smoothed");
  if (track({&logits})) {
    Impl li = logits.impl();
    TensorImpl* oi = out.impl().get();
    auto tgt = std::make_shared<std::vector<int>>(targets);
    attach(out, {&logits}, [li, oi, logp, tgt, m, v, on, off] {
      ensure(li);
      const float g = oi->grad[0];
      const float inv_m = 1.0f / static_cast<float>(m);
      for (int i = 0; i < m; ++i) {
        const float* lp = logp->data() + static_cast<size_t>(i) * v;
        float* gl = li->grad.data() + static_cast<size_t>(i) * v;
        for (int j = 0; j < v; ++j) {
          const double pj = std::exp(static_cast<double>(lp[j]));
          const double tj = (j == (*tgt)[i]) ? on : off;
          gl[j] += static_cast<float>(g * inv_m * (pj - tj));
        }
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, float p, RngStream& rng, bool training) {
  if (!training || p <= 0.0f) return x;
  check(p < 1.0f, "dropout: p must be < 1");
  const float keep_scale = 1.0f / (1.0f - p);
  auto mask = std::make_shared<std::vector<float>>(x.vec().size());
  std::vector<float> c(x.vec().size());
  for (size_t i = 0; i < c.size(); ++i) {
    const float mv = rng.bernoulli(p) ? 0.0f : keep_scale;
    (*mask)[i] = mv;
    c[i] = x.data()[i] * mv;
  }
  Tensor out = Tensor::from_data(x.shape(), std::move(c));
  if (track({&x})) {
    Impl xi = x.impl();
    TensorImpl* oi = out.impl().get();
    attach(out, {&x}, [xi, oi, mask] {
      ensure(xi);
      for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += oi->grad[i] * (*mask)[i];
    });
  }
  return out;
}

}  // namespace mma
