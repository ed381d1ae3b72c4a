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

#ifndef MMA_TENSOR_HPP
#define MMA_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mma {

class RngStream;

// Dense f32 tensor, row-major. Ops record a backward closure on the output
// node when grad tracking is on, so each training step rebuilds the graph
// from scratch; backward() walks it in reverse topological order.
struct TensorImpl {
  std::vector<int> shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until touched by backward() or ensure_grad()
  bool requires_grad = false;

  std::function<void()> backward_fn;  // null for leaves
  std::vector<std::shared_ptr<TensorImpl>> parents;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);
  // Uniform in [-limit, limit] with limit = sqrt(6 / (fan_in + fan_out)).
  static Tensor xavier_uniform(int fan_in, int fan_out, RngStream& rng);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[i]; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int64_t numel() const { return impl_->numel(); }
  int rows() const { return impl_->shape[0]; }
  int cols() const { return impl_->shape.size() > 1 ? impl_->shape[1] : 1; }

  float* data() { return impl_->data.data(); }
  const float* data() const { return impl_->data.data(); }
  std::vector<float>& vec() { return impl_->data; }
  const std::vector<float>& vec() const { return impl_->data; }
  float item() const;
  float at(int i, int j) const { return impl_->data[static_cast<size_t>(i) * cols() + j]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }
  // Allocates a zero grad buffer if absent.
  std::vector<float>& ensure_grad();
  const std::vector<float>& grad() const { return impl_->grad; }
  void zero_grad();

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Populates grads of every requires_grad tensor reachable from `loss`.
// `loss` must be scalar. Gradients accumulate across shared uses.
void backward(const Tensor& loss);

// While a NoGradGuard is alive on this thread, ops do not record backward
// closures (used by decoding and evaluation).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

}  // namespace mma

#endif  // MMA_TENSOR_HPP
