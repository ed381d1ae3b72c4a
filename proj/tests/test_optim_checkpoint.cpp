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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mma/checkpoint.hpp"
#include "mma/optim.hpp"

using namespace mma;

TEST_CASE("noam schedule crossover and monotone branches") {
  OptimConfig cfg;
  cfg.d_model = 64;
  cfg.warmup_steps = 400;
  cfg.lr_constant = 1.0f;
  const double at_warmup = noam_lr(cfg, 400);
  CHECK(at_warmup == doctest::Approx(std::pow(64.0, -0.5) * std::pow(400.0, -0.5)).epsilon(1e-12));
  CHECK(at_warmup == doctest::Approx(0.00625).epsilon(1e-9));

  for (int s = 1; s < 400; ++s) CHECK(noam_lr(cfg, s) <= noam_lr(cfg, s + 1) + 1e-15);
  for (int s = 400; s < 2000; ++s) CHECK(noam_lr(cfg, s) >= noam_lr(cfg, s + 1) - 1e-15);
  CHECK_THROWS_AS((void)noam_lr(cfg, 0), std::invalid_argument);
}

TEST_CASE("one Adam step on a scalar quadratic moves toward the optimum") {
  // f(x) = (x - 3)^2 at x=0: grad = -6, so the step must increase x
  Tensor x = Tensor::scalar(0.0f, true);
  OptimConfig cfg;
  cfg.d_model = 1;
  cfg.warmup_steps = 1;
  cfg.lr_constant = 0.1f;
  AdamNoam opt({x}, cfg);
  x.ensure_grad();
  x.impl()->grad[0] = 2.0f * (x.item() - 3.0f);
  const float before = x.item();
  CHECK(opt.step(1));
  CHECK(x.item() > before);
  CHECK(x.item() < 3.0f);
}

TEST_CASE("non-finite grads abort the update and leave params untouched") {
  Tensor x = Tensor::scalar(1.0f, true);
  AdamNoam opt({x}, OptimConfig{});
  x.ensure_grad();
  x.impl()->grad[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(opt.step(1));
  CHECK(x.item() == 1.0f);
}

TEST_CASE("zero learning rate leaves params unchanged") {
  Tensor x = Tensor::scalar(2.0f, true);
  OptimConfig cfg;
  cfg.lr_constant = 0.0f;
  AdamNoam opt({x}, cfg);
  x.ensure_grad();
  x.impl()->grad[0] = 5.0f;
  CHECK(opt.step(1));
  CHECK(x.item() == 2.0f);
}

TEST_CASE("checkpoint round-trips values, names, shapes, and config") {
  const std::string path = std::filesystem::temp_directory_path() / "mma_ckpt_test.mma";
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_data({2}, {-0.5f, 0.25f});
  nlohmann::json cfg = {{"d_model", 8}, {"note", "x"}};
  write_checkpoint(path, cfg, {{"layer.w", a}, {"layer.b", b}});

  Checkpoint ck = read_checkpoint(path);
  CHECK(ck.config.at("d_model") == 8);
  REQUIRE(ck.names.size() == 2);
  CHECK(ck.names[0] == "layer.w");
  CHECK(ck.shapes[0] == std::vector<int>{2, 3});
  CHECK(ck.blobs[1][1] == 0.25f);

  Tensor a2 = Tensor::zeros({2, 3});
  Tensor b2 = Tensor::zeros({2});
  std::vector<NamedParam> params = {{"layer.w", a2}, {"layer.b", b2}};
  load_into(ck, params);
  for (int i = 0; i < 6; ++i) CHECK(a2.vec()[i] == a.vec()[i]);

  // magic bytes and little-endian length prefix
  std::ifstream f(path, std::ios::binary);
  char head[8];
  f.read(head, 8);
  CHECK(head[0] == 'M');
  CHECK(head[3] == '1');
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const std::string path = std::filesystem::temp_directory_path() / "mma_ckpt_bad.mma";
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOPE";
  }
  CHECK_THROWS_AS((void)read_checkpoint(path), std::runtime_error);

  Tensor a = Tensor::from_data({2}, {1, 2});
  write_checkpoint(path, {}, {{"w", a}});
  Checkpoint ck = read_checkpoint(path);
  Tensor wrong_shape = Tensor::zeros({3});
  std::vector<NamedParam> p1 = {{"w", wrong_shape}};
  CHECK_THROWS_AS(load_into(ck, p1), std::runtime_error);
  Tensor ok = Tensor::zeros({2});
  std::vector<NamedParam> p2 = {{"v", ok}};
  CHECK_THROWS_AS(load_into(ck, p2), std::runtime_error);
  std::filesystem::remove(path);
}
