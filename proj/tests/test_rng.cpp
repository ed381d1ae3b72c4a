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

#include <cmath>
#include <set>

#include "mma/rng.hpp"

using mma::RngStream;

TEST_CASE("same seed and name reproduce the sequence") {
  RngStream a(42, "init");
  RngStream b(42, "init");
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different names give independent streams") {
  RngStream a(42, "init");
  RngStream b(42, "noise");
  int same = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() == b.next_u64()) ++same;
  CHECK(same == 0);
}

TEST_CASE("children are independent of the parent draw position") {
  RngStream parent(7, "samples");
  RngStream c1 = parent.child(3);
  parent.next_u64();  // advancing the parent must not shift the child
  RngStream c2 = RngStream(7, "samples").child(3);
  for (int i = 0; i < 16; ++i) CHECK(c1.next_u64() == c2.next_u64());
}

TEST_CASE("uniform stays in range and is not degenerate") {
  RngStream r(1, "u");
  std::set<uint64_t> seen;
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = r.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    sum += v;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.02);
}

TEST_CASE("normal moments") {
  RngStream r(1, "n");
  const int n = 50000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("below covers the range uniformly enough") {
  RngStream r(9, "b");
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) ++counts[r.below(7)];
  for (int c : counts) CHECK(std::abs(c - 1000) < 200);
}
