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

#ifndef MMA_RNG_HPP
#define MMA_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mma {

// Counter-based generator. Every stochastic site in the toolkit owns a named
// stream derived from (seed, site name), so reordering one site's draws never
// perturbs another's. Streams are splittable into independent children.
class RngStream {
 public:
  RngStream() : key_(0) {}
  RngStream(uint64_t seed, std::string_view name) : key_(derive(mix(seed), hash_name(name))) {}

  RngStream child(std::string_view name) const { return RngStream(derive(key_, hash_name(name))); }
  RngStream child(uint64_t index) const { return RngStream(derive(key_, 0x9e6c63d0876a9a0full + index)); }

  uint64_t next_u64() {
    ++ctr_;
    return mix(key_ + 0x9e3779b97f4a7c15ull * ctr_);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal, Box-Muller
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  // uniform integer in [0, n)
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  explicit RngStream(uint64_t key) : key_(key) {}

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  static uint64_t derive(uint64_t key, uint64_t h) { return mix(key ^ (h + 0x632be59bd9b4e019ull)); }
  static uint64_t hash_name(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return h;
  }

  uint64_t key_ = 0;
  uint64_t ctr_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace mma

#endif  // MMA_RNG_HPP
