// Copyright 2026 The layerserve Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LAYERSERVE_RNG_HPP_
#define LAYERSERVE_RNG_HPP_

#include <cstdint>
#include <random>

#include "layerserve/tensor.hpp"

namespace layerserve {

/// mt19937_64 with a portable float conversion, so seeded draws are identical
/// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 24 bits of mantissa.
  float uniform() {
    return static_cast<float>(engine_() >> 40) * (1.0f / 16777216.0f);
  }
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next() { return engine_(); }
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  Tensor uniform_tensor(Shape shape, float lo, float hi);

 private:
  std::mt19937_64 engine_;
};

/// Stateless 64-bit mixer (splitmix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace layerserve

#endif  // LAYERSERVE_RNG_HPP_
