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

#ifndef LAYERSERVE_KERNELS_HPP_
#define LAYERSERVE_KERNELS_HPP_

#include <cstddef>
#include <span>

// Raw matrix kernels. Each output row depends only on the matching input row
// and every entry is accumulated left to right over the inner dimension, so
// the serial and OpenMP variants produce bitwise identical results. The
// serial variants are the reference the parallel ones are tested against.
namespace layerserve::kernels {

namespace serial {

// out[m,n] = a[m,k] * b[k,n]
void matmul(std::span<const float> a, std::span<const float> b,
            std::span<float> out, std::size_t m, std::size_t k, std::size_t n);

// out[m,n] = a[m,k] * b[n,k]^T
void matmul_bt(std::span<const float> a, std::span<const float> b,
               std::span<float> out, std::size_t m, std::size_t k,
               std::size_t n);

// out[m,n] = rowwise softmax of x[m,n]
void softmax_rows(std::span<const float> x, std::span<float> out,
                  std::size_t m, std::size_t n);

}  // namespace serial

namespace parallel {

void matmul(std::span<const float> a, std::span<const float> b,
            std::span<float> out, std::size_t m, std::size_t k, std::size_t n);

void matmul_bt(std::span<const float> a, std::span<const float> b,
               std::span<float> out, std::size_t m, std::size_t k,
               std::size_t n);

void softmax_rows(std::span<const float> x, std::span<float> out,
                  std::size_t m, std::size_t n);

}  // namespace parallel

/// Work (m*k*n) below which the parallel variants stay on one thread.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

}  // namespace layerserve::kernels

#endif  // LAYERSERVE_KERNELS_HPP_
