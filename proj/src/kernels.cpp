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

#include "layerserve/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace layerserve::kernels {
namespace {

// One output row. The inner loop runs over n so the compiler can vectorize
// it, while each out[i,j] still receives its k terms in order t = 0..k-1.
inline void matmul_row(const float* a_row, const float* b, float* out_row,
                       std::size_t k, std::size_t n) {
  std::fill(out_row, out_row + n, 0.0f);
  for (std::size_t t = 0; t < k; ++t) {
    const float a = a_row[t];
    const float* b_row = b + t * n;
    for (std::size_t j = 0; j < n; ++j) out_row[j] += a * b_row[j];
  }
}

inline void matmul_bt_row(const float* a_row, const float* b, float* out_row,
                          std::size_t k, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    const float* b_row = b + j * k;
    float acc = 0.0f;
    for (std::size_t t = 0; t < k; ++t) acc += a_row[t] * b_row[t];
    out_row[j] = acc;
  }
}

inline void softmax_row(const float* x, float* out, std::size_t n) {
  if (n == 0) return;
  const float mx = *std::max_element(x, x + n);
  float sum = 0.0f;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(x[j] - mx);
    sum += out[j];
  }
  const float inv = 1.0f / sum;
  for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
}

}  // namespace

namespace serial {

void matmul(std::span<const float> a, std::span<const float> b,
            std::span<float> out, std::size_t m, std::size_t k,
            std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    matmul_row(a.data() + i * k, b.data(), out.data() + i * n, k, n);
  }
}

void matmul_bt(std::span<const float> a, std::span<const float> b,
               std::span<float> out, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    matmul_bt_row(a.data() + i * k, b.data(), out.data() + i * n, k, n);
  }
}

void softmax_rows(std::span<const float> x, std::span<float> out,
                  std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    softmax_row(x.data() + i * n, out.data() + i * n, n);
  }
}

}  // namespace serial

namespace parallel {

void matmul(std::span<const float> a, std::span<const float> b,
            std::span<float> out, std::size_t m, std::size_t k,
            std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
  const bool wide = m * k * n >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t i = 0; i < rows; ++i) {
    matmul_row(a.data() + i * k, b.data(), out.data() + i * n, k, n);
  }
}

void matmul_bt(std::span<const float> a, std::span<const float> b,
               std::span<float> out, std::size_t m, std::size_t k,
               std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
  const bool wide = m * k * n >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t i = 0; i < rows; ++i) {
    matmul_bt_row(a.data() + i * k, b.data(), out.data() + i * n, k, n);
  }
}

void softmax_rows(std::span<const float> x, std::span<float> out,
                  std::size_t m, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
  const bool wide = m * n >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t i = 0; i < rows; ++i) {
    softmax_row(x.data() + i * n, out.data() + i * n, n);
  }
}

}  // namespace parallel
}  // namespace layerserve::kernels
