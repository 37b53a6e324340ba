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

#ifndef LAYERSERVE_OPS_HPP_
#define LAYERSERVE_OPS_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "layerserve/tensor.hpp"

namespace layerserve {

Tensor matmul(const Tensor& a, const Tensor& b);
/// a [m,k] times b^T where b is [n,k].
Tensor matmul_transposed(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor affine_forward(const Tensor& x, const AffineParams& p);
/// Gradient w.r.t. the input of an affine layer: grad_y W^T. Needs only the
/// weight, never the forward activations.
Tensor affine_backward_input(const Tensor& grad_y, const AffineParams& p);

Tensor softmax_rows(const Tensor& x);

Tensor rmsnorm(const Tensor& x, const Tensor& gain, float eps);
Tensor rmsnorm_backward(const Tensor& x, const Tensor& gain, float eps,
                        const Tensor& grad_y);

Tensor silu(const Tensor& x);
Tensor silu_backward(const Tensor& x, const Tensor& grad_y);

struct LossAndGrad {
  float loss = 0.0f;
  Tensor grad_logits;
};

/// Mean negative log-softmax of the target ids and its gradient.
LossAndGrad cross_entropy(const Tensor& logits,
                          std::span<const std::int32_t> targets);

// Elementwise helpers.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
void add_inplace(Tensor& a, const Tensor& b);
/// Multiplies every row of x by the vector v (length cols).
Tensor scale_columns(const Tensor& x, const Tensor& v);
/// Column sums of x, shape [cols].
Tensor column_sums(const Tensor& x);

Tensor concat_rows(const std::vector<const Tensor*>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);

float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace layerserve

#endif  // LAYERSERVE_OPS_HPP_
