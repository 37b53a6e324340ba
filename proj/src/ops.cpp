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

#include "layerserve/ops.hpp"

#include <algorithm>
#include <cmath>

#include "layerserve/kernels.hpp"

namespace layerserve {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) +
                         " by " + shape_string(b.shape()));
  }
  Tensor out({a.rows(), b.cols()});
  kernels::parallel::matmul(a.data(), b.data(), out.data(), a.rows(), a.cols(),
                            b.cols());
  return out;
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw DimensionError("matmul_transposed: cannot multiply " +
                         shape_string(a.shape()) + " by transpose of " +
                         shape_string(b.shape()));
  }
  Tensor out({a.rows(), b.rows()});
  kernels::parallel::matmul_bt(a.data(), b.data(), out.data(), a.rows(),
                               a.cols(), b.rows());
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  }
  return out;
}

Tensor affine_forward(const Tensor& x, const AffineParams& p) {
  Tensor y = matmul(x, p.weight);
  if (p.bias) {
    const auto b = p.bias->data();
    for (std::size_t i = 0; i < y.rows(); ++i) {
      auto r = y.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
    }
  }
  return y;
}

Tensor affine_backward_input(const Tensor& grad_y, const AffineParams& p) {
  if (grad_y.rank() != 2 || grad_y.cols() != p.d_out()) {
    throw DimensionError("affine_backward_input: gradient " +
                         shape_string(grad_y.shape()) +
                         " does not match weight " +
                         shape_string(p.weight.shape()));
  }
  return matmul_transposed(grad_y, p.weight);
}

Tensor softmax_rows(const Tensor& x) {
  Tensor out(x.shape());
  kernels::parallel::softmax_rows(x.data(), out.data(), x.rows(), x.cols());
  return out;
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain, float eps) {
  if (gain.size() != x.cols()) {
    throw DimensionError("rmsnorm: gain " + shape_string(gain.shape()) +
                         " vs input " + shape_string(x.shape()));
  }
  Tensor out(x.shape());
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    float ss = 0.0f;
    for (float v : in) ss += v * v;
    const float inv = 1.0f / std::sqrt(ss / static_cast<float>(d) + eps);
    auto o = out.row(i);
    for (std::size_t j = 0; j < d; ++j) o[j] = in[j] * inv * gain[j];
  }
  return out;
}

Tensor rmsnorm_backward(const Tensor& x, const Tensor& gain, float eps,
                        const Tensor& grad_y) {
  require_same_shape(x, grad_y, "rmsnorm_backward");
  Tensor out(x.shape());
  const std::size_t d = x.cols();
  const float fd = static_cast<float>(d);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    auto gy = grad_y.row(i);
    float ss = 0.0f;
    for (float v : in) ss += v * v;
    const float inv = 1.0f / std::sqrt(ss / fd + eps);
    float dot = 0.0f;
    for (std::size_t j = 0; j < d; ++j) dot += gy[j] * gain[j] * in[j];
    const float coeff = inv * inv * inv * dot / fd;
    auto o = out.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      o[j] = inv * gain[j] * gy[j] - coeff * in[j];
    }
  }
  return out;
}

Tensor silu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * sigmoid(x[i]);
  return out;
}

Tensor silu_backward(const Tensor& x, const Tensor& grad_y) {
  return zip(x, grad_y, "silu_backward", [](float v, float g) {
    const float s = sigmoid(v);
    return g * s * (1.0f + v * (1.0f - s));
  });
}

LossAndGrad cross_entropy(const Tensor& logits,
                          std::span<const std::int32_t> targets) {
  const std::size_t t = logits.rows();
  const std::size_t vocab = logits.cols();
  if (targets.size() != t) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(t) + " rows");
  }
  LossAndGrad out{0.0f, softmax_rows(logits)};
  double total = 0.0;
  const float inv_t = t ? 1.0f / static_cast<float>(t) : 0.0f;
  for (std::size_t i = 0; i < t; ++i) {
    const std::int32_t target = targets[i];
    if (target < 0 || static_cast<std::size_t>(target) >= vocab) {
      throw IndexError("cross_entropy: target " + std::to_string(target) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
    auto row = logits.row(i);
    const float mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (float v : row) sum += std::exp(static_cast<double>(v - mx));
    total += std::log(sum) + mx - row[target];
    auto g = out.grad_logits.row(i);
    g[target] -= 1.0f;
    for (float& v : g) v *= inv_t;
  }
  out.loss = t ? static_cast<float>(total / static_cast<double>(t)) : 0.0f;
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](float x, float y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](float x, float y) { return x - y; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return zip(a, b, "hadamard", [](float x, float y) { return x * y; });
}

Tensor scale(const Tensor& a, float s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add_inplace");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

Tensor scale_columns(const Tensor& x, const Tensor& v) {
  if (v.size() != x.cols()) {
    throw DimensionError("scale_columns: vector " + shape_string(v.shape()) +
                         " vs " + shape_string(x.shape()));
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    auto o = out.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) o[j] = in[j] * v[j];
  }
  return out;
}

Tensor column_sums(const Tensor& x) {
  Tensor out({x.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) out[j] += in[j];
  }
  return out;
}

Tensor concat_rows(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) return Tensor({0, 0});
  const std::size_t c = parts.front()->cols();
  std::size_t r = 0;
  for (const Tensor* p : parts) {
    if (p->cols() != c) {
      throw DimensionError("concat_rows: width " + std::to_string(p->cols()) +
                           " vs " + std::to_string(c));
    }
    r += p->rows();
  }
  std::vector<float> data;
  data.reserve(r * c);
  for (const Tensor* p : parts) {
    data.insert(data.end(), p->data().begin(), p->data().end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") of " +
                         shape_string(x.shape()));
  }
  const std::size_t c = x.cols();
  std::vector<float> data(x.data().begin() + begin * c,
                          x.data().begin() + end * c);
  return Tensor({end - begin, c}, std::move(data));
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace layerserve
