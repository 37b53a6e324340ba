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

#ifndef ORACLE_ORACLE_HPP_
#define ORACLE_ORACLE_HPP_

// Test-only reference computations in double precision. Nothing here calls
// the layerserve kernels; library types are read as plain containers.

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "layerserve/adapter.hpp"
#include "layerserve/model.hpp"

namespace oracle {

/// Row-major double matrix.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

Mat from_tensor(const layerserve::Tensor& t);

/// Triple loop, one dot product per entry.
Mat matmul(const Mat& a, const Mat& b);
Mat softmax_rows(const Mat& x);
Mat rmsnorm(const Mat& x, const std::vector<double>& gain, double eps);
double silu(double x);

/// Mean negative log-softmax.
double cross_entropy(const Mat& logits, const std::vector<std::int32_t>& targets);

/// Adapter parameters by name, widened to double so they can be perturbed.
using Params = std::map<std::string, std::vector<double>>;
Params adapter_params(const layerserve::AdapterState& adapter);

/// Monolithic decoder forward. `params` overrides the adapter's values.
Mat forward(const layerserve::BaseModel& model,
            const layerserve::AdapterState* adapter, const Params* params,
            const layerserve::TokenBatch& tokens);

double loss(const layerserve::BaseModel& model,
            const layerserve::AdapterState& adapter, const Params& params,
            const layerserve::TokenBatch& tokens,
            const std::vector<std::int32_t>& targets);

/// Central differences of the mean loss w.r.t. every adapter parameter.
Params loss_gradient(const layerserve::BaseModel& model,
                     const layerserve::AdapterState& adapter,
                     const layerserve::TokenBatch& tokens,
                     const std::vector<std::int32_t>& targets, double step);

/// Central differences of a scalar function.
std::vector<double> numeric_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double step);

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
double relative_error(const std::vector<double>& a, const std::vector<double>& b);

/// Client-side byte high-water marks of a LoRA fine-tune job that runs every
/// base layer remotely over a local channel with Adam.
struct JobBytes {
  std::uint64_t weights = 0;
  std::uint64_t adapter = 0;
  std::uint64_t optimizer = 0;
  std::uint64_t saved = 0;
  std::uint64_t transient = 0;
  std::uint64_t total() const { return weights + adapter + optimizer + saved + transient; }
};
JobBytes lora_finetune_bytes(const layerserve::ModelConfig& config, std::size_t batch,
                             std::size_t seq, int rank,
                             const std::set<layerserve::Role>& targets);

}  // namespace oracle

#endif  // ORACLE_ORACLE_HPP_
