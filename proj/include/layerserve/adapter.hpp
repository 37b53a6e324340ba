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

#ifndef LAYERSERVE_ADAPTER_HPP_
#define LAYERSERVE_ADAPTER_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "layerserve/model.hpp"
#include "layerserve/tensor.hpp"

namespace layerserve {

enum class AdapterMethod { kNone, kLoRA, kIA3 };

std::string method_name(AdapterMethod method);
AdapterMethod parse_method(const std::string& name);

struct AdapterConfig {
  AdapterMethod method = AdapterMethod::kNone;
  int rank = 8;
  float alpha = 16.0f;
  std::set<Role> targets;
  std::uint64_t seed = 1;

  float lora_scale() const { return alpha / static_cast<float>(rank); }
};

struct LoraPair {
  Tensor a;  // [d_in, r]
  Tensor b;  // [r, d_out]
};

/// Trainable per-client parameters. LoRA B starts at zero and IA3 scalings
/// start at one, so a fresh adapter leaves the model unchanged.
class AdapterState {
 public:
  AdapterState() = default;
  AdapterState(const ModelConfig& model, AdapterConfig config);

  const AdapterConfig& config() const { return config_; }
  AdapterMethod method() const { return config_.method; }

  bool targets(const LayerAddress& address) const;
  const LoraPair* lora(const LayerAddress& address) const;
  LoraPair* lora(const LayerAddress& address);
  const Tensor* ia3(const LayerAddress& address) const;
  Tensor* ia3(const LayerAddress& address);

  std::map<LayerAddress, LoraPair>& lora_params() { return lora_; }
  const std::map<LayerAddress, LoraPair>& lora_params() const { return lora_; }
  std::map<LayerAddress, Tensor>& ia3_params() { return ia3_; }
  const std::map<LayerAddress, Tensor>& ia3_params() const { return ia3_; }

  /// Visits trainable tensors in a fixed order with a stable name.
  void for_each_parameter(
      const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each_parameter(
      const std::function<void(const std::string&, const Tensor&)>& fn) const;

  std::size_t bytes() const;
  std::uint64_t checksum() const;

  /// Output of base layer `address` after the adapter is applied.
  /// `x` is the layer input, `base_y` the frozen layer's output.
  Tensor apply(const LayerAddress& address, const Tensor& x,
               const Tensor& base_y) const;

 private:
  AdapterConfig config_;
  std::map<LayerAddress, LoraPair> lora_;
  std::map<LayerAddress, Tensor> ia3_;
};

/// (alpha / r) * (x A) B
Tensor lora_forward(const Tensor& x, const Tensor& a, const Tensor& b,
                    float alpha, int rank);

struct LoraGrads {
  Tensor grad_a;
  Tensor grad_b;
  Tensor grad_x;
};

LoraGrads lora_backward(const Tensor& x_saved, const Tensor& grad_y,
                        const Tensor& a, const Tensor& b, float alpha,
                        int rank);

/// Gradients keyed the same way as the adapter's parameters.
struct AdapterGrads {
  std::map<LayerAddress, LoraPair> lora;
  std::map<LayerAddress, Tensor> ia3;

  static AdapterGrads zeros_like(const AdapterState& state);
  /// Looks up the gradient matching `for_each_parameter`'s name.
  const Tensor& by_name(const std::string& name) const;
};

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  float lr = 1e-2f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// SGD or Adam over adapter tensors only. Adam moments are allocated on the
/// first step.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  void step(AdapterState& state, const AdapterGrads& grads);
  std::size_t state_bytes() const;
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

}  // namespace layerserve

#endif  // LAYERSERVE_ADAPTER_HPP_
