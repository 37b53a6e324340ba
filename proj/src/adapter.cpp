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

#include "layerserve/adapter.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

#include "layerserve/ops.hpp"
#include "layerserve/rng.hpp"

namespace layerserve {

std::string method_name(AdapterMethod method) {
  switch (method) {
    case AdapterMethod::kNone: return "none";
    case AdapterMethod::kLoRA: return "lora";
    case AdapterMethod::kIA3: return "ia3";
  }
  return "?";
}

AdapterMethod parse_method(const std::string& name) {
  std::string lower;
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(c)));
  if (lower == "none") return AdapterMethod::kNone;
  if (lower == "lora") return AdapterMethod::kLoRA;
  if (lower == "ia3") return AdapterMethod::kIA3;
  throw std::invalid_argument("unknown adapter method '" + name + "'");
}

AdapterState::AdapterState(const ModelConfig& model, AdapterConfig config)
    : config_(std::move(config)) {
  if (config_.method == AdapterMethod::kLoRA && config_.rank <= 0) {
    throw std::invalid_argument("LoRA rank must be positive");
  }
  std::uint64_t stream = 0;
  for (const auto& addr : model.layer_addresses()) {
    if (!config_.targets.contains(addr.role)) continue;
    const std::size_t din = model.d_in(addr.role);
    const std::size_t dout = model.d_out(addr.role);
    if (config_.method == AdapterMethod::kLoRA) {
      const auto r = static_cast<std::size_t>(config_.rank);
      const float bound = 1.0f / std::sqrt(static_cast<float>(din));
      Rng rng(mix64(config_.seed ^ mix64(++stream)));
      lora_.emplace(addr, LoraPair{rng.uniform_tensor({din, r}, -bound, bound),
                                   Tensor({r, dout})});
    } else if (config_.method == AdapterMethod::kIA3) {
      ia3_.emplace(addr, Tensor::filled({dout}, 1.0f));
    }
  }
}

bool AdapterState::targets(const LayerAddress& address) const {
  return lora_.contains(address) || ia3_.contains(address);
}

const LoraPair* AdapterState::lora(const LayerAddress& address) const {
  auto it = lora_.find(address);
  return it == lora_.end() ? nullptr : &it->second;
}

LoraPair* AdapterState::lora(const LayerAddress& address) {
  auto it = lora_.find(address);
  return it == lora_.end() ? nullptr : &it->second;
}

const Tensor* AdapterState::ia3(const LayerAddress& address) const {
  auto it = ia3_.find(address);
  return it == ia3_.end() ? nullptr : &it->second;
}

Tensor* AdapterState::ia3(const LayerAddress& address) {
  auto it = ia3_.find(address);
  return it == ia3_.end() ? nullptr : &it->second;
}

void AdapterState::for_each_parameter(
    const std::function<void(const std::string&, Tensor&)>& fn) {
  for (auto& [addr, p] : lora_) {
    fn("lora." + to_string(addr) + ".A", p.a);
    fn("lora." + to_string(addr) + ".B", p.b);
  }
  for (auto& [addr, l] : ia3_) fn("ia3." + to_string(addr), l);
}

void AdapterState::for_each_parameter(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  for (const auto& [addr, p] : lora_) {
    fn("lora." + to_string(addr) + ".A", p.a);
    fn("lora." + to_string(addr) + ".B", p.b);
  }
  for (const auto& [addr, l] : ia3_) fn("ia3." + to_string(addr), l);
}

std::size_t AdapterState::bytes() const {
  std::size_t total = 0;
  for_each_parameter(
      [&](const std::string&, const Tensor& t) { total += t.bytes(); });
  return total;
}

std::uint64_t AdapterState::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for_each_parameter(
      [&](const std::string&, const Tensor& t) { h = layerserve::checksum(t, h); });
  return h;
}

Tensor AdapterState::apply(const LayerAddress& address, const Tensor& x,
                           const Tensor& base_y) const {
  if (const LoraPair* p = lora(address)) {
    return add(base_y, lora_forward(x, p->a, p->b, config_.alpha, config_.rank));
  }
  if (const Tensor* l = ia3(address)) return scale_columns(base_y, *l);
  return base_y;
}

Tensor lora_forward(const Tensor& x, const Tensor& a, const Tensor& b,
                    float alpha, int rank) {
  return scale(matmul(matmul(x, a), b), alpha / static_cast<float>(rank));
}

LoraGrads lora_backward(const Tensor& x_saved, const Tensor& grad_y,
                        const Tensor& a, const Tensor& b, float alpha,
                        int rank) {
  const float s = alpha / static_cast<float>(rank);
  Tensor h = matmul(x_saved, a);
  LoraGrads g;
  g.grad_b = scale(matmul(transpose(h), grad_y), s);
  Tensor grad_h = scale(matmul_transposed(grad_y, b), s);
  g.grad_a = matmul(transpose(x_saved), grad_h);
  g.grad_x = matmul_transposed(grad_h, a);
  return g;
}

AdapterGrads AdapterGrads::zeros_like(const AdapterState& state) {
  AdapterGrads g;
  for (const auto& [addr, p] : state.lora_params()) {
    g.lora.emplace(addr, LoraPair{Tensor(p.a.shape()), Tensor(p.b.shape())});
  }
  for (const auto& [addr, l] : state.ia3_params()) {
    g.ia3.emplace(addr, Tensor(l.shape()));
  }
  return g;
}

const Tensor& AdapterGrads::by_name(const std::string& name) const {
  for (const auto& [addr, p] : lora) {
    const std::string base = "lora." + to_string(addr);
    if (name == base + ".A") return p.a;
    if (name == base + ".B") return p.b;
  }
  for (const auto& [addr, l] : ia3) {
    if (name == "ia3." + to_string(addr)) return l;
  }
  throw std::out_of_range("no gradient named " + name);
}

void Optimizer::step(AdapterState& state, const AdapterGrads& grads) {
  ++steps_;
  const float lr = config_.lr;
  if (config_.kind == OptimizerKind::kSgd) {
    state.for_each_parameter([&](const std::string& name, Tensor& p) {
      const Tensor& g = grads.by_name(name);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    });
    return;
  }
  const float b1 = config_.beta1;
  const float b2 = config_.beta2;
  const float c1 = 1.0f - std::pow(b1, static_cast<float>(steps_));
  const float c2 = 1.0f - std::pow(b2, static_cast<float>(steps_));
  state.for_each_parameter([&](const std::string& name, Tensor& p) {
    const Tensor& g = grads.by_name(name);
    Tensor& m = m_.try_emplace(name, p.shape()).first->second;
    Tensor& v = v_.try_emplace(name, p.shape()).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      const float mhat = m[i] / c1;
      const float vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  });
}

std::size_t Optimizer::state_bytes() const {
  std::size_t total = 0;
  for (const auto& [n, t] : m_) total += t.bytes();
  for (const auto& [n, t] : v_) total += t.bytes();
  return total;
}

}  // namespace layerserve
