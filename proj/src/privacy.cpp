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

#include "layerserve/privacy.hpp"

#include <stdexcept>

#include "layerserve/ops.hpp"
#include "layerserve/rng.hpp"

namespace layerserve {
namespace {

std::uint64_t layer_key(const LayerAddress& layer) {
  return (static_cast<std::uint64_t>(layer.block) << 8) |
         static_cast<std::uint64_t>(layer.role);
}

}  // namespace

std::size_t rotate_index(std::uint64_t seed, const LayerAddress& layer,
                         std::uint64_t iteration, std::size_t k) {
  if (k <= 1) return 0;
  const std::uint64_t h = mix64(mix64(seed ^ mix64(layer_key(layer))) ^ iteration);
  return static_cast<std::size_t>(h % k);
}

NoiseSet NoiseSet::precompute(Channel& channel, const ModelConfig& config,
                              const std::vector<LayerAddress>& layers,
                              const PrivacyConfig& privacy) {
  if (privacy.k < 1) throw std::invalid_argument("privacy: k must be >= 1");
  if (privacy.t_max == 0) throw std::invalid_argument("privacy: t_max must be set");
  NoiseSet set(privacy.seed, privacy.t_max);
  for (const auto& layer : layers) {
    const std::size_t din = config.d_in(layer.role);
    const std::size_t dout = config.d_out(layer.role);
    LayerNoise ln;
    for (int i = 0; i < privacy.k; ++i) {
      Rng rng(mix64(privacy.seed ^ mix64(layer_key(layer) * 131u + static_cast<std::uint64_t>(i))));
      Tensor n = rng.uniform_tensor({privacy.t_max, din}, -privacy.scale, privacy.scale);
      Tensor effect = channel.call(layer, Pass::kNoiseEffect, n, dout);
      Tensor check = channel.call(layer, Pass::kNoiseEffect, n, dout);
      if (max_abs_diff(effect, check) > 1e-5f) {
        throw ProtocolError("noise effect for layer " + to_string(layer) +
                            " is not reproducible");
      }
      ln.noise.push_back(std::move(n));
      ln.effect.push_back(std::move(effect));
    }
    set.layers_.emplace(layer, std::move(ln));
  }
  return set;
}

void NoiseSet::add_layer(const LayerAddress& layer, LayerNoise noise) {
  if (noise.noise.empty() || noise.noise.size() != noise.effect.size()) {
    throw std::invalid_argument("noise set layer needs matching noise/effect lists");
  }
  t_max_ = noise.noise.front().rows();
  layers_[layer] = std::move(noise);
}

std::size_t NoiseSet::k(const LayerAddress& layer) const {
  return this->layer(layer).noise.size();
}

const NoiseSet::LayerNoise& NoiseSet::layer(const LayerAddress& layer) const {
  auto it = layers_.find(layer);
  if (it == layers_.end()) {
    throw std::out_of_range("no noise for layer " + to_string(layer));
  }
  return it->second;
}

std::size_t NoiseSet::rotate(const LayerAddress& layer,
                             std::uint64_t iteration) const {
  return rotate_index(seed_, layer, iteration, k(layer));
}

Tensor NoiseSet::blind(const LayerAddress& layer, const Tensor& x,
                       std::uint64_t iteration) const {
  if (x.rows() > t_max_) {
    throw std::invalid_argument("privacy: " + std::to_string(x.rows()) +
                                " tokens exceed noise rows t_max=" +
                                std::to_string(t_max_));
  }
  const Tensor& n = this->layer(layer).noise[rotate(layer, iteration)];
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + n[i];
  return out;
}

Tensor NoiseSet::unblind(const LayerAddress& layer, const Tensor& y_noisy,
                         std::uint64_t iteration) const {
  const Tensor& e = this->layer(layer).effect[rotate(layer, iteration)];
  Tensor out(y_noisy.shape());
  for (std::size_t i = 0; i < y_noisy.size(); ++i) out[i] = y_noisy[i] - e[i];
  return out;
}

Tensor NoiseSet::blind_forward(Channel& channel, const LayerAddress& layer,
                               const Tensor& x, std::uint64_t iteration,
                               std::size_t out_width) const {
  Tensor sent = blind(layer, x, iteration);
  return unblind(layer, channel.call(layer, Pass::kForward, sent, out_width),
                 iteration);
}

std::size_t NoiseSet::bytes() const {
  std::size_t total = 0;
  for (const auto& [addr, ln] : layers_) {
    for (const auto& t : ln.noise) total += t.bytes();
    for (const auto& t : ln.effect) total += t.bytes();
  }
  return total;
}

}  // namespace layerserve
