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

#ifndef LAYERSERVE_PRIVACY_HPP_
#define LAYERSERVE_PRIVACY_HPP_

#include <cstdint>
#include <map>
#include <vector>

#include "layerserve/channel.hpp"
#include "layerserve/model.hpp"
#include "layerserve/tensor.hpp"

namespace layerserve {

struct PrivacyConfig {
  bool enabled = false;
  int k = 2;            // noise matrices per layer
  float scale = 1.0f;   // noise is uniform in [-scale, scale]
  std::uint64_t seed = 1;
  std::size_t t_max = 0;  // rows per noise matrix; 0 = derive from the job
};

/// Deterministic noise index for (layer, iteration).
std::size_t rotate_index(std::uint64_t seed, const LayerAddress& layer,
                         std::uint64_t iteration, std::size_t k);

/// Client-held activation blinding state: k noise matrices per layer and
/// their bias-free effects as computed by the executor.
class NoiseSet {
 public:
  struct LayerNoise {
    std::vector<Tensor> noise;   // [t_max, d_in]
    std::vector<Tensor> effect;  // [t_max, d_out]
  };

  NoiseSet() = default;
  NoiseSet(std::uint64_t seed, std::size_t t_max) : seed_(seed), t_max_(t_max) {}

  /// Draws noise for every layer, obtains each effect through a NoiseEffect
  /// request, and cross-checks it against a second identical request.
  static NoiseSet precompute(Channel& channel, const ModelConfig& config,
                             const std::vector<LayerAddress>& layers,
                             const PrivacyConfig& privacy);

  /// Adds a layer with caller-supplied noise and effects.
  void add_layer(const LayerAddress& layer, LayerNoise noise);

  std::size_t k(const LayerAddress& layer) const;
  std::size_t t_max() const { return t_max_; }
  std::uint64_t seed() const { return seed_; }
  bool covers(const LayerAddress& layer) const { return layers_.contains(layer); }
  const LayerNoise& layer(const LayerAddress& layer) const;
  std::size_t rotate(const LayerAddress& layer, std::uint64_t iteration) const;

  /// x + n_i (noise truncated to x's row count).
  Tensor blind(const LayerAddress& layer, const Tensor& x,
               std::uint64_t iteration) const;
  /// y_noisy - n_effect_i.
  Tensor unblind(const LayerAddress& layer, const Tensor& y_noisy,
                 std::uint64_t iteration) const;
  /// blind, forward over `channel`, unblind.
  Tensor blind_forward(Channel& channel, const LayerAddress& layer,
                       const Tensor& x, std::uint64_t iteration,
                       std::size_t out_width) const;

  std::size_t bytes() const;

 private:
  std::uint64_t seed_ = 1;
  std::size_t t_max_ = 0;
  std::map<LayerAddress, LayerNoise> layers_;
};

}  // namespace layerserve

#endif  // LAYERSERVE_PRIVACY_HPP_
