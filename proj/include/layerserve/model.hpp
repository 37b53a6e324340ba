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

#ifndef LAYERSERVE_MODEL_HPP_
#define LAYERSERVE_MODEL_HPP_

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "layerserve/tensor.hpp"

namespace layerserve {

class AdapterState;
class KVCache;

/// Which affine projection of a decoder block a layer is.
enum class Role : std::uint8_t {
  kQ = 0,
  kK = 1,
  kV = 2,
  kO = 3,
  kFfUp = 4,
  kFfDown = 5,
  kLmHead = 6,
};

inline constexpr Role kAllRoles[] = {Role::kQ,    Role::kK,      Role::kV,
                                     Role::kO,    Role::kFfUp,   Role::kFfDown,
                                     Role::kLmHead};
inline constexpr Role kBlockRoles[] = {Role::kQ,    Role::kK,    Role::kV,
                                       Role::kO,    Role::kFfUp, Role::kFfDown};

std::string role_name(Role role);
/// Accepts Q, K, V, O, FF_UP, FF_DOWN, LM_HEAD (case-insensitive).
Role parse_role(const std::string& name);

/// Logical address of one frozen affine layer. LM_HEAD lives in the
/// sentinel block `n_layers`.
struct LayerAddress {
  std::uint16_t block = 0;
  Role role = Role::kQ;

  auto operator<=>(const LayerAddress&) const = default;
};

std::string to_string(const LayerAddress& address);

struct ModelConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 128;
  int vocab_size = 256;
  int max_seq = 64;
  std::uint64_t seed = 1;
  bool bias = true;
  float norm_eps = 1e-5f;

  /// Throws std::invalid_argument on non-positive sizes or d_model % n_heads.
  void validate() const;

  int d_head() const { return d_model / n_heads; }
  std::size_t d_in(Role role) const;
  std::size_t d_out(Role role) const;
  bool contains(const LayerAddress& address) const;
  /// All affine layers in execution order: blocks 0..n-1 (Q,K,V,O,UP,DOWN),
  /// then LM_HEAD.
  std::vector<LayerAddress> layer_addresses() const;

  /// Closed-form byte counts (f32).
  std::size_t layer_bytes(Role role) const;
  std::size_t base_weight_bytes() const;
  /// Embedding plus every norm gain vector.
  std::size_t client_weight_bytes() const;
  /// Largest d_in or d_out of any affine layer.
  std::size_t max_width() const;
};

/// The frozen model. Affine layers are the shared base; embedding and norm
/// gains are client-side but ship in the same checkpoint.
struct BaseModel {
  ModelConfig config;
  std::map<LayerAddress, AffineParams> layers;
  Tensor embedding;               // [vocab, d_model]
  std::vector<Tensor> attn_norm;  // per block, [d_model]
  std::vector<Tensor> ffn_norm;   // per block, [d_model]
  Tensor final_norm;              // [d_model]

  const AffineParams& layer(const LayerAddress& address) const;
  std::uint64_t base_checksum() const;
  std::uint64_t client_checksum() const;
};

/// Deterministic initialization from `config.seed`.
BaseModel build_model(const ModelConfig& config);

/// Token ids laid out [batch, seq] row-major.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<std::int32_t> ids;

  std::size_t tokens() const { return batch * seq; }
};

/// Monolithic pre-norm decoder forward. Returns logits [batch*seq, vocab].
/// When `caches` is given (one per batch row), queries are positioned after
/// the cached prefix and the new keys/values are appended.
Tensor reference_forward(const BaseModel& model, const AdapterState* adapter,
                         const TokenBatch& tokens,
                         std::vector<KVCache>* caches = nullptr);

/// Rows of the embedding table for `ids`.
Tensor embed_tokens(const Tensor& embedding, std::span<const std::int32_t> ids,
                    int vocab_size);

}  // namespace layerserve

#endif  // LAYERSERVE_MODEL_HPP_
