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

#ifndef LAYERSERVE_ATTENTION_HPP_
#define LAYERSERVE_ATTENTION_HPP_

#include <cstdint>
#include <vector>

#include "layerserve/model.hpp"
#include "layerserve/tensor.hpp"

namespace layerserve {

/// Where the KV cache lives: accelerator memory or host memory.
enum class CachePlacement { kFast, kOffloaded };
/// Where decode-time attention runs when the cache is offloaded.
enum class DecodeCompute { kOnFast, kOnOffloaded };

std::string placement_name(CachePlacement p);
CachePlacement parse_placement(const std::string& name);
std::string decode_compute_name(DecodeCompute c);
DecodeCompute parse_decode_compute(const std::string& name);

struct TransferCounters {
  std::uint64_t prefill_bytes = 0;
  std::uint64_t decode_bytes = 0;
  std::vector<std::uint64_t> per_step;  // decode bytes for each step
};

/// Keys and values for one sequence, stored per (block, head) as
/// [positions, d_head].
class KVCache {
 public:
  KVCache() = default;
  KVCache(const ModelConfig& config,
          CachePlacement placement = CachePlacement::kFast);

  std::size_t length(int block) const;
  std::size_t length() const { return n_layers_ ? length(0) : 0; }
  /// Appends rows [rows, d_head] to a head's K and V.
  void append(int block, int head, std::span<const float> k,
              std::span<const float> v);
  std::span<const float> keys(int block, int head) const;
  std::span<const float> values(int block, int head) const;

  /// n_layers * 2 * length * d_model * 4
  std::size_t bytes() const;
  CachePlacement placement() const { return placement_; }
  TransferCounters& counters() { return counters_; }
  const TransferCounters& counters() const { return counters_; }

 private:
  int n_layers_ = 0;
  int n_heads_ = 0;
  int d_head_ = 0;
  int max_seq_ = 0;
  CachePlacement placement_ = CachePlacement::kFast;
  std::vector<std::vector<float>> k_;  // index block * n_heads + head
  std::vector<std::vector<float>> v_;
  TransferCounters counters_;
};

/// Copies columns [head*d_head, (head+1)*d_head) of x into [rows, d_head].
Tensor split_head(const Tensor& x, int head, int d_head);
void merge_head(Tensor& dst, const Tensor& part, int head, int d_head);

/// Causal attention for one head. Query row i sits at absolute position
/// `offset + i` and attends keys 0..offset+i. `probs`, when non-null,
/// receives the [q_rows, n_keys] attention weights (zeros beyond the mask).
Tensor attend_head(std::span<const float> q, std::span<const float> k,
                   std::span<const float> v, std::size_t q_rows,
                   std::size_t n_keys, std::size_t d_head, std::size_t offset,
                   Tensor* probs = nullptr);

struct AttentionGrads {
  Tensor dq;
  Tensor dk;
  Tensor dv;
};

/// Backward of `attend_head` with offset 0 and n_keys == q_rows.
AttentionGrads attend_head_backward(const Tensor& q, const Tensor& k,
                                    const Tensor& v, const Tensor& probs,
                                    const Tensor& grad_out);

/// Full multi-head causal self-attention over one sequence (q, k, v are
/// [seq, d_model]). Optionally saves per-head probabilities.
Tensor causal_self_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                             int n_heads, std::vector<Tensor>* probs = nullptr);

struct MultiHeadGrads {
  Tensor dq;
  Tensor dk;
  Tensor dv;
};

MultiHeadGrads causal_self_attention_backward(const Tensor& q, const Tensor& k,
                                              const Tensor& v,
                                              const std::vector<Tensor>& probs,
                                              const Tensor& grad_out,
                                              int n_heads);

/// Appends the new rows of q/k/v ([rows, d_model]) of one sequence to the
/// cache for `block` and returns attention output for those rows.
Tensor cached_attention(KVCache& cache, int block, const Tensor& q,
                        const Tensor& k, const Tensor& v, int n_heads);

}  // namespace layerserve

#endif  // LAYERSERVE_ATTENTION_HPP_
