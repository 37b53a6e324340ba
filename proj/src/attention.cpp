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

#include "layerserve/attention.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "layerserve/ops.hpp"

namespace layerserve {

std::string placement_name(CachePlacement p) {
  return p == CachePlacement::kFast ? "fast" : "offloaded";
}

CachePlacement parse_placement(const std::string& name) {
  if (name == "fast") return CachePlacement::kFast;
  if (name == "offloaded") return CachePlacement::kOffloaded;
  throw std::invalid_argument("unknown cache placement '" + name + "'");
}

std::string decode_compute_name(DecodeCompute c) {
  return c == DecodeCompute::kOnFast ? "fast" : "offloaded";
}

DecodeCompute parse_decode_compute(const std::string& name) {
  if (name == "fast") return DecodeCompute::kOnFast;
  if (name == "offloaded") return DecodeCompute::kOnOffloaded;
  throw std::invalid_argument("unknown decode compute site '" + name + "'");
}

KVCache::KVCache(const ModelConfig& config, CachePlacement placement)
    : n_layers_(config.n_layers),
      n_heads_(config.n_heads),
      d_head_(config.d_head()),
      max_seq_(config.max_seq),
      placement_(placement),
      k_(static_cast<std::size_t>(config.n_layers * config.n_heads)),
      v_(static_cast<std::size_t>(config.n_layers * config.n_heads)) {}

std::size_t KVCache::length(int block) const {
  return k_.at(static_cast<std::size_t>(block * n_heads_)).size() /
         static_cast<std::size_t>(d_head_);
}

void KVCache::append(int block, int head, std::span<const float> k,
                     std::span<const float> v) {
  if (k.size() != v.size() || k.size() % static_cast<std::size_t>(d_head_)) {
    throw DimensionError("KV append: ragged key/value rows");
  }
  const auto idx = static_cast<std::size_t>(block * n_heads_ + head);
  auto& ks = k_.at(idx);
  auto& vs = v_.at(idx);
  const std::size_t rows = k.size() / static_cast<std::size_t>(d_head_);
  if (ks.size() / static_cast<std::size_t>(d_head_) + rows >
      static_cast<std::size_t>(max_seq_)) {
    throw std::length_error("KV cache length would exceed max_seq " +
                            std::to_string(max_seq_));
  }
  ks.insert(ks.end(), k.begin(), k.end());
  vs.insert(vs.end(), v.begin(), v.end());
}

std::span<const float> KVCache::keys(int block, int head) const {
  return k_.at(static_cast<std::size_t>(block * n_heads_ + head));
}

std::span<const float> KVCache::values(int block, int head) const {
  return v_.at(static_cast<std::size_t>(block * n_heads_ + head));
}

std::size_t KVCache::bytes() const {
  std::size_t total = 0;
  for (const auto& k : k_) total += k.size();
  for (const auto& v : v_) total += v.size();
  return total * sizeof(float);
}

Tensor split_head(const Tensor& x, int head, int d_head) {
  const auto dh = static_cast<std::size_t>(d_head);
  const std::size_t off = static_cast<std::size_t>(head) * dh;
  Tensor out({x.rows(), dh});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto src = x.row(i).subspan(off, dh);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void merge_head(Tensor& dst, const Tensor& part, int head, int d_head) {
  const auto dh = static_cast<std::size_t>(d_head);
  const std::size_t off = static_cast<std::size_t>(head) * dh;
  for (std::size_t i = 0; i < part.rows(); ++i) {
    auto src = part.row(i);
    std::copy(src.begin(), src.end(), dst.row(i).begin() + static_cast<std::ptrdiff_t>(off));
  }
}

Tensor attend_head(std::span<const float> q, std::span<const float> k,
                   std::span<const float> v, std::size_t q_rows,
                   std::size_t n_keys, std::size_t d_head, std::size_t offset,
                   Tensor* probs) {
  if (offset + q_rows > n_keys) {
    throw DimensionError("attention: " + std::to_string(q_rows) +
                         " queries at offset " + std::to_string(offset) +
                         " need more than " + std::to_string(n_keys) + " keys");
  }
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(d_head));
  Tensor out({q_rows, d_head});
  if (probs) *probs = Tensor({q_rows, n_keys});
  std::vector<float> w(n_keys);
  for (std::size_t i = 0; i < q_rows; ++i) {
    const std::size_t visible = offset + i + 1;
    const float* qi = q.data() + i * d_head;
    float mx = -INFINITY;
    for (std::size_t j = 0; j < visible; ++j) {
      const float* kj = k.data() + j * d_head;
      float dot = 0.0f;
      for (std::size_t t = 0; t < d_head; ++t) dot += qi[t] * kj[t];
      w[j] = dot * inv_sqrt;
      mx = std::max(mx, w[j]);
    }
    float sum = 0.0f;
    for (std::size_t j = 0; j < visible; ++j) {
      w[j] = std::exp(w[j] - mx);
      sum += w[j];
    }
    const float inv = 1.0f / sum;
    auto o = out.row(i);
    for (std::size_t j = 0; j < visible; ++j) {
      w[j] *= inv;
      const float* vj = v.data() + j * d_head;
      for (std::size_t t = 0; t < d_head; ++t) o[t] += w[j] * vj[t];
    }
    if (probs) std::copy(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(visible), probs->row(i).begin());
  }
  return out;
}

AttentionGrads attend_head_backward(const Tensor& q, const Tensor& k,
                                    const Tensor& v, const Tensor& probs,
                                    const Tensor& grad_out) {
  const std::size_t s = q.rows();
  const std::size_t dh = q.cols();
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
  AttentionGrads g{Tensor({s, dh}), Tensor({s, dh}), Tensor({s, dh})};
  std::vector<float> dp(s);
  for (std::size_t i = 0; i < s; ++i) {
    auto go = grad_out.row(i);
    auto p = probs.row(i);
    float dot = 0.0f;
    for (std::size_t j = 0; j <= i; ++j) {
      auto vj = v.row(j);
      float acc = 0.0f;
      for (std::size_t t = 0; t < dh; ++t) acc += go[t] * vj[t];
      dp[j] = acc;
      dot += p[j] * acc;
      auto dvj = g.dv.row(j);
      for (std::size_t t = 0; t < dh; ++t) dvj[t] += p[j] * go[t];
    }
    auto dqi = g.dq.row(i);
    auto qi = q.row(i);
    for (std::size_t j = 0; j <= i; ++j) {
      const float ds = p[j] * (dp[j] - dot) * inv_sqrt;
      auto kj = k.row(j);
      auto dkj = g.dk.row(j);
      for (std::size_t t = 0; t < dh; ++t) {
        dqi[t] += ds * kj[t];
        dkj[t] += ds * qi[t];
      }
    }
  }
  return g;
}

Tensor causal_self_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                             int n_heads, std::vector<Tensor>* probs) {
  const std::size_t s = q.rows();
  const int dh = static_cast<int>(q.cols()) / n_heads;
  Tensor out(q.shape());
  if (probs) probs->assign(static_cast<std::size_t>(n_heads), Tensor());
  for (int h = 0; h < n_heads; ++h) {
    Tensor qh = split_head(q, h, dh);
    Tensor kh = split_head(k, h, dh);
    Tensor vh = split_head(v, h, dh);
    Tensor oh = attend_head(qh.data(), kh.data(), vh.data(), s, s,
                            static_cast<std::size_t>(dh), 0,
                            probs ? &(*probs)[static_cast<std::size_t>(h)] : nullptr);
    merge_head(out, oh, h, dh);
  }
  return out;
}

MultiHeadGrads causal_self_attention_backward(const Tensor& q, const Tensor& k,
                                              const Tensor& v,
                                              const std::vector<Tensor>& probs,
                                              const Tensor& grad_out,
                                              int n_heads) {
  const int dh = static_cast<int>(q.cols()) / n_heads;
  MultiHeadGrads g{Tensor(q.shape()), Tensor(k.shape()), Tensor(v.shape())};
  for (int h = 0; h < n_heads; ++h) {
    AttentionGrads gh = attend_head_backward(
        split_head(q, h, dh), split_head(k, h, dh), split_head(v, h, dh),
        probs[static_cast<std::size_t>(h)], split_head(grad_out, h, dh));
    merge_head(g.dq, gh.dq, h, dh);
    merge_head(g.dk, gh.dk, h, dh);
    merge_head(g.dv, gh.dv, h, dh);
  }
  return g;
}

Tensor cached_attention(KVCache& cache, int block, const Tensor& q,
                        const Tensor& k, const Tensor& v, int n_heads) {
  const std::size_t rows = q.rows();
  const int dh = static_cast<int>(q.cols()) / n_heads;
  const std::size_t offset = cache.length(block);
  Tensor out(q.shape());
  for (int h = 0; h < n_heads; ++h) {
    Tensor kh = split_head(k, h, dh);
    Tensor vh = split_head(v, h, dh);
    cache.append(block, h, kh.data(), vh.data());
    Tensor qh = split_head(q, h, dh);
    auto keys = cache.keys(block, h);
    Tensor oh = attend_head(qh.data(), keys, cache.values(block, h), rows,
                            offset + rows, static_cast<std::size_t>(dh),
                            offset);
    merge_head(out, oh, h, dh);
  }
  return out;
}

}  // namespace layerserve
