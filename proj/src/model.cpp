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

#include "layerserve/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "layerserve/adapter.hpp"
#include "layerserve/attention.hpp"
#include "layerserve/ops.hpp"
#include "layerserve/rng.hpp"

namespace layerserve {

std::string role_name(Role role) {
  switch (role) {
    case Role::kQ: return "Q";
    case Role::kK: return "K";
    case Role::kV: return "V";
    case Role::kO: return "O";
    case Role::kFfUp: return "FF_UP";
    case Role::kFfDown: return "FF_DOWN";
    case Role::kLmHead: return "LM_HEAD";
  }
  return "?";
}

Role parse_role(const std::string& name) {
  std::string upper;
  for (char c : name) upper.push_back(static_cast<char>(std::toupper(c)));
  for (Role r : kAllRoles) {
    if (role_name(r) == upper) return r;
  }
  throw std::invalid_argument("unknown layer role '" + name + "'");
}

std::string to_string(const LayerAddress& address) {
  return std::to_string(address.block) + "." + role_name(address.role);
}

void ModelConfig::validate() const {
  if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || d_ff <= 0 ||
      vocab_size <= 0 || max_seq < 1) {
    throw std::invalid_argument("model config: all sizes must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("model config: d_model " +
                                std::to_string(d_model) +
                                " not divisible by n_heads " +
                                std::to_string(n_heads));
  }
  if (n_layers > 0xfffe) {
    throw std::invalid_argument("model config: too many layers");
  }
}

std::size_t ModelConfig::d_in(Role role) const {
  switch (role) {
    case Role::kFfDown: return static_cast<std::size_t>(d_ff);
    default: return static_cast<std::size_t>(d_model);
  }
}

std::size_t ModelConfig::d_out(Role role) const {
  switch (role) {
    case Role::kFfUp: return static_cast<std::size_t>(d_ff);
    case Role::kLmHead: return static_cast<std::size_t>(vocab_size);
    default: return static_cast<std::size_t>(d_model);
  }
}

bool ModelConfig::contains(const LayerAddress& address) const {
  if (address.role == Role::kLmHead) return address.block == n_layers;
  return address.block < n_layers;
}

std::vector<LayerAddress> ModelConfig::layer_addresses() const {
  std::vector<LayerAddress> out;
  for (int b = 0; b < n_layers; ++b) {
    for (Role r : kBlockRoles) {
      out.push_back({static_cast<std::uint16_t>(b), r});
    }
  }
  out.push_back({static_cast<std::uint16_t>(n_layers), Role::kLmHead});
  return out;
}

std::size_t ModelConfig::layer_bytes(Role role) const {
  std::size_t n = d_in(role) * d_out(role) + (bias ? d_out(role) : 0);
  return n * sizeof(float);
}

std::size_t ModelConfig::base_weight_bytes() const {
  std::size_t total = 0;
  for (const auto& a : layer_addresses()) total += layer_bytes(a.role);
  return total;
}

std::size_t ModelConfig::client_weight_bytes() const {
  const auto d = static_cast<std::size_t>(d_model);
  const std::size_t n = static_cast<std::size_t>(vocab_size) * d +
                        (2 * static_cast<std::size_t>(n_layers) + 1) * d;
  return n * sizeof(float);
}

std::size_t ModelConfig::max_width() const {
  return static_cast<std::size_t>(std::max({d_model, d_ff, vocab_size}));
}

const AffineParams& BaseModel::layer(const LayerAddress& address) const {
  auto it = layers.find(address);
  if (it == layers.end()) {
    throw std::out_of_range("no base layer at " + to_string(address));
  }
  return it->second;
}

std::uint64_t BaseModel::base_checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [addr, p] : layers) {
    h = checksum(p.weight, h ^ (addr.block * 16u + static_cast<unsigned>(addr.role)));
    if (p.bias) h = checksum(*p.bias, h);
  }
  return h;
}

std::uint64_t BaseModel::client_checksum() const {
  std::uint64_t h = checksum(embedding);
  for (const auto& g : attn_norm) h = checksum(g, h);
  for (const auto& g : ffn_norm) h = checksum(g, h);
  return checksum(final_norm, h);
}

BaseModel build_model(const ModelConfig& config) {
  config.validate();
  BaseModel m;
  m.config = config;
  std::uint64_t stream = 0;
  auto rng = [&]() { return Rng(mix64(config.seed ^ mix64(++stream))); };
  const auto d = static_cast<std::size_t>(config.d_model);

  m.embedding = rng().uniform_tensor(
      {static_cast<std::size_t>(config.vocab_size), d}, -1.0f, 1.0f);
  for (int b = 0; b < config.n_layers; ++b) {
    Tensor g1 = rng().uniform_tensor({d}, 0.9f, 1.1f);
    Tensor g2 = rng().uniform_tensor({d}, 0.9f, 1.1f);
    m.attn_norm.push_back(std::move(g1));
    m.ffn_norm.push_back(std::move(g2));
  }
  m.final_norm = rng().uniform_tensor({d}, 0.9f, 1.1f);
  for (const auto& addr : config.layer_addresses()) {
    const std::size_t din = config.d_in(addr.role);
    const std::size_t dout = config.d_out(addr.role);
    const float a = std::sqrt(3.0f / static_cast<float>(din));
    Tensor w = rng().uniform_tensor({din, dout}, -a, a);
    std::optional<Tensor> bias;
    if (config.bias) bias = rng().uniform_tensor({dout}, -0.1f, 0.1f);
    m.layers.emplace(addr, AffineParams(std::move(w), std::move(bias)));
  }
  return m;
}

Tensor embed_tokens(const Tensor& embedding, std::span<const std::int32_t> ids,
                    int vocab_size) {
  const std::size_t d = embedding.cols();
  Tensor x({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab_size) {
      throw IndexError("token id " + std::to_string(ids[i]) +
                       " outside vocabulary of " + std::to_string(vocab_size));
    }
    auto src = embedding.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), x.row(i).begin());
  }
  return x;
}

namespace {

Tensor run_layer(const BaseModel& model, const AdapterState* adapter,
                 const LayerAddress& address, const Tensor& x) {
  Tensor y = affine_forward(x, model.layer(address));
  if (adapter && adapter->targets(address)) return adapter->apply(address, x, y);
  return y;
}

}  // namespace

Tensor reference_forward(const BaseModel& model, const AdapterState* adapter,
                         const TokenBatch& tokens,
                         std::vector<KVCache>* caches) {
  const ModelConfig& cfg = model.config;
  if (tokens.ids.size() != tokens.tokens()) {
    throw DimensionError("token batch has " + std::to_string(tokens.ids.size()) +
                         " ids for shape [" + std::to_string(tokens.batch) +
                         "," + std::to_string(tokens.seq) + "]");
  }
  std::size_t past = 0;
  if (caches) {
    if (caches->size() != tokens.batch) {
      throw DimensionError("one KV cache per batch row required");
    }
    past = tokens.batch ? (*caches)[0].length() : 0;
  }
  if (past + tokens.seq > static_cast<std::size_t>(cfg.max_seq)) {
    throw std::length_error("sequence length " +
                            std::to_string(past + tokens.seq) +
                            " exceeds max_seq " + std::to_string(cfg.max_seq));
  }

  const std::size_t seq = tokens.seq;
  Tensor x = embed_tokens(model.embedding, tokens.ids, cfg.vocab_size);
  for (int b = 0; b < cfg.n_layers; ++b) {
    const auto blk = static_cast<std::uint16_t>(b);
    Tensor h = rmsnorm(x, model.attn_norm[b], cfg.norm_eps);
    Tensor q = run_layer(model, adapter, {blk, Role::kQ}, h);
    Tensor k = run_layer(model, adapter, {blk, Role::kK}, h);
    Tensor v = run_layer(model, adapter, {blk, Role::kV}, h);

    std::vector<Tensor> parts;
    for (std::size_t s = 0; s < tokens.batch; ++s) {
      Tensor qs = slice_rows(q, s * seq, (s + 1) * seq);
      Tensor ks = slice_rows(k, s * seq, (s + 1) * seq);
      Tensor vs = slice_rows(v, s * seq, (s + 1) * seq);
      if (caches) {
        parts.push_back(
            cached_attention((*caches)[s], b, qs, ks, vs, cfg.n_heads));
      } else {
        parts.push_back(causal_self_attention(qs, ks, vs, cfg.n_heads));
      }
    }
    std::vector<const Tensor*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    Tensor attn = concat_rows(ptrs);
    if (ptrs.empty()) attn = Tensor({0, static_cast<std::size_t>(cfg.d_model)});

    add_inplace(x, run_layer(model, adapter, {blk, Role::kO}, attn));
    Tensor h2 = rmsnorm(x, model.ffn_norm[b], cfg.norm_eps);
    Tensor up = run_layer(model, adapter, {blk, Role::kFfUp}, h2);
    Tensor act = silu(up);
    add_inplace(x, run_layer(model, adapter, {blk, Role::kFfDown}, act));
  }
  Tensor hf = rmsnorm(x, model.final_norm, cfg.norm_eps);
  return run_layer(model, adapter,
                   {static_cast<std::uint16_t>(cfg.n_layers), Role::kLmHead},
                   hf);
}

}  // namespace layerserve
