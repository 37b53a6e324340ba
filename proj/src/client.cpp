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

#include "layerserve/client.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "layerserve/ops.hpp"
#include "layerserve/rng.hpp"

namespace layerserve {

VirtLayer::VirtLayer(LayerAddress address, std::uint32_t client_id,
                     std::size_t d_in, std::size_t d_out, Channel* channel)
    : address_(address),
      client_id_(client_id),
      d_in_(d_in),
      d_out_(d_out),
      channel_(channel) {}

namespace {

void check_reply(const LayerAddress& address, const Tensor& y,
                 std::size_t rows, std::size_t cols) {
  if (y.rank() != 2 || y.rows() != rows || y.cols() != cols) {
    throw ProtocolError("layer " + to_string(address) + ": executor returned " +
                        shape_string(y.shape()) + ", expected [" +
                        std::to_string(rows) + "," + std::to_string(cols) + "]");
  }
}

template <typename Fn>
Tensor with_address(const LayerAddress& address, Fn&& fn) {
  try {
    return fn();
  } catch (const TransportError& e) {
    throw TransportError("layer " + to_string(address) + ": " + e.what());
  }
}

}  // namespace

Tensor VirtLayer::forward(const Tensor& x, std::uint64_t iteration) const {
  if (x.rank() != 2 || x.cols() != d_in_) {
    throw DimensionError("layer " + to_string(address_) + " expects width " +
                         std::to_string(d_in_) + ", got " +
                         shape_string(x.shape()));
  }
  Tensor y = with_address(address_, [&] {
    if (noise_ && noise_->covers(address_)) {
      return noise_->blind_forward(*channel_, address_, x, iteration, d_out_);
    }
    return channel_->call(address_, Pass::kForward, x, d_out_);
  });
  check_reply(address_, y, x.rows(), d_out_);
  return y;
}

Tensor VirtLayer::backward(const Tensor& grad_y) const {
  if (grad_y.rank() != 2 || grad_y.cols() != d_out_) {
    throw DimensionError("layer " + to_string(address_) + " backward expects width " +
                         std::to_string(d_out_) + ", got " +
                         shape_string(grad_y.shape()));
  }
  Tensor g = with_address(address_, [&] {
    return channel_->call(address_, Pass::kBackward, grad_y, d_in_);
  });
  check_reply(address_, g, grad_y.rows(), d_in_);
  return g;
}

Tensor ClientModel::layer_forward(const LayerAddress& address, const Tensor& x,
                                  std::uint64_t iteration) const {
  if (auto it = virt_layers.find(address); it != virt_layers.end()) {
    return it->second.forward(x, iteration);
  }
  return affine_forward(x, local_layers.at(address));
}

Tensor ClientModel::layer_backward(const LayerAddress& address,
                                   const Tensor& grad_y) const {
  if (auto it = virt_layers.find(address); it != virt_layers.end()) {
    return it->second.backward(grad_y);
  }
  return affine_backward_input(grad_y, local_layers.at(address));
}

std::size_t ClientModel::weight_bytes() const {
  std::size_t total = embedding.bytes() + final_norm.bytes();
  for (const auto& g : attn_norm) total += g.bytes();
  for (const auto& g : ffn_norm) total += g.bytes();
  for (const auto& [addr, p] : local_layers) total += p.bytes();
  return total;
}

void ClientModel::set_privacy(const NoiseSet* noise) {
  for (auto& [addr, v] : virt_layers) v.set_privacy(noise);
}

std::set<LayerAddress> all_base_layers(const ModelConfig& config) {
  auto addrs = config.layer_addresses();
  return {addrs.begin(), addrs.end()};
}

ClientModel virtualize(const BaseModel& model_def,
                       const std::set<LayerAddress>& base_layers,
                       Channel* channel, std::uint32_t client_id) {
  const ModelConfig& cfg = model_def.config;
  for (const auto& addr : base_layers) {
    if (!cfg.contains(addr)) {
      throw std::invalid_argument("virtualize: unknown layer address " +
                                  to_string(addr));
    }
  }
  if (!base_layers.empty() && channel == nullptr) {
    throw std::invalid_argument("virtualize: a transport is required");
  }
  ClientModel m;
  m.config = cfg;
  m.embedding = model_def.embedding;
  m.attn_norm = model_def.attn_norm;
  m.ffn_norm = model_def.ffn_norm;
  m.final_norm = model_def.final_norm;
  for (const auto& addr : cfg.layer_addresses()) {
    if (base_layers.contains(addr)) {
      m.virt_layers.emplace(addr, VirtLayer(addr, client_id, cfg.d_in(addr.role),
                                            cfg.d_out(addr.role), channel));
    } else {
      m.local_layers.emplace(addr, model_def.layer(addr));
    }
  }
  return m;
}

std::size_t JobConfig::max_request_tokens() const {
  if (kind == JobKind::kFinetune) return batch * seq;
  return batch * std::max<std::size_t>(prompt_len > 1 ? prompt_len - 1 : 1, 1);
}

struct ClientJob::Saved {
  struct Block {
    Tensor x_in, q, k, v, x_mid, up;
    std::vector<std::vector<Tensor>> probs;  // per sequence, per head
  };
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<Block> blocks;
  Tensor x_final;
  std::map<LayerAddress, Tensor> inputs;    // inputs of LoRA layers
  std::map<LayerAddress, Tensor> ia3_base;  // base outputs of IA3 layers

  std::size_t bytes() const {
    std::size_t total = x_final.bytes();
    for (const auto& b : blocks) {
      total += b.x_in.bytes() + b.q.bytes() + b.k.bytes() + b.v.bytes() +
               b.x_mid.bytes() + b.up.bytes();
      for (const auto& s : b.probs) {
        for (const auto& p : s) total += p.bytes();
      }
    }
    for (const auto& [a, t] : inputs) total += t.bytes();
    for (const auto& [a, t] : ia3_base) total += t.bytes();
    return total;
  }
};

ClientJob::ClientJob(JobConfig config, ClientModel model, Channel& channel,
                     std::uint32_t client_id)
    : config_(std::move(config)),
      model_(std::move(model)),
      channel_(channel),
      client_id_(client_id),
      adapter_(model_.config, config_.adapter),
      optimizer_(config_.optimizer),
      ledger_("client." + config_.name) {
  sync_ledger();
}

ClientJob::~ClientJob() {
  try {
    finish();
  } catch (...) {
  }
}

void ClientJob::start() {
  if (started_) return;
  channel_.open(client_id_, config_.kind);
  started_ = true;
  if (config_.privacy.enabled) {
    PrivacyConfig p = config_.privacy;
    if (p.t_max == 0) p.t_max = config_.max_request_tokens();
    std::vector<LayerAddress> layers;
    for (const auto& [addr, v] : model_.virt_layers) layers.push_back(addr);
    noise_ = NoiseSet::precompute(channel_, model_.config, layers, p);
    model_.set_privacy(&*noise_);
  }
  sync_ledger();
}

void ClientJob::finish() {
  if (!started_) return;
  started_ = false;
  channel_.close();
}

void ClientJob::sync_ledger() {
  ledger_.set(Category::kWeights,
              model_.weight_bytes() + (noise_ ? noise_->bytes() : 0));
  ledger_.set(Category::kAdapter, adapter_.bytes());
  ledger_.set(Category::kOptimizer, optimizer_.state_bytes());
  std::uint64_t kv = 0;
  for (const auto& c : caches_) kv += c.bytes();
  ledger_.set(Category::kKVCache, kv);
  ledger_.set(Category::kSavedActivations, saved_ ? saved_->bytes() : 0);
  ledger_.set(Category::kTransientBuffer, channel_.buffer_bytes());
}

Tensor ClientJob::apply_layer(const LayerAddress& address, const Tensor& x,
                              Saved* saved) {
  Tensor base = model_.layer_forward(address, x, iteration_);
  if (!adapter_.targets(address)) return base;
  if (saved) {
    if (adapter_.lora(address)) saved->inputs[address] = x;
    if (adapter_.ia3(address)) saved->ia3_base[address] = base;
  }
  return adapter_.apply(address, x, base);
}

Tensor ClientJob::forward(const TokenBatch& tokens, std::vector<KVCache>* caches) {
  if (!started_) throw StateError("job " + config_.name + " not started");
  const ModelConfig& cfg = model_.config;
  if (tokens.ids.size() != tokens.tokens()) {
    throw DimensionError("token batch has " + std::to_string(tokens.ids.size()) +
                         " ids for shape [" + std::to_string(tokens.batch) + "," +
                         std::to_string(tokens.seq) + "]");
  }
  std::size_t past = 0;
  if (caches) {
    if (caches->size() != tokens.batch) {
      throw DimensionError("one KV cache per batch row required");
    }
    past = tokens.batch ? (*caches)[0].length() : 0;
  }
  if (past + tokens.seq > static_cast<std::size_t>(cfg.max_seq)) {
    throw std::length_error("sequence length " + std::to_string(past + tokens.seq) +
                            " exceeds max_seq " + std::to_string(cfg.max_seq));
  }

  std::unique_ptr<Saved> saved;
  if (config_.kind == JobKind::kFinetune && !caches) {
    saved = std::make_unique<Saved>();
    saved->batch = tokens.batch;
    saved->seq = tokens.seq;
  }
  saved_.reset();

  const std::size_t seq = tokens.seq;
  const auto d = static_cast<std::size_t>(cfg.d_model);
  Tensor x = embed_tokens(model_.embedding, tokens.ids, cfg.vocab_size);
  for (int b = 0; b < cfg.n_layers; ++b) {
    const auto blk = static_cast<std::uint16_t>(b);
    Tensor h = rmsnorm(x, model_.attn_norm[b], cfg.norm_eps);
    Tensor q = apply_layer({blk, Role::kQ}, h, saved.get());
    Tensor k = apply_layer({blk, Role::kK}, h, saved.get());
    Tensor v = apply_layer({blk, Role::kV}, h, saved.get());

    Saved::Block* sb = nullptr;
    if (saved) {
      saved->blocks.emplace_back();
      sb = &saved->blocks.back();
      sb->probs.resize(tokens.batch);
    }
    std::vector<Tensor> parts;
    for (std::size_t s = 0; s < tokens.batch; ++s) {
      Tensor qs = slice_rows(q, s * seq, (s + 1) * seq);
      Tensor ks = slice_rows(k, s * seq, (s + 1) * seq);
      Tensor vs = slice_rows(v, s * seq, (s + 1) * seq);
      if (caches) {
        parts.push_back(cached_attention((*caches)[s], b, qs, ks, vs, cfg.n_heads));
      } else {
        parts.push_back(causal_self_attention(qs, ks, vs, cfg.n_heads,
                                              sb ? &sb->probs[s] : nullptr));
      }
    }
    std::vector<const Tensor*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    Tensor attn = ptrs.empty() ? Tensor({0, d}) : concat_rows(ptrs);

    Tensor x_in = x;
    add_inplace(x, apply_layer({blk, Role::kO}, attn, saved.get()));
    Tensor h2 = rmsnorm(x, model_.ffn_norm[b], cfg.norm_eps);
    Tensor up = apply_layer({blk, Role::kFfUp}, h2, saved.get());
    Tensor act = silu(up);
    if (sb) {
      sb->x_in = std::move(x_in);
      sb->q = std::move(q);
      sb->k = std::move(k);
      sb->v = std::move(v);
      sb->x_mid = x;
      sb->up = std::move(up);
    }
    add_inplace(x, apply_layer({blk, Role::kFfDown}, act, saved.get()));
  }
  Tensor hf = rmsnorm(x, model_.final_norm, cfg.norm_eps);
  Tensor logits = apply_layer(
      {static_cast<std::uint16_t>(cfg.n_layers), Role::kLmHead}, hf, saved.get());
  if (saved) saved->x_final = std::move(x);

  ++iteration_;
  saved_ = std::move(saved);
  if (keep_outputs_) outputs_.push_back(logits);
  sync_ledger();
  return logits;
}

Tensor ClientJob::backward_layer(const LayerAddress& address,
                                 const Tensor& grad_y, const Saved& saved,
                                 AdapterGrads& grads, bool need_input_grad) {
  const Tensor* g_base = &grad_y;
  Tensor scaled;
  Tensor gx_adapter;
  if (const LoraPair* p = adapter_.lora(address)) {
    LoraGrads lg = lora_backward(saved.inputs.at(address), grad_y, p->a, p->b,
                                 adapter_.config().alpha, adapter_.config().rank);
    grads.lora[address] = LoraPair{std::move(lg.grad_a), std::move(lg.grad_b)};
    gx_adapter = std::move(lg.grad_x);
  } else if (const Tensor* l = adapter_.ia3(address)) {
    grads.ia3[address] =
        column_sums(hadamard(grad_y, saved.ia3_base.at(address)));
    scaled = scale_columns(grad_y, *l);
    g_base = &scaled;
  }
  if (!need_input_grad) return {};
  Tensor gx = model_.layer_backward(address, *g_base);
  if (!gx_adapter.empty()) add_inplace(gx, gx_adapter);
  return gx;
}

AdapterGrads ClientJob::backward(const Tensor& grad_logits) {
  if (config_.kind != JobKind::kFinetune) {
    throw StateError("job " + config_.name + ": backward on an inference job");
  }
  if (!saved_) {
    throw StateError("job " + config_.name + ": backward without a forward pass");
  }
  const ModelConfig& cfg = model_.config;
  const Saved& sv = *saved_;
  const std::size_t t = sv.batch * sv.seq;
  if (grad_logits.rank() != 2 || grad_logits.rows() != t ||
      grad_logits.cols() != static_cast<std::size_t>(cfg.vocab_size)) {
    throw DimensionError("grad_logits " + shape_string(grad_logits.shape()) +
                         " does not match the last forward");
  }

  AdapterGrads grads = AdapterGrads::zeros_like(adapter_);
  bool blocks_trainable = false;
  for (Role r : kBlockRoles) {
    if (adapter_.config().method != AdapterMethod::kNone &&
        adapter_.config().targets.contains(r)) {
      blocks_trainable = true;
    }
  }

  const LayerAddress head{static_cast<std::uint16_t>(cfg.n_layers), Role::kLmHead};
  Tensor g_hf = backward_layer(head, grad_logits, sv, grads, blocks_trainable);
  if (blocks_trainable) {
    Tensor g = rmsnorm_backward(sv.x_final, model_.final_norm, cfg.norm_eps, g_hf);
    for (int b = cfg.n_layers - 1; b >= 0; --b) {
      const auto blk = static_cast<std::uint16_t>(b);
      const Saved::Block& sb = sv.blocks[static_cast<std::size_t>(b)];
      const bool below = b > 0;

      Tensor g_act = backward_layer({blk, Role::kFfDown}, g, sv, grads, true);
      Tensor g_up = silu_backward(sb.up, g_act);
      Tensor g_h2 = backward_layer({blk, Role::kFfUp}, g_up, sv, grads, true);
      Tensor g_mid = add(g, rmsnorm_backward(sb.x_mid, model_.ffn_norm[b],
                                             cfg.norm_eps, g_h2));
      Tensor g_attn = backward_layer({blk, Role::kO}, g_mid, sv, grads, true);

      std::vector<Tensor> dq, dk, dv;
      for (std::size_t s = 0; s < sv.batch; ++s) {
        const std::size_t lo = s * sv.seq;
        const std::size_t hi = lo + sv.seq;
        MultiHeadGrads mg = causal_self_attention_backward(
            slice_rows(sb.q, lo, hi), slice_rows(sb.k, lo, hi),
            slice_rows(sb.v, lo, hi), sb.probs[s], slice_rows(g_attn, lo, hi),
            cfg.n_heads);
        dq.push_back(std::move(mg.dq));
        dk.push_back(std::move(mg.dk));
        dv.push_back(std::move(mg.dv));
      }
      auto cat = [](const std::vector<Tensor>& parts) {
        std::vector<const Tensor*> ptrs;
        for (const auto& p : parts) ptrs.push_back(&p);
        return concat_rows(ptrs);
      };
      Tensor g_h = backward_layer({blk, Role::kQ}, cat(dq), sv, grads, below);
      Tensor g_hk = backward_layer({blk, Role::kK}, cat(dk), sv, grads, below);
      Tensor g_hv = backward_layer({blk, Role::kV}, cat(dv), sv, grads, below);
      if (!below) break;
      add_inplace(g_h, g_hk);
      add_inplace(g_h, g_hv);
      g = add(g_mid, rmsnorm_backward(sb.x_in, model_.attn_norm[b],
                                      cfg.norm_eps, g_h));
    }
  }
  saved_.reset();
  sync_ledger();
  return grads;
}

float ClientJob::train_step(const TokenBatch& tokens,
                            std::span<const std::int32_t> targets) {
  if (config_.kind != JobKind::kFinetune) {
    throw StateError("job " + config_.name + ": train_step on an inference job");
  }
  const auto t0 = std::chrono::steady_clock::now();
  Tensor logits = forward(tokens);
  LossAndGrad lg = cross_entropy(logits, targets);
  AdapterGrads grads = backward(lg.grad_logits);
  optimizer_.step(adapter_, grads);
  sync_ledger();
  const double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  StepRecord r;
  r.iteration = static_cast<int>(iteration_);
  r.latency_ms = ms;
  r.tokens = tokens.tokens();
  r.tokens_per_s = ms > 0 ? static_cast<double>(r.tokens) * 1e3 / ms : 0.0;
  r.loss = lg.loss;
  records_.push_back(r);
  return lg.loss;
}

namespace {

std::int32_t argmax_row(std::span<const float> row) {
  return static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) -
                                   row.begin());
}

void check_generate(const ModelConfig& cfg, const TokenBatch& prompt,
                    std::size_t n_tokens) {
  if (prompt.seq == 0 || prompt.ids.size() != prompt.tokens()) {
    throw std::invalid_argument("generate: prompt must hold at least one token per row");
  }
  if (prompt.seq + n_tokens > static_cast<std::size_t>(cfg.max_seq)) {
    throw std::length_error("generate: prompt " + std::to_string(prompt.seq) +
                            " + " + std::to_string(n_tokens) +
                            " tokens exceeds max_seq " + std::to_string(cfg.max_seq));
  }
}

TokenBatch columns(const TokenBatch& t, std::size_t begin, std::size_t end) {
  TokenBatch out{t.batch, end - begin, {}};
  for (std::size_t s = 0; s < t.batch; ++s) {
    for (std::size_t i = begin; i < end; ++i) out.ids.push_back(t.ids[s * t.seq + i]);
  }
  return out;
}

// Shared greedy loop; `step` runs one forward over the caches.
template <typename Step>
std::vector<std::int32_t> greedy(const TokenBatch& prompt, std::size_t n_tokens,
                                 std::vector<KVCache>& caches, Step&& step,
                                 const std::function<void(std::size_t)>& on_decode) {
  const std::size_t width = prompt.seq + n_tokens;
  std::vector<std::int32_t> out(prompt.batch * width);
  for (std::size_t s = 0; s < prompt.batch; ++s) {
    std::copy_n(prompt.ids.begin() + static_cast<std::ptrdiff_t>(s * prompt.seq),
                prompt.seq, out.begin() + static_cast<std::ptrdiff_t>(s * width));
  }
  if (n_tokens == 0) return out;
  if (prompt.seq > 1) step(columns(prompt, 0, prompt.seq - 1), caches);
  TokenBatch cur = columns(prompt, prompt.seq - 1, prompt.seq);
  for (std::size_t i = 0; i < n_tokens; ++i) {
    Tensor logits = step(cur, caches);
    for (std::size_t s = 0; s < prompt.batch; ++s) {
      const std::int32_t next = argmax_row(logits.row(s));
      out[s * width + prompt.seq + i] = next;
      cur.ids[s] = next;
    }
    if (on_decode) on_decode(i);
  }
  return out;
}

}  // namespace

std::vector<std::int32_t> ClientJob::generate(const TokenBatch& prompt,
                                              std::size_t n_tokens) {
  const ModelConfig& cfg = model_.config;
  check_generate(cfg, prompt, n_tokens);
  caches_.assign(prompt.batch, KVCache(cfg, config_.placement));
  if (n_tokens == 0) {
    sync_ledger();
    return columns(prompt, 0, prompt.seq).ids;
  }
  auto t0 = std::chrono::steady_clock::now();
  auto step = [&](const TokenBatch& t, std::vector<KVCache>& c) {
    return forward(t, &c);
  };
  auto on_decode = [&](std::size_t) {
    std::uint64_t moved = 0;
    for (auto& c : caches_) {
      const std::uint64_t b = decode_transfer_bytes(cfg, config_.placement,
                                                    config_.decode_compute,
                                                    c.length());
      c.counters().decode_bytes += b;
      c.counters().per_step.push_back(b);
      moved += b;
    }
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - t0).count();
    t0 = now;
    StepRecord r;
    r.iteration = static_cast<int>(iteration_);
    r.latency_ms = ms;
    r.tokens = prompt.batch;
    r.tokens_per_s = ms > 0 ? static_cast<double>(r.tokens) * 1e3 / ms : 0.0;
    r.transfer_bytes = moved;
    records_.push_back(r);
  };
  auto result = greedy(prompt, n_tokens, caches_, step, on_decode);
  if (config_.placement == CachePlacement::kOffloaded) {
    // Prefill K/V is produced on the fast side and moved out once.
    const std::uint64_t per_pos = static_cast<std::uint64_t>(cfg.n_layers) * 2 *
                                  static_cast<std::uint64_t>(cfg.d_model) * 4;
    for (auto& c : caches_) c.counters().prefill_bytes = per_pos * (prompt.seq - 1);
  }
  sync_ledger();
  return result;
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
  if (first + count > tokens.batch) {
    throw std::out_of_range("dataset slice past the end");
  }
  Dataset d;
  d.tokens.batch = count;
  d.tokens.seq = tokens.seq;
  const auto lo = static_cast<std::ptrdiff_t>(first * tokens.seq);
  const auto hi = static_cast<std::ptrdiff_t>((first + count) * tokens.seq);
  d.tokens.ids.assign(tokens.ids.begin() + lo, tokens.ids.begin() + hi);
  d.targets.assign(targets.begin() + lo, targets.begin() + hi);
  return d;
}

Dataset copy_task(int vocab, std::size_t seq, std::size_t samples,
                  std::uint64_t seed) {
  Dataset d;
  d.tokens = random_prompts(vocab, samples, seq, seed);
  d.targets = d.tokens.ids;
  return d;
}

Dataset training_batch(const JobConfig& job, int vocab, int step) {
  const Dataset all = copy_task(vocab, job.seq, job.dataset_size, job.data_seed);
  Dataset d;
  d.tokens.batch = job.batch;
  d.tokens.seq = job.seq;
  for (std::size_t r = 0; r < job.batch; ++r) {
    const std::size_t row =
        (static_cast<std::size_t>(step) * job.batch + r) % job.dataset_size;
    const Dataset one = all.slice(row, 1);
    d.tokens.ids.insert(d.tokens.ids.end(), one.tokens.ids.begin(), one.tokens.ids.end());
    d.targets.insert(d.targets.end(), one.targets.begin(), one.targets.end());
  }
  return d;
}

TokenBatch job_prompt(const JobConfig& job, int vocab, std::size_t round) {
  return random_prompts(vocab, job.batch, job.prompt_len,
                        mix64(job.data_seed) + static_cast<std::uint64_t>(round));
}

TokenBatch random_prompts(int vocab, std::size_t batch, std::size_t len,
                          std::uint64_t seed) {
  Rng rng(mix64(seed));
  TokenBatch t{batch, len, {}};
  t.ids.reserve(batch * len);
  for (std::size_t i = 0; i < batch * len; ++i) {
    t.ids.push_back(static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(vocab))));
  }
  return t;
}

std::vector<std::int32_t> reference_generate(const BaseModel& model,
                                             const AdapterState* adapter,
                                             const TokenBatch& prompt,
                                             std::size_t n_tokens) {
  check_generate(model.config, prompt, n_tokens);
  std::vector<KVCache> caches(prompt.batch, KVCache(model.config));
  auto step = [&](const TokenBatch& t, std::vector<KVCache>& c) {
    return reference_forward(model, adapter, t, &c);
  };
  return greedy(prompt, n_tokens, caches, step, {});
}

std::uint64_t decode_transfer_bytes(const ModelConfig& config,
                                    CachePlacement placement,
                                    DecodeCompute compute, std::size_t length) {
  if (placement == CachePlacement::kFast) return 0;
  const auto nl = static_cast<std::uint64_t>(config.n_layers);
  const auto d = static_cast<std::uint64_t>(config.d_model);
  if (compute == DecodeCompute::kOnFast) return nl * 2 * length * d * 4;
  // q, k, v out to the cache side and the attention output back.
  return nl * 4 * d * 4;
}

double decode_step_seconds(const ModelConfig& config, DecodeCompute compute,
                           std::size_t length, const TransferModel& model) {
  const double nl = config.n_layers;
  const double d = config.d_model;
  const double flops = 4.0 * nl * static_cast<double>(length) * d;
  if (compute == DecodeCompute::kOnFast) {
    const double bytes = static_cast<double>(decode_transfer_bytes(
        config, CachePlacement::kOffloaded, compute, length));
    return bytes / model.link_bytes_per_s + flops / model.fast_flops_per_s;
  }
  const double bytes = static_cast<double>(decode_transfer_bytes(
      config, CachePlacement::kOffloaded, compute, length));
  return bytes / model.link_bytes_per_s + flops / model.offloaded_flops_per_s;
}

std::optional<std::size_t> decode_crossover(const ModelConfig& config,
                                            const TransferModel& model) {
  // Both times are affine in length; solve, then settle on the exact integer.
  const double fast_slope = 8.0 / model.link_bytes_per_s + 4.0 / model.fast_flops_per_s;
  const double off_slope = 4.0 / model.offloaded_flops_per_s;
  if (fast_slope <= off_slope) return std::nullopt;
  const double guess = (16.0 / model.link_bytes_per_s) / (fast_slope - off_slope);
  auto len = static_cast<std::size_t>(std::max(1.0, std::floor(guess)));
  auto off_wins = [&](std::size_t l) {
    return decode_step_seconds(config, DecodeCompute::kOnOffloaded, l, model) <
           decode_step_seconds(config, DecodeCompute::kOnFast, l, model);
  };
  while (len > 1 && off_wins(len - 1)) --len;
  while (!off_wins(len)) ++len;
  return len;
}

}  // namespace layerserve
