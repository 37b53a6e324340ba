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

#ifndef LAYERSERVE_CLIENT_HPP_
#define LAYERSERVE_CLIENT_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "layerserve/adapter.hpp"
#include "layerserve/attention.hpp"
#include "layerserve/channel.hpp"
#include "layerserve/ledger.hpp"
#include "layerserve/model.hpp"
#include "layerserve/privacy.hpp"

namespace layerserve {

/// Job used out of order: backward before forward, backward on an inference
/// job, and similar contract violations.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Client-side stand-in for a frozen layer. Holds no weights; forward and
/// backward are answered by the executor with the replaced layer's shapes.
class VirtLayer {
 public:
  VirtLayer(LayerAddress address, std::uint32_t client_id, std::size_t d_in,
            std::size_t d_out, Channel* channel);

  const LayerAddress& address() const { return address_; }
  std::uint32_t client_id() const { return client_id_; }
  std::size_t d_in() const { return d_in_; }
  std::size_t d_out() const { return d_out_; }

  void set_privacy(const NoiseSet* noise) { noise_ = noise; }
  bool privacy() const { return noise_ != nullptr; }

  Tensor forward(const Tensor& x, std::uint64_t iteration) const;
  Tensor backward(const Tensor& grad_y) const;

 private:
  LayerAddress address_;
  std::uint32_t client_id_;
  std::size_t d_in_;
  std::size_t d_out_;
  Channel* channel_;
  const NoiseSet* noise_ = nullptr;
};

/// Client half of the model: embedding, norms, any layers kept local, and a
/// VirtLayer for every base layer.
class ClientModel {
 public:
  ModelConfig config;
  Tensor embedding;
  std::vector<Tensor> attn_norm;
  std::vector<Tensor> ffn_norm;
  Tensor final_norm;
  std::map<LayerAddress, AffineParams> local_layers;
  std::map<LayerAddress, VirtLayer> virt_layers;

  Tensor layer_forward(const LayerAddress& address, const Tensor& x,
                       std::uint64_t iteration) const;
  Tensor layer_backward(const LayerAddress& address, const Tensor& grad_y) const;

  /// Embedding, norms and local affine layers.
  std::size_t weight_bytes() const;
  void set_privacy(const NoiseSet* noise);
};

std::set<LayerAddress> all_base_layers(const ModelConfig& config);

/// Replaces every address in `base_layers` with a VirtLayer bound to
/// `channel`; everything else is copied from `model_def`. Frozen weights of
/// virtualized layers are not retained.
ClientModel virtualize(const BaseModel& model_def,
                       const std::set<LayerAddress>& base_layers,
                       Channel* channel, std::uint32_t client_id);

struct JobConfig {
  std::string name = "job";
  JobKind kind = JobKind::kFinetune;
  AdapterConfig adapter;
  OptimizerConfig optimizer;
  std::size_t batch = 2;
  std::size_t seq = 16;
  int steps = 10;
  std::size_t prompt_len = 8;
  std::size_t gen_tokens = 8;
  CachePlacement placement = CachePlacement::kFast;
  DecodeCompute decode_compute = DecodeCompute::kOnFast;
  PrivacyConfig privacy;
  std::string channel = "local";
  std::uint64_t data_seed = 1;
  std::size_t dataset_size = 32;

  /// Largest token count of a single layer request this job sends.
  std::size_t max_request_tokens() const;
};

/// One iteration (train step or decode step) as seen by the client.
struct StepRecord {
  int iteration = 0;
  double latency_ms = 0.0;
  std::size_t tokens = 0;
  double tokens_per_s = 0.0;
  float loss = 0.0f;
  std::uint64_t transfer_bytes = 0;
};

/// A single logical execution stream: an inference client (prefill/decode)
/// or a fine-tuning client (forward/backward/update).
class ClientJob {
 public:
  ClientJob(JobConfig config, ClientModel model, Channel& channel,
            std::uint32_t client_id);
  ~ClientJob();

  /// Registers with the executor and precomputes noise if privacy is on.
  void start();
  void finish();

  /// Logits [batch*seq, vocab]. Fine-tuning jobs keep what backward needs;
  /// with `caches` the call is an incremental (prefill/decode) forward.
  Tensor forward(const TokenBatch& tokens, std::vector<KVCache>* caches = nullptr);
  /// Adapter gradients of the last forward.
  AdapterGrads backward(const Tensor& grad_logits);
  float train_step(const TokenBatch& tokens,
                   std::span<const std::int32_t> targets);
  /// Greedy decoding. Returns [batch, prompt + n_tokens] ids, row-major.
  std::vector<std::int32_t> generate(const TokenBatch& prompt,
                                     std::size_t n_tokens);

  const JobConfig& config() const { return config_; }
  std::uint32_t client_id() const { return client_id_; }
  AdapterState& adapter() { return adapter_; }
  const AdapterState& adapter() const { return adapter_; }
  const ClientModel& model() const { return model_; }
  MemoryLedger& ledger() { return ledger_; }
  Channel& channel() { return channel_; }
  const NoiseSet* noise() const { return noise_ ? &*noise_ : nullptr; }
  const std::vector<StepRecord>& records() const { return records_; }
  const std::vector<KVCache>& caches() const { return caches_; }
  /// Logits of every forward, in call order (kept when `keep_outputs`).
  const std::vector<Tensor>& outputs() const { return outputs_; }
  void keep_outputs(bool keep) { keep_outputs_ = keep; }

 private:
  struct Saved;

  Tensor apply_layer(const LayerAddress& address, const Tensor& x,
                     Saved* saved);
  Tensor backward_layer(const LayerAddress& address, const Tensor& grad_y,
                        const Saved& saved, AdapterGrads& grads,
                        bool need_input_grad);
  void sync_ledger();

  JobConfig config_;
  ClientModel model_;
  Channel& channel_;
  std::uint32_t client_id_;
  AdapterState adapter_;
  Optimizer optimizer_;
  MemoryLedger ledger_;
  std::optional<NoiseSet> noise_;
  std::unique_ptr<Saved> saved_;
  std::uint64_t iteration_ = 0;
  std::vector<StepRecord> records_;
  std::vector<KVCache> caches_;
  std::vector<Tensor> outputs_;
  bool keep_outputs_ = false;
  bool started_ = false;
};

/// Training data: token rows and next-token targets.
struct Dataset {
  TokenBatch tokens;
  std::vector<std::int32_t> targets;

  /// Rows [first, first+count) of the dataset.
  Dataset slice(std::size_t first, std::size_t count) const;
};

/// Copy task: every target equals the input token at the same position.
Dataset copy_task(int vocab, std::size_t seq, std::size_t samples,
                  std::uint64_t seed);

/// The rows a job trains on at `step`: its copy-task dataset, taken
/// `batch` rows at a time and wrapping around.
Dataset training_batch(const JobConfig& job, int vocab, int step);

/// Prompt for a job's `round`-th generate() call.
TokenBatch job_prompt(const JobConfig& job, int vocab, std::size_t round);

/// Random prompts of the given shape.
TokenBatch random_prompts(int vocab, std::size_t batch, std::size_t len,
                          std::uint64_t seed);

/// Greedy decoding through the monolithic reference model.
std::vector<std::int32_t> reference_generate(const BaseModel& model,
                                             const AdapterState* adapter,
                                             const TokenBatch& prompt,
                                             std::size_t n_tokens);

/// Per-step transfer bytes across the fast/offloaded boundary for one
/// sequence whose cache holds `length` positions after the step's append.
std::uint64_t decode_transfer_bytes(const ModelConfig& config,
                                    CachePlacement placement,
                                    DecodeCompute compute, std::size_t length);

/// Throughput model for the long-context placement trade-off.
struct TransferModel {
  double link_bytes_per_s = 16e9;       // fast <-> offloaded link
  double fast_flops_per_s = 100e12;     // attention on the accelerator
  double offloaded_flops_per_s = 1e12;  // attention on the host
};

/// Modeled per-step decode time at context `length` for each compute site.
double decode_step_seconds(const ModelConfig& config, DecodeCompute compute,
                           std::size_t length, const TransferModel& model);

/// Smallest context length at which computing on the offloaded side is
/// faster than fetching the cache, or nullopt when it never is.
std::optional<std::size_t> decode_crossover(const ModelConfig& config,
                                            const TransferModel& model);

}  // namespace layerserve

#endif  // LAYERSERVE_CLIENT_HPP_
