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

#ifndef LAYERSERVE_EXECUTOR_HPP_
#define LAYERSERVE_EXECUTOR_HPP_

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "layerserve/envelope.hpp"
#include "layerserve/ledger.hpp"
#include "layerserve/model.hpp"
#include "layerserve/wire.hpp"

namespace layerserve {

using Nanos = std::chrono::nanoseconds;

enum class BatchMode { kNoLockstep, kLockstep, kOpportunistic };

std::string mode_name(BatchMode mode);
BatchMode parse_mode(const std::string& name);

struct BatchPolicy {
  BatchMode mode = BatchMode::kOpportunistic;
  Nanos wait_per_token = std::chrono::microseconds(100);
  Nanos wait_cap = std::chrono::milliseconds(50);
  std::size_t max_batch_tokens = 1u << 16;

  /// min(wait_cap, wait_per_token * tokens)
  Nanos wait_budget(std::size_t tokens) const;
};

/// Outcome delivered to a request's completion callback.
struct Status {
  bool ok = true;
  wire::ErrorCode code = wire::ErrorCode::kBadRequest;
  std::string message;

  static Status Ok() { return {}; }
  static Status Error(wire::ErrorCode code, std::string message) {
    return {false, code, std::move(message)};
  }
};

using Completion = std::function<void(const Status&)>;

/// A request waiting at the executor. `input` and `output` are views into
/// memory owned by the channel (the shared buffer for local clients, the
/// decoded frame for remote ones) and stay valid until `done` runs.
struct PendingRequest {
  std::uint32_t client_id = 0;
  std::uint64_t request_id = 0;
  LayerAddress layer;
  Pass pass = Pass::kForward;
  std::uint32_t token_count = 0;
  std::uint32_t width = 0;
  std::span<const float> input;
  std::span<float> output;
  Completion done;
  Nanos arrival{0};
  bool save_for_backward = false;
};

struct QueueKey {
  LayerAddress layer;
  Pass pass = Pass::kForward;

  auto operator<=>(const QueueKey&) const = default;
};

struct Batch {
  QueueKey key;
  std::vector<PendingRequest> members;
  Nanos formed_at{0};
  /// Lockstep dispatch forced because every client was blocked elsewhere.
  bool forced = false;

  std::size_t tokens() const;
};

/// Per-(layer, pass) FIFO queues plus the set of registered clients.
/// Not synchronized; the owner serializes access.
class LayerQueues {
 public:
  void register_client(std::uint32_t id, JobKind kind);
  void deregister_client(std::uint32_t id);
  bool registered(std::uint32_t id) const { return clients_.contains(id); }
  JobKind kind_of(std::uint32_t id) const;
  std::set<std::uint32_t> active_clients() const;

  /// Unregistered senders are registered as inference clients.
  void push(PendingRequest request);
  bool empty() const;
  std::size_t size() const;
  /// Clients with at least one request queued anywhere.
  std::set<std::uint32_t> waiting_clients() const;

  std::map<QueueKey, std::deque<PendingRequest>>& queues() { return queues_; }
  const std::map<QueueKey, std::deque<PendingRequest>>& queues() const {
    return queues_;
  }
  std::vector<PendingRequest> drain();

 private:
  std::map<QueueKey, std::deque<PendingRequest>> queues_;
  std::map<std::uint32_t, JobKind> clients_;
};

struct ScheduleDecision {
  std::optional<Batch> batch;
  /// Earliest time a waiting queue becomes ready, when nothing is ready now.
  std::optional<Nanos> wake_at;
};

/// Picks the next batch to execute at time `now`, removing its members from
/// `queues`.
///   NoLockstep:    the oldest request alone.
///   Lockstep:      a queue once every registered client has a request in it.
///   Opportunistic: a queue whose wait budget (from its oldest arrival and
///                  smallest member) has expired, that holds max_batch_tokens,
///                  or any queue once every registered client is waiting.
/// NoiseEffect requests are always dispatched alone and immediately.
ScheduleDecision schedule(const BatchPolicy& policy, LayerQueues& queues,
                          Nanos now);

/// Per-layer dispatch counters and histograms.
class ExecutorMetrics {
 public:
  struct LayerStats {
    std::uint64_t dispatches = 0;
    std::uint64_t requests = 0;
    std::uint64_t tokens = 0;
    std::map<std::size_t, std::uint64_t> batch_size_histogram;
  };

  void record(const Batch& batch, Nanos now);

  const std::map<QueueKey, LayerStats>& layers() const { return layers_; }
  /// Keyed by the upper bound of a power-of-two microsecond bucket.
  const std::map<std::uint64_t, std::uint64_t>& wait_histogram() const {
    return wait_hist_;
  }
  std::uint64_t dispatches() const;
  std::uint64_t forced_dispatches() const { return forced_; }
  /// Mean requests per dispatched batch over Forward/Backward traffic.
  double mean_batch_size() const;
  Nanos max_wait() const { return max_wait_; }

  void write_csv(std::ostream& os) const;

 private:
  std::map<QueueKey, LayerStats> layers_;
  std::map<std::uint64_t, std::uint64_t> wait_hist_;
  std::uint64_t forced_ = 0;
  Nanos max_wait_{0};
};

/// Holds the frozen affine layers and executes batches. Keeps no per-request
/// tensors unless memory-optimized backward is disabled (a test-only mode that
/// retains forward inputs/outputs of fine-tuning clients until their backward).
class LayerHost {
 public:
  explicit LayerHost(std::shared_ptr<const BaseModel> model,
                     bool memory_optimized_backward = true);

  const ModelConfig& config() const { return model_->config; }
  bool hosts(const LayerAddress& layer) const;
  const AffineParams& params(const LayerAddress& layer) const;

  /// Shape check for one request against its layer.
  Status validate(const PendingRequest& request) const;

  /// Rejects malformed members individually, then runs one affine call over
  /// the concatenated rows and scatters the result back.
  void execute(Batch& batch);

  MemoryLedger& ledger() { return ledger_; }
  std::uint64_t base_checksum() const { return model_->base_checksum(); }
  bool memory_optimized_backward() const { return memory_optimized_; }

 private:
  std::shared_ptr<const BaseModel> model_;
  bool memory_optimized_;
  MemoryLedger ledger_;
  std::mutex saved_mu_;
  std::map<std::pair<std::uint32_t, LayerAddress>, std::vector<std::uint64_t>>
      saved_;
};

/// Thread-safe front end: accepts requests from any thread, forms batches on
/// one scheduler thread against the steady clock.
class ExecutorService {
 public:
  ExecutorService(std::shared_ptr<LayerHost> host, BatchPolicy policy);
  ~ExecutorService();
  ExecutorService(const ExecutorService&) = delete;
  ExecutorService& operator=(const ExecutorService&) = delete;

  void start();
  /// Fails every queued request with kShutdown and joins the scheduler.
  void stop();

  void register_client(std::uint32_t id, JobKind kind);
  void deregister_client(std::uint32_t id);

  /// Invalid requests complete immediately with an error.
  void submit(PendingRequest request);

  LayerHost& host() { return *host_; }
  const BatchPolicy& policy() const { return policy_; }
  ExecutorMetrics metrics() const;

 private:
  void loop();
  Nanos now() const;

  std::shared_ptr<LayerHost> host_;
  BatchPolicy policy_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  LayerQueues queues_;
  ExecutorMetrics metrics_;
  bool running_ = false;
  bool stopping_ = false;
  std::thread thread_;
  std::chrono::steady_clock::time_point epoch_;
};

}  // namespace layerserve

#endif  // LAYERSERVE_EXECUTOR_HPP_
