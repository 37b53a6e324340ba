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

#ifndef LAYERSERVE_POLICY_SIM_HPP_
#define LAYERSERVE_POLICY_SIM_HPP_

#include <memory>
#include <string>
#include <vector>

#include "layerserve/client.hpp"
#include "layerserve/executor.hpp"
#include "layerserve/scenario.hpp"

namespace layerserve {

/// A client in the simulated deployment. Client-side work between two layer
/// requests is modeled as `think_base + think_per_token * tokens`.
struct SimClient {
  JobSpec job;
  Nanos think_base{std::chrono::microseconds(200)};
  Nanos think_per_token{std::chrono::microseconds(1)};
};

/// Modeled executor cost of one batch.
struct SimCost {
  Nanos overhead{std::chrono::milliseconds(1)};
  Nanos per_token{std::chrono::microseconds(2)};
};

struct SimClientResult {
  std::string name;
  /// Time between consecutive output-layer replies, starting from 0.
  std::vector<Nanos> iteration_latency;
  std::size_t tokens = 0;
  Nanos finish{0};
  std::vector<Tensor> outputs;  // logits of every forward
  std::vector<std::int32_t> generated;
  std::vector<float> losses;
  std::string error;

  double mean_latency_ms() const;
};

struct SimResult {
  BatchMode mode = BatchMode::kOpportunistic;
  std::vector<SimClientResult> clients;
  ExecutorMetrics metrics;
  Nanos makespan{0};

  double mean_batch_size() const { return metrics.mean_batch_size(); }
  /// Output-layer tokens per simulated second.
  double throughput() const;
  bool ok() const;
};

/// Runs every client's real job (real tensors, real `schedule()` and
/// LayerHost) against a virtual clock. Client threads execute their own
/// client-side code; simulated time only advances once every client is
/// blocked on the executor or finished, so results are deterministic.
SimResult simulate(std::shared_ptr<const BaseModel> model,
                   const BatchPolicy& policy,
                   const std::vector<SimClient>& clients,
                   const SimCost& cost = {});

/// Eight inference clients that differ in batch, prompt length and
/// client-side speed, all issuing the same number of forwards.
std::vector<SimClient> heterogeneous_clients(const ModelConfig& config,
                                             std::uint64_t seed);

}  // namespace layerserve

#endif  // LAYERSERVE_POLICY_SIM_HPP_
