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

#ifndef LAYERSERVE_SCENARIO_HPP_
#define LAYERSERVE_SCENARIO_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "layerserve/channel.hpp"
#include "layerserve/client.hpp"
#include "layerserve/executor.hpp"
#include "layerserve/model.hpp"

namespace layerserve {

/// Malformed or inconsistent scenario. The message carries `file:line:`.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExecutorSpec {
  BatchPolicy policy;
  Endpoint endpoint;  // listen address for remote jobs; port 0 = ephemeral
  bool memory_optimized_backward = true;
};

struct JobSpec {
  JobConfig config;
  std::size_t rounds = 1;  // generate() calls for inference jobs
  int kill_after = -1;     // multi-process only: SIGKILL self after N steps
};

struct PackingSpec {
  double model_gb = 26.0;
  double device_gb = 80.0;
  int devices = 2;
};

struct Scenario {
  std::string name = "scenario";
  std::string source;  // file it was read from, for messages
  ModelConfig model;
  std::string checkpoint;  // optional; empty = build from model.seed
  ExecutorSpec executor;
  std::vector<JobSpec> jobs;
  PackingSpec packing;
  std::string output_dir = "out";
  bool multi_process = false;
  bool oracle = true;
  std::uint64_t seed = 1;

  const JobSpec* find_job(const std::string& name) const;
  /// Re-derives every job's seeds from `seed` (the --seed override).
  void reseed(std::uint64_t seed);
};

/// INI format, documented in docs/scenario-format.md.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(std::istream& is, const std::string& source);
/// Round-trips through parse_scenario.
void write_scenario(std::ostream& os, const Scenario& scenario);

}  // namespace layerserve

#endif  // LAYERSERVE_SCENARIO_HPP_
