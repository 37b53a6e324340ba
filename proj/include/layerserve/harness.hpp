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

#ifndef LAYERSERVE_HARNESS_HPP_
#define LAYERSERVE_HARNESS_HPP_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "layerserve/checkpoint.hpp"
#include "layerserve/client.hpp"
#include "layerserve/ledger.hpp"
#include "layerserve/scenario.hpp"

namespace layerserve {

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

void print_checks(std::ostream& os, const std::vector<Check>& checks);
bool all_pass(const std::vector<Check>& checks);

struct JobOutcome {
  std::string name;
  JobKind kind = JobKind::kFinetune;
  bool ok = false;
  bool killed = false;  // terminated on purpose by kill_after
  std::string error;
  std::vector<StepRecord> records;
  std::vector<float> losses;
  std::vector<std::int32_t> generated;
  /// Bit-level checksum of every forward's logits, in order.
  std::vector<std::uint64_t> output_checksums;
  std::vector<Check> checks;
  LedgerSnapshot ledger;
  std::uint64_t payload_copies = 0;
  std::uint64_t requests = 0;
  std::uint64_t adapter_checksum = 0;
  double seconds = 0.0;
};

struct ExecutorSummary {
  double mean_batch_size = 0.0;
  std::uint64_t dispatches = 0;
  std::uint64_t forced = 0;
  double max_wait_ms = 0.0;
  LedgerSnapshot ledger;
  std::uint64_t checksum_before = 0;
  std::uint64_t checksum_after = 0;
  std::string metrics_csv;
};

struct RunReport {
  std::string scenario;
  bool multi_process = false;
  std::vector<JobOutcome> jobs;
  ExecutorSummary executor;
  std::vector<Check> checks;
  double seconds = 0.0;

  const JobOutcome* find(const std::string& name) const;
  /// Every job succeeded (or was killed on purpose) and every check passed.
  bool ok() const;
  /// Job-level and report-level checks together.
  std::vector<Check> all_checks() const;
};

struct RunOptions {
  std::optional<std::string> output_dir;
  std::optional<bool> multi_process;
  std::optional<std::uint64_t> seed;
  std::optional<bool> oracle;
  std::string self_exe;  // binary to spawn in multi-process mode
  bool write_files = true;
  std::ostream* log = nullptr;
};

/// Applies command-line overrides to a parsed scenario.
Scenario resolve(Scenario scenario, const RunOptions& options);

/// The frozen model as the executor sees it (checkpoint base half, or built
/// from the seed).
std::shared_ptr<const BaseModel> executor_model(const Scenario& scenario);
/// The client half used to build client models.
BaseModel client_model_def(const Scenario& scenario);
/// Ground truth for oracle checks: always rebuilt from the config seed, so a
/// damaged checkpoint shows up as a mismatch.
BaseModel oracle_model(const Scenario& scenario);

/// Runs one job to completion over `channel`. With `oracle` set, compares
/// every forward against the monolithic model.
JobOutcome execute_job(const JobSpec& spec,
                       const BaseModel& client_def, Channel& channel,
                       std::uint32_t client_id, const BaseModel* oracle,
                       int kill_after = -1);

/// Executes the scenario, in-process or across processes.
RunReport run_scenario(const Scenario& scenario, const RunOptions& options);

/// Re-runs each job alone (in-process, NoLockstep) and compares per-forward
/// checksums with `report`.
Check solo_equivalence(const Scenario& scenario, const RunReport& report);

/// Checks on executor and client ledgers that follow from closed forms.
std::vector<Check> ledger_checks(const Scenario& scenario, const RunReport& report);

void write_report(const RunReport& report, const std::string& dir);

/// Process entry points for multi-process mode.
int serve_main(const Scenario& scenario, const std::string& port_file,
               const std::string& out_dir);
int job_main(const Scenario& scenario, const std::string& job_name,
             const Endpoint& endpoint, std::uint32_t client_id,
             const std::string& out_dir);

std::string job_result_path(const std::string& dir, const std::string& job);

}  // namespace layerserve

#endif  // LAYERSERVE_HARNESS_HPP_
