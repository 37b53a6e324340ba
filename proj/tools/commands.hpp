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

#ifndef LAYERSERVE_TOOLS_COMMANDS_HPP_
#define LAYERSERVE_TOOLS_COMMANDS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "layerserve/harness.hpp"

namespace layerserve::tools {

inline constexpr int kExitPass = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfigError = 2;

struct Options {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<bool> multi_process;
  bool quiet = false;
  TransferModel transfer;
};

RunOptions run_options(const Options& o);

int cmd_run(const std::string& path, const Options& o);
int cmd_verify(const std::string& path, const Options& o);
int cmd_ledger(const std::string& path, const Options& o);
int cmd_bench(const std::string& name, const Options& o);
int cmd_checkpoint(const std::string& path, const std::string& out, const Options& o);

/// Every oracle check for a scenario: the run's own checks, solo replays,
/// ledger closed forms and finite-difference gradients.
std::vector<Check> verify_checks(const Scenario& scenario, const RunOptions& options);

/// Worst norm-wise relative error between the split path's adapter
/// gradients over `channel` and central differences of the monolithic loss.
double gradient_rel_error(const BaseModel& model, Channel& channel,
                          const AdapterConfig& adapter, std::uint64_t seed);

/// The 1-block, d_model=32 model used for gradient checks.
ModelConfig gradient_check_config(std::uint64_t seed);

std::vector<std::string> bench_names();

}  // namespace layerserve::tools

#endif  // LAYERSERVE_TOOLS_COMMANDS_HPP_
