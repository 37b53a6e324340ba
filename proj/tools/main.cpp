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

#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace layerserve;
using namespace layerserve::tools;

int main(int argc, char** argv) {
  CLI::App app{"Split-execution LoRA serving harness"};
  app.require_subcommand(1);

  Options opt;
  std::uint64_t seed = 0;
  std::string output;
  bool in_process = false;
  bool multi_process = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Override the scenario seed");
    sub->add_option("-o,--output", output, "Output directory");
    auto* a = sub->add_flag("--in-process", in_process, "Run every job in this process");
    auto* b = sub->add_flag("--multi-process", multi_process,
                            "Run the executor and each job as separate processes");
    a->excludes(b);
    sub->add_flag("-q,--quiet", opt.quiet, "Less output");
  };

  std::string scenario_path;
  std::string bench_name;
  std::string checkpoint_out;
  std::string port_file;
  std::string job_name;
  std::string endpoint;
  std::uint32_t client_id = 1;

  auto* run = app.add_subcommand("run", "Run a scenario");
  run->add_option("scenario", scenario_path)->required();
  add_common(run);

  auto* verify = app.add_subcommand("verify", "Run a scenario and every oracle check");
  verify->add_option("scenario", scenario_path)->required();
  add_common(verify);

  auto* ledger = app.add_subcommand("ledger", "Run a scenario and print memory ledgers");
  ledger->add_option("scenario", scenario_path)->required();
  add_common(ledger);

  auto* bench = app.add_subcommand("bench", "Run a named benchmark");
  bench->add_option("name", bench_name)->required()->check(CLI::IsMember(bench_names()));
  add_common(bench);
  bench->add_option("--link-bytes-per-s", opt.transfer.link_bytes_per_s);
  bench->add_option("--fast-flops", opt.transfer.fast_flops_per_s);
  bench->add_option("--offloaded-flops", opt.transfer.offloaded_flops_per_s);

  auto* ckpt = app.add_subcommand("checkpoint", "Write the scenario's model as a checkpoint");
  ckpt->add_option("scenario", scenario_path)->required();
  ckpt->add_option("out", checkpoint_out)->required();
  add_common(ckpt);

  // Process entry points used by multi-process runs.
  auto* serve = app.add_subcommand("serve", "Run the executor process");
  serve->add_option("scenario", scenario_path)->required();
  serve->add_option("--port-file", port_file)->required();
  serve->add_option("-o,--output", output);
  serve->group("");

  auto* job = app.add_subcommand("job", "Run one client job process");
  job->add_option("scenario", scenario_path)->required();
  job->add_option("--job", job_name)->required();
  job->add_option("--endpoint", endpoint)->required();
  job->add_option("--client-id", client_id);
  job->add_option("-o,--output", output);
  job->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitPass : kExitConfigError;
  }
  for (auto* sub : {run, verify, ledger, bench, ckpt}) {
    if (*sub && sub->count("--seed")) opt.seed = seed;
  }
  if (!output.empty()) opt.output = output;
  if (in_process) opt.multi_process = false;
  if (multi_process) opt.multi_process = true;

  try {
    if (*run) return cmd_run(scenario_path, opt);
    if (*verify) return cmd_verify(scenario_path, opt);
    if (*ledger) return cmd_ledger(scenario_path, opt);
    if (*bench) return cmd_bench(bench_name, opt);
    if (*ckpt) return cmd_checkpoint(scenario_path, checkpoint_out, opt);
    if (*serve) return serve_main(load_scenario(scenario_path), port_file, output);
    if (*job) {
      return job_main(load_scenario(scenario_path), job_name, parse_endpoint(endpoint),
                      client_id, output);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  return kExitConfigError;
}
