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

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "commands.hpp"
#include "layerserve/policy_sim.hpp"

namespace layerserve::tools {
namespace {

ModelConfig bench_model(std::uint64_t seed) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 64;
  c.n_heads = 4;
  c.d_ff = 128;
  c.vocab_size = 128;
  c.max_seq = 64;
  c.seed = seed;
  return c;
}

JobSpec finetune_job(const std::string& name, int steps) {
  JobSpec j;
  j.config.name = name;
  j.config.kind = JobKind::kFinetune;
  j.config.adapter.method = AdapterMethod::kLoRA;
  j.config.adapter.targets = {Role::kQ, Role::kV, Role::kLmHead};
  j.config.batch = 4;
  j.config.seq = 16;
  j.config.steps = steps;
  return j;
}

JobSpec inference_job(const std::string& name) {
  JobSpec j;
  j.config.name = name;
  j.config.kind = JobKind::kInference;
  j.config.batch = 1;
  j.config.steps = 0;
  j.config.prompt_len = 8;
  j.config.gen_tokens = 8;
  j.rounds = 2;
  return j;
}

Scenario bench_scenario(const std::string& name, std::vector<JobSpec> jobs,
                        const Options& o) {
  Scenario sc;
  sc.name = name;
  sc.seed = o.seed.value_or(1);
  sc.model = bench_model(sc.seed);
  sc.jobs = std::move(jobs);
  sc.oracle = false;
  sc.reseed(sc.seed);
  return sc;
}

RunReport run_bench(const Scenario& sc, const Options& o) {
  RunOptions ro;
  ro.oracle = false;
  ro.write_files = false;
  ro.multi_process = false;
  (void)o;
  return run_scenario(sc, ro);
}

struct JobStats {
  double tokens_per_s = 0.0;
  double mean_latency_ms = 0.0;
  std::size_t tokens = 0;
  double seconds = 0.0;
};

JobStats stats(const JobOutcome& j) {
  JobStats s;
  for (const auto& r : j.records) {
    s.tokens += r.tokens;
    s.seconds += r.latency_ms / 1e3;
  }
  if (!j.records.empty()) s.mean_latency_ms = s.seconds * 1e3 / j.records.size();
  if (s.seconds > 0) s.tokens_per_s = s.tokens / s.seconds;
  return s;
}

/// Rows go to stdout and, with --output, to <dir>/bench_<name>.csv.
class Table {
 public:
  Table(std::string name, const Options& o, std::string header) : name_(std::move(name)) {
    if (o.output) {
      std::filesystem::create_directories(*o.output);
      file_.open(std::filesystem::path(*o.output) / ("bench_" + name_ + ".csv"));
    }
    row(header);
  }
  void row(const std::string& line) {
    std::cout << line << '\n';
    if (file_) file_ << line << '\n';
  }

 private:
  std::string name_;
  std::ofstream file_;
};

template <class... T>
std::string csv(const T&... v) {
  std::ostringstream os;
  os << std::setprecision(6);
  bool first = true;
  ((os << (first ? "" : ",") << v, first = false), ...);
  return os.str();
}

int fail_if(bool bad, const RunReport& r) {
  if (!bad) return kExitPass;
  for (const auto& j : r.jobs) {
    if (!j.ok) std::cerr << "job " << j.name << " failed: " << j.error << '\n';
  }
  return kExitCheckFailed;
}

int bench_single(const Options& o) {
  Table t("single-ft", o, "job,steps,tokens,tokens_per_s,mean_step_ms");
  const RunReport r = run_bench(bench_scenario("single-ft", {finetune_job("ft", 20)}, o), o);
  for (const auto& j : r.jobs) {
    const JobStats s = stats(j);
    t.row(csv(j.name, j.records.size(), s.tokens, s.tokens_per_s, s.mean_latency_ms));
  }
  return fail_if(!r.ok(), r);
}

int bench_multi(const Options& o) {
  Table t("multi-ft", o, "clients,aggregate_tokens_per_s,mean_step_ms,mean_batch_size,wall_s");
  bool ok = true;
  for (int n : {1, 2, 4, 8}) {
    std::vector<JobSpec> jobs;
    for (int i = 0; i < n; ++i) jobs.push_back(finetune_job("ft" + std::to_string(i), 10));
    const RunReport r = run_bench(bench_scenario("multi-ft", jobs, o), o);
    ok = ok && r.ok();
    std::size_t tokens = 0;
    double lat = 0.0;
    for (const auto& j : r.jobs) {
      const JobStats s = stats(j);
      tokens += s.tokens;
      lat += s.mean_latency_ms;
    }
    t.row(csv(n, r.seconds > 0 ? tokens / r.seconds : 0.0, lat / n,
              r.executor.mean_batch_size, r.seconds));
  }
  return ok ? kExitPass : kExitCheckFailed;
}

int bench_remote(const Options& o) {
  Table t("remote-ft", o, "channel,tokens_per_s,mean_step_ms,payload_copies,requests");
  bool ok = true;
  for (const char* ch : {"local", "remote"}) {
    JobSpec j = finetune_job("ft", 10);
    j.config.channel = ch;
    const RunReport r = run_bench(bench_scenario("remote-ft", {j}, o), o);
    ok = ok && r.ok();
    const JobStats s = stats(r.jobs.front());
    t.row(csv(ch, s.tokens_per_s, s.mean_latency_ms, r.jobs.front().payload_copies,
              r.jobs.front().requests));
  }
  return ok ? kExitPass : kExitCheckFailed;
}

int bench_mixed(const Options& o) {
  Table t("mixed", o, "job,kind,iterations,tokens_per_s,mean_latency_ms");
  std::vector<JobSpec> jobs;
  for (int i = 0; i < 6; ++i) jobs.push_back(inference_job("inf" + std::to_string(i)));
  for (int i = 0; i < 2; ++i) jobs.push_back(finetune_job("ft" + std::to_string(i), 10));
  const RunReport r = run_bench(bench_scenario("mixed", jobs, o), o);
  for (const auto& j : r.jobs) {
    const JobStats s = stats(j);
    t.row(csv(j.name, job_kind_name(j.kind), j.records.size(), s.tokens_per_s,
              s.mean_latency_ms));
  }
  t.row(csv("executor", "mean_batch", r.executor.dispatches, r.executor.mean_batch_size, ""));
  return fail_if(!r.ok(), r);
}

int bench_policy(const Options& o) {
  Table t("policy-sweep", o,
          "scenario,policy,mean_batch_size,throughput_tok_s,mean_latency_ms,"
          "small_client_latency_ms");
  const std::uint64_t seed = o.seed.value_or(1);
  ModelConfig cfg = bench_model(seed);
  cfg.d_model = 32;
  cfg.d_ff = 64;
  cfg.vocab_size = 64;
  cfg.max_seq = 32;
  auto model = std::make_shared<const BaseModel>(build_model(cfg));
  bool ok = true;
  auto sweep = [&](const std::string& label, const std::vector<SimClient>& clients) {
    for (BatchMode m : {BatchMode::kNoLockstep, BatchMode::kLockstep, BatchMode::kOpportunistic}) {
      BatchPolicy p;
      p.mode = m;
      const SimResult r = simulate(model, p, clients);
      ok = ok && r.ok();
      double lat = 0.0;
      for (const auto& c : r.clients) lat += c.mean_latency_ms();
      t.row(csv(label, mode_name(m), r.mean_batch_size(), r.throughput(),
                lat / r.clients.size(), r.clients.front().mean_latency_ms()));
    }
  };
  sweep("heterogeneous", heterogeneous_clients(cfg, seed));
  // A latency-sensitive inference client next to a heavy fine-tune client.
  std::vector<SimClient> pair(2);
  pair[0].job = inference_job("interactive");
  pair[0].job.config.gen_tokens = 6;
  pair[0].job.rounds = 1;
  pair[1].job = finetune_job("bulk", 4);
  pair[1].job.config.batch = 8;
  pair[1].think_base = std::chrono::microseconds(2000);
  for (std::size_t i = 0; i < pair.size(); ++i) {
    pair[i].job.config.data_seed = seed + i;
    pair[i].job.config.adapter.seed = seed + 10 + i;
  }
  sweep("priority", pair);
  return ok ? kExitPass : kExitCheckFailed;
}

int bench_long_context(const Options& o) {
  Table t("long-context", o,
          "length,bytes_fast,bytes_offloaded_compute_fast,bytes_offloaded_compute_offloaded,"
          "step_s_compute_fast,step_s_compute_offloaded");
  ModelConfig cfg;
  cfg.n_layers = 32;
  cfg.d_model = 4096;
  cfg.n_heads = 32;
  cfg.d_ff = 11008;
  cfg.vocab_size = 32000;
  cfg.max_seq = 1 << 20;
  for (std::size_t len = 256; len <= (1u << 18); len *= 4) {
    t.row(csv(len, decode_transfer_bytes(cfg, CachePlacement::kFast, DecodeCompute::kOnFast, len),
              decode_transfer_bytes(cfg, CachePlacement::kOffloaded, DecodeCompute::kOnFast, len),
              decode_transfer_bytes(cfg, CachePlacement::kOffloaded, DecodeCompute::kOnOffloaded,
                                    len),
              decode_step_seconds(cfg, DecodeCompute::kOnFast, len, o.transfer),
              decode_step_seconds(cfg, DecodeCompute::kOnOffloaded, len, o.transfer)));
  }
  const auto cross = decode_crossover(cfg, o.transfer);
  t.row(cross ? csv("crossover", *cross) : csv("crossover", "none"));
  return kExitPass;
}

int bench_privacy(const Options& o) {
  Table t("privacy", o, "privacy,k,tokens_per_s,mean_step_ms,client_weights_bytes");
  bool ok = true;
  for (int k : {0, 2, 4}) {
    JobSpec j = finetune_job("ft", 10);
    j.config.privacy.enabled = k > 0;
    j.config.privacy.k = std::max(k, 1);
    const RunReport r = run_bench(bench_scenario("privacy", {j}, o), o);
    ok = ok && r.ok();
    const JobStats s = stats(r.jobs.front());
    t.row(csv(k > 0 ? "on" : "off", k, s.tokens_per_s, s.mean_latency_ms,
              r.jobs.front().ledger.peak_bytes(Category::kWeights)));
  }
  return ok ? kExitPass : kExitCheckFailed;
}

}  // namespace

std::vector<std::string> bench_names() {
  return {"single-ft", "multi-ft", "remote-ft", "mixed", "policy-sweep", "long-context",
          "privacy"};
}

int cmd_bench(const std::string& name, const Options& o) {
  if (name == "single-ft") return bench_single(o);
  if (name == "multi-ft") return bench_multi(o);
  if (name == "remote-ft") return bench_remote(o);
  if (name == "mixed") return bench_mixed(o);
  if (name == "policy-sweep") return bench_policy(o);
  if (name == "long-context") return bench_long_context(o);
  if (name == "privacy") return bench_privacy(o);
  throw ConfigError("unknown benchmark '" + name + "'");
}

}  // namespace layerserve::tools
