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

#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>

#include "layerserve/ops.hpp"
#include "layerserve/rng.hpp"
#include "oracle/oracle.hpp"

namespace layerserve::tools {
namespace fs = std::filesystem;

RunOptions run_options(const Options& o) {
  RunOptions r;
  r.seed = o.seed;
  r.output_dir = o.output;
  r.multi_process = o.multi_process;
  if (!o.quiet) r.log = &std::cout;
  return r;
}

ModelConfig gradient_check_config(std::uint64_t seed) {
  ModelConfig c;
  c.n_layers = 1;
  c.d_model = 32;
  c.n_heads = 2;
  c.d_ff = 64;
  c.vocab_size = 32;
  c.max_seq = 16;
  c.seed = seed;
  return c;
}

double gradient_rel_error(const BaseModel& model, Channel& channel,
                          const AdapterConfig& adapter, std::uint64_t seed) {
  JobConfig jc;
  jc.name = "gradcheck";
  jc.adapter = adapter;
  jc.batch = 2;
  jc.seq = 5;
  ClientJob job(jc, virtualize(model, all_base_layers(model.config), &channel, 900),
                channel, 900);
  job.start();
  // Fresh adapters have B = 0 (LoRA) or l = 1 (IA3); move off that point so
  // every gradient is non-trivial.
  Rng rng(mix64(seed));
  job.adapter().for_each_parameter([&](const std::string&, Tensor& t) {
    for (float& v : t.data()) v += rng.uniform(-0.3f, 0.3f);
  });
  const Dataset d = copy_task(model.config.vocab_size, jc.seq, jc.batch, seed);
  const LossAndGrad lg = cross_entropy(job.forward(d.tokens), d.targets);
  const AdapterGrads grads = job.backward(lg.grad_logits);
  const oracle::Params numeric =
      oracle::loss_gradient(model, job.adapter(), d.tokens, d.targets, 1e-3);
  double worst = 0.0;
  for (const auto& [name, g] : numeric) {
    const Tensor& a = grads.by_name(name);
    const std::vector<double> got(a.data().begin(), a.data().end());
    worst = std::max(worst, oracle::relative_error(got, g));
  }
  job.finish();
  return worst;
}

namespace {

Check gradient_check(const JobConfig& job, std::uint64_t seed) {
  const ModelConfig cfg = gradient_check_config(seed);
  auto model = std::make_shared<const BaseModel>(build_model(cfg));
  auto host = std::make_shared<LayerHost>(model);
  ExecutorService svc(host, BatchPolicy{});
  svc.start();
  double err = 1.0;
  {
    LocalChannel ch(svc, 2, 5, cfg.max_width());
    AdapterConfig a = job.adapter;
    a.rank = std::min(a.rank, 4);
    err = gradient_rel_error(*model, ch, a, seed);
  }
  svc.stop();
  const auto saved = host->ledger().snapshot().peak_bytes(Category::kSavedActivations);
  std::ostringstream detail;
  detail << "rel err " << std::setprecision(3) << err << " (tol 1e-3), executor saved peak "
         << saved;
  return {"finite_difference." + method_name(job.adapter.method), err < 1e-3 && saved == 0,
          detail.str()};
}

}  // namespace

std::vector<Check> verify_checks(const Scenario& sc, const RunOptions& options) {
  RunOptions o = options;
  o.oracle = true;
  const Scenario resolved = resolve(sc, o);
  const RunReport report = run_scenario(resolved, o);
  std::vector<Check> checks = report.all_checks();
  const bool any_work = std::any_of(report.jobs.begin(), report.jobs.end(),
                                    [](const JobOutcome& j) { return !j.records.empty(); });
  if (!any_work) {
    checks.push_back({"scenario.vacuous", true, "no steps configured; nothing to compare"});
    return checks;
  }
  for (const Check& c : ledger_checks(resolved, report)) checks.push_back(c);
  if (resolved.jobs.size() > 1) checks.push_back(solo_equivalence(resolved, report));
  std::set<AdapterMethod> seen;
  for (const auto& j : resolved.jobs) {
    if (j.config.kind != JobKind::kFinetune || j.config.steps == 0) continue;
    if (!seen.insert(j.config.adapter.method).second) continue;
    checks.push_back(gradient_check(j.config, resolved.seed));
  }
  return checks;
}

int cmd_run(const std::string& path, const Options& o) {
  const RunOptions ro = run_options(o);
  const Scenario sc = resolve(load_scenario(path), ro);
  const RunReport r = run_scenario(sc, ro);
  if (!o.quiet) {
    std::cout << "scenario " << sc.name << " ("
              << (sc.multi_process ? "multi-process" : "in-process") << "): "
              << r.jobs.size() << " jobs in " << std::setprecision(3) << r.seconds
              << " s, mean batch " << r.executor.mean_batch_size << ", outputs in "
              << sc.output_dir << '\n';
    for (const auto& j : r.jobs) {
      if (j.killed) std::cout << "job " << j.name << " killed on purpose\n";
      if (!j.ok) std::cout << "job " << j.name << " failed: " << j.error << '\n';
    }
    const auto checks = r.all_checks();
    for (const auto& c : checks) {
      if (!c.pass) std::cout << "FAIL " << c.name << ": " << c.detail << '\n';
    }
  }
  return r.ok() ? kExitPass : kExitCheckFailed;
}

int cmd_verify(const std::string& path, const Options& o) {
  const Scenario sc = load_scenario(path);
  const std::vector<Check> checks = verify_checks(sc, run_options(o));
  print_checks(std::cout, checks);
  const bool ok = all_pass(checks);
  std::cout << (ok ? "verify: all checks passed" : "verify: FAILED") << '\n';
  return ok ? kExitPass : kExitCheckFailed;
}

int cmd_ledger(const std::string& path, const Options& o) {
  RunOptions ro = run_options(o);
  ro.log = nullptr;
  const Scenario sc = resolve(load_scenario(path), ro);
  const RunReport r = run_scenario(sc, ro);
  std::vector<LedgerSnapshot> ledgers{r.executor.ledger};
  for (const auto& j : r.jobs) {
    if (!j.killed) ledgers.push_back(j.ledger);
  }
  write_ledger_csv(std::cout, ledgers);

  const double gb = 1e9;
  const PackingSpec& p = sc.packing;
  for (const auto& j : r.jobs) {
    if (j.kind != JobKind::kFinetune || j.killed || !j.ok) continue;
    const auto per_job = static_cast<double>(j.ledger.peak_total());
    const PackingReport pooled =
        packing_report(p.model_gb * gb, per_job, p.device_gb * gb * p.devices);
    const PackingReport per_dev =
        packing_report_per_device(p.model_gb * gb, per_job, p.device_gb * gb, p.devices);
    std::cout << "packing," << j.name << ",per_job_bytes=" << j.ledger.peak_total()
              << ",replicated_pooled=" << pooled.replicated_jobs
              << ",replicated_per_device=" << per_dev.replicated_jobs
              << ",shared=" << per_dev.shared_jobs << ",ratio=" << per_dev.ratio() << '\n';
  }
  return r.ok() ? kExitPass : kExitCheckFailed;
}

int cmd_checkpoint(const std::string& path, const std::string& out, const Options& o) {
  Scenario sc = load_scenario(path);
  if (o.seed) sc.reseed(*o.seed);
  save_checkpoint(out, build_model(sc.model));
  if (!o.quiet) std::cout << "wrote " << out << '\n';
  return kExitPass;
}

}  // namespace layerserve::tools
