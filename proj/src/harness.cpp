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

#include "layerserve/harness.hpp"

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "layerserve/ops.hpp"

extern char** environ;

namespace layerserve {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json to_json(const LedgerSnapshot& s) {
  return {{"owner", s.owner}, {"current", s.current}, {"peak", s.peak},
          {"timestamp", s.timestamp}};
}

LedgerSnapshot ledger_from_json(const json& j) {
  LedgerSnapshot s;
  s.owner = j.at("owner").get<std::string>();
  s.current = j.at("current").get<std::array<std::uint64_t, kCategoryCount>>();
  s.peak = j.at("peak").get<std::array<std::uint64_t, kCategoryCount>>();
  s.timestamp = j.at("timestamp").get<double>();
  return s;
}

json to_json(const std::vector<Check>& checks) {
  json a = json::array();
  for (const auto& c : checks) a.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  return a;
}

std::vector<Check> checks_from_json(const json& a) {
  std::vector<Check> out;
  for (const auto& c : a) {
    out.push_back({c.at("name").get<std::string>(), c.at("pass").get<bool>(),
                   c.at("detail").get<std::string>()});
  }
  return out;
}

json to_json(const JobOutcome& o) {
  json recs = json::array();
  for (const auto& r : o.records) {
    recs.push_back({r.iteration, r.latency_ms, r.tokens, r.tokens_per_s, r.loss,
                    r.transfer_bytes});
  }
  return {{"name", o.name},
          {"kind", job_kind_name(o.kind)},
          {"ok", o.ok},
          {"killed", o.killed},
          {"error", o.error},
          {"records", recs},
          {"losses", o.losses},
          {"generated", o.generated},
          {"output_checksums", o.output_checksums},
          {"checks", to_json(o.checks)},
          {"ledger", to_json(o.ledger)},
          {"payload_copies", o.payload_copies},
          {"requests", o.requests},
          {"adapter_checksum", o.adapter_checksum},
          {"seconds", o.seconds}};
}

JobOutcome outcome_from_json(const json& j) {
  JobOutcome o;
  o.name = j.at("name").get<std::string>();
  o.kind = parse_job_kind(j.at("kind").get<std::string>());
  o.ok = j.at("ok").get<bool>();
  o.killed = j.at("killed").get<bool>();
  o.error = j.at("error").get<std::string>();
  for (const auto& r : j.at("records")) {
    StepRecord s;
    s.iteration = r[0].get<int>();
    s.latency_ms = r[1].get<double>();
    s.tokens = r[2].get<std::size_t>();
    s.tokens_per_s = r[3].get<double>();
    s.loss = r[4].get<float>();
    s.transfer_bytes = r[5].get<std::uint64_t>();
    o.records.push_back(s);
  }
  o.losses = j.at("losses").get<std::vector<float>>();
  o.generated = j.at("generated").get<std::vector<std::int32_t>>();
  o.output_checksums = j.at("output_checksums").get<std::vector<std::uint64_t>>();
  o.checks = checks_from_json(j.at("checks"));
  o.ledger = ledger_from_json(j.at("ledger"));
  o.payload_copies = j.at("payload_copies").get<std::uint64_t>();
  o.requests = j.at("requests").get<std::uint64_t>();
  o.adapter_checksum = j.at("adapter_checksum").get<std::uint64_t>();
  o.seconds = j.at("seconds").get<double>();
  return o;
}

json to_json(const ExecutorSummary& e) {
  return {{"mean_batch_size", e.mean_batch_size}, {"dispatches", e.dispatches},
          {"forced", e.forced},                   {"max_wait_ms", e.max_wait_ms},
          {"ledger", to_json(e.ledger)},          {"checksum_before", e.checksum_before},
          {"checksum_after", e.checksum_after},   {"metrics_csv", e.metrics_csv}};
}

ExecutorSummary executor_from_json(const json& j) {
  ExecutorSummary e;
  e.mean_batch_size = j.at("mean_batch_size").get<double>();
  e.dispatches = j.at("dispatches").get<std::uint64_t>();
  e.forced = j.at("forced").get<std::uint64_t>();
  e.max_wait_ms = j.at("max_wait_ms").get<double>();
  e.ledger = ledger_from_json(j.at("ledger"));
  e.checksum_before = j.at("checksum_before").get<std::uint64_t>();
  e.checksum_after = j.at("checksum_after").get<std::uint64_t>();
  e.metrics_csv = j.at("metrics_csv").get<std::string>();
  return e;
}

void write_json(const std::string& path, const json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp);
    os << j.dump(1) << '\n';
  }
  fs::rename(tmp, path);
}

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing " + path);
  return json::parse(is);
}

ExecutorSummary summarize(ExecutorService& svc, LayerHost& host,
                          std::uint64_t checksum_before) {
  ExecutorSummary e;
  const ExecutorMetrics m = svc.metrics();
  e.mean_batch_size = m.mean_batch_size();
  e.dispatches = m.dispatches();
  e.forced = m.forced_dispatches();
  e.max_wait_ms = static_cast<double>(m.max_wait().count()) / 1e6;
  e.ledger = host.ledger().snapshot();
  e.checksum_before = checksum_before;
  e.checksum_after = host.base_checksum();
  std::ostringstream os;
  m.write_csv(os);
  e.metrics_csv = os.str();
  return e;
}

std::vector<Check> executor_checks(const Scenario& sc, const ExecutorSummary& e) {
  std::vector<Check> out;
  out.push_back({"executor.base_checksum_unchanged",
                 e.checksum_before == e.checksum_after,
                 "before " + std::to_string(e.checksum_before) + ", after " +
                     std::to_string(e.checksum_after)});
  if (sc.executor.memory_optimized_backward) {
    const auto peak = e.ledger.peak_bytes(Category::kSavedActivations);
    out.push_back({"executor.saved_activations_zero", peak == 0,
                   "peak " + std::to_string(peak) + " bytes"});
  }
  return out;
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

pid_t spawn(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  pid_t pid = 0;
  if (const int rc = posix_spawn(&pid, argv[0], nullptr, nullptr, argv.data(), environ);
      rc != 0) {
    throw std::runtime_error("cannot spawn " + args[0] + ": " + std::strerror(rc));
  }
  return pid;
}

int wait_status(pid_t pid) {
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) return -1;
  }
  return status;
}

}  // namespace

void print_checks(std::ostream& os, const std::vector<Check>& checks) {
  std::size_t width = 10;
  for (const auto& c : checks) width = std::max(width, c.name.size());
  for (const auto& c : checks) {
    os << (c.pass ? "PASS  " : "FAIL  ") << std::left
       << std::setw(static_cast<int>(width)) << c.name << "  " << c.detail << '\n';
  }
}

bool all_pass(const std::vector<Check>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const JobOutcome* RunReport::find(const std::string& job) const {
  for (const auto& j : jobs) {
    if (j.name == job) return &j;
  }
  return nullptr;
}

std::vector<Check> RunReport::all_checks() const {
  std::vector<Check> out;
  for (const auto& j : jobs) {
    if (!j.killed) {
      out.push_back({"job." + j.name + ".completed", j.ok, j.ok ? "" : j.error});
    }
    out.insert(out.end(), j.checks.begin(), j.checks.end());
  }
  out.insert(out.end(), checks.begin(), checks.end());
  return out;
}

bool RunReport::ok() const { return all_pass(all_checks()); }

Scenario resolve(Scenario sc, const RunOptions& o) {
  if (o.seed) sc.reseed(*o.seed);
  if (o.output_dir) sc.output_dir = *o.output_dir;
  if (o.multi_process) sc.multi_process = *o.multi_process;
  if (o.oracle) sc.oracle = *o.oracle;
  return sc;
}

std::shared_ptr<const BaseModel> executor_model(const Scenario& sc) {
  if (sc.checkpoint.empty()) return std::make_shared<const BaseModel>(build_model(sc.model));
  auto m = std::make_shared<BaseModel>(load_checkpoint(sc.checkpoint, CheckpointHalf::kBase));
  return m;
}

BaseModel client_model_def(const Scenario& sc) {
  if (sc.checkpoint.empty()) return build_model(sc.model);
  return load_checkpoint(sc.checkpoint, CheckpointHalf::kClient);
}

BaseModel oracle_model(const Scenario& sc) { return build_model(sc.model); }

JobOutcome execute_job(const JobSpec& spec,
                       const BaseModel& client_def, Channel& channel,
                       std::uint32_t client_id, const BaseModel* oracle,
                       int kill_after) {
  const JobConfig& jc = spec.config;
  const ModelConfig& cfg = client_def.config;
  JobOutcome out;
  out.name = jc.name;
  out.kind = jc.kind;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    ClientJob job(jc, virtualize(client_def, all_base_layers(cfg), &channel, client_id),
                  channel, client_id);
    job.keep_outputs(true);
    job.start();
    const float tol = jc.privacy.enabled ? 1e-4f : 1e-5f;
    float worst = 0.0f;
    bool compared = false;
    bool greedy_ok = true;
    bool kv_ok = true;
    std::string kv_detail;
    int done = 0;
    auto maybe_kill = [&] {
      if (kill_after >= 0 && done >= kill_after) ::raise(SIGKILL);
    };
    const int vocab = cfg.vocab_size;
    if (jc.kind == JobKind::kFinetune) {
      for (int s = 0; s < jc.steps; ++s, ++done) {
        maybe_kill();
        const Dataset d = training_batch(jc, vocab, s);
        std::optional<AdapterState> before;
        if (oracle) before = job.adapter();
        out.losses.push_back(job.train_step(d.tokens, d.targets));
        if (oracle) {
          const Tensor ref = reference_forward(*oracle, &*before, d.tokens);
          worst = std::max(worst, max_abs_diff(job.outputs().back(), ref));
          compared = true;
        }
      }
    } else {
      for (std::size_t r = 0; r < spec.rounds; ++r, ++done) {
        maybe_kill();
        const TokenBatch prompt = job_prompt(jc, vocab, r);
        const std::size_t first = job.outputs().size();
        const auto ids = job.generate(prompt, jc.gen_tokens);
        out.generated.insert(out.generated.end(), ids.begin(), ids.end());
        if (!oracle || jc.gen_tokens == 0) continue;
        compared = true;
        const std::size_t p = prompt.seq;
        const std::size_t g = jc.gen_tokens;
        const std::size_t len = p + g - 1;
        greedy_ok = greedy_ok &&
                    ids == reference_generate(*oracle, &job.adapter(), prompt, g);
        // Every cached forward against one full-sequence forward.
        TokenBatch full{prompt.batch, len, {}};
        for (std::size_t s = 0; s < prompt.batch; ++s) {
          full.ids.insert(full.ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(s * (p + g)),
                          ids.begin() + static_cast<std::ptrdiff_t>(s * (p + g) + len));
        }
        const Tensor ref = reference_forward(*oracle, &job.adapter(), full);
        std::size_t k = first;
        auto compare_rows = [&](const Tensor& got, std::size_t rows_per_seq,
                                std::size_t offset) {
          for (std::size_t s = 0; s < prompt.batch; ++s) {
            for (std::size_t i = 0; i < rows_per_seq; ++i) {
              auto a = got.row(s * rows_per_seq + i);
              auto b = ref.row(s * len + offset + i);
              for (std::size_t c = 0; c < a.size(); ++c) {
                worst = std::max(worst, std::abs(a[c] - b[c]));
              }
            }
          }
        };
        if (p > 1) compare_rows(job.outputs()[k++], p - 1, 0);
        for (std::size_t i = 0; i < g; ++i) compare_rows(job.outputs()[k++], 1, p - 1 + i);
        const std::uint64_t expect = static_cast<std::uint64_t>(cfg.n_layers) * 2 * len *
                                     static_cast<std::uint64_t>(cfg.d_model) * 4 *
                                     prompt.batch;
        const std::uint64_t got = job.ledger().snapshot().bytes(Category::kKVCache);
        if (got != expect) {
          kv_ok = false;
          kv_detail = "ledger " + std::to_string(got) + " != " + std::to_string(expect);
        } else if (kv_detail.empty()) {
          kv_detail = std::to_string(got) + " bytes at length " + std::to_string(len);
        }
      }
    }
    const std::string prefix = "job." + jc.name + ".";
    if (compared) {
      out.checks.push_back({prefix + "split_equivalence", worst <= tol,
                            "max|split-ref| " + fmt(worst) + " (tol " + fmt(tol) + ")"});
      if (jc.kind == JobKind::kInference) {
        out.checks.push_back({prefix + "greedy_matches_reference", greedy_ok, ""});
        out.checks.push_back({prefix + "kv_cache_bytes", kv_ok, kv_detail});
      }
    }
    const LedgerSnapshot snap = job.ledger().snapshot();
    const std::uint64_t noise = job.noise() ? job.noise()->bytes() : 0;
    out.checks.push_back({prefix + "no_frozen_weights_client_side",
                          snap.bytes(Category::kWeights) == cfg.client_weight_bytes() + noise,
                          "weights " + std::to_string(snap.bytes(Category::kWeights)) +
                              " bytes"});
    out.records = job.records();
    for (const auto& t : job.outputs()) out.output_checksums.push_back(checksum(t));
    out.ledger = snap;
    out.adapter_checksum = job.adapter().checksum();
    job.finish();
    out.payload_copies = channel.payload_copies();
    out.requests = channel.requests_sent();
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

namespace {

RunReport run_in_process(const Scenario& sc, const RunOptions& o) {
  RunReport report;
  report.scenario = sc.name;
  auto model = executor_model(sc);
  auto host = std::make_shared<LayerHost>(model, sc.executor.memory_optimized_backward);
  const std::uint64_t before = host->base_checksum();
  ExecutorService svc(host, sc.executor.policy);
  svc.start();
  std::unique_ptr<RemoteServer> server;
  const bool remote = std::any_of(sc.jobs.begin(), sc.jobs.end(), [](const JobSpec& j) {
    return j.config.channel == "remote";
  });
  if (remote) {
    server = std::make_unique<RemoteServer>(svc, sc.executor.endpoint);
    server->start();
  }
  const BaseModel def = sc.checkpoint.empty() ? *model : client_model_def(sc);
  std::optional<BaseModel> oracle;
  if (sc.oracle) oracle = oracle_model(sc);

  report.jobs.resize(sc.jobs.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < sc.jobs.size(); ++i) {
    threads.emplace_back([&, i] {
      const JobSpec& spec = sc.jobs[i];
      const auto id = static_cast<std::uint32_t>(i + 1);
      try {
        std::unique_ptr<Channel> ch;
        if (spec.config.channel == "remote") {
          Endpoint ep = sc.executor.endpoint;
          ep.port = server->port();
          if (ep.host == "0.0.0.0") ep.host = "127.0.0.1";
          ch = std::make_unique<RemoteChannel>(ep);
        } else {
          const std::size_t seq = spec.config.kind == JobKind::kFinetune
                                      ? spec.config.seq
                                      : spec.config.prompt_len;
          ch = std::make_unique<LocalChannel>(svc, spec.config.batch, seq,
                                              def.config.max_width());
        }
        report.jobs[i] = execute_job(spec, def, *ch, id, oracle ? &*oracle : nullptr);
      } catch (const std::exception& e) {
        report.jobs[i].name = spec.config.name;
        report.jobs[i].kind = spec.config.kind;
        report.jobs[i].error = e.what();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (server) server->stop();
  svc.stop();
  report.executor = summarize(svc, *host, before);
  if (o.log) {
    for (const auto& j : report.jobs) {
      *o.log << "job " << j.name << ": " << (j.ok ? "ok" : "FAILED " + j.error) << '\n';
    }
  }
  return report;
}

RunReport run_multi_process(const Scenario& sc, const RunOptions& o) {
  RunReport report;
  report.scenario = sc.name;
  report.multi_process = true;
  const std::string self =
      o.self_exe.empty() ? fs::read_symlink("/proc/self/exe").string() : o.self_exe;
  const fs::path dir = sc.output_dir;
  fs::create_directories(dir);
  const std::string resolved = (dir / "scenario.resolved.ini").string();
  {
    std::ofstream os(resolved);
    write_scenario(os, sc);
  }
  const std::string port_file = (dir / "executor.port").string();
  fs::remove(port_file);
  const std::string exec_json = (dir / "executor.json").string();
  fs::remove(exec_json);

  const pid_t server = spawn({self, "serve", resolved, "--port-file", port_file,
                              "--output", dir.string()});
  std::string port;
  for (int i = 0; i < 3000 && port.empty(); ++i) {
    std::ifstream is(port_file);
    if (is) std::getline(is, port);
    if (port.empty()) {
      int status = 0;
      if (::waitpid(server, &status, WNOHANG) == server) {
        throw std::runtime_error("executor process exited during startup");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
  if (port.empty()) {
    ::kill(server, SIGKILL);
    wait_status(server);
    throw std::runtime_error("executor process did not report a port");
  }
  std::string host = sc.executor.endpoint.host;
  if (host == "0.0.0.0") host = "127.0.0.1";

  std::vector<pid_t> pids;
  for (std::size_t i = 0; i < sc.jobs.size(); ++i) {
    const std::string name = sc.jobs[i].config.name;
    fs::remove(job_result_path(dir.string(), name));
    pids.push_back(spawn({self, "job", resolved, "--job", name, "--endpoint",
                          host + ":" + port, "--client-id", std::to_string(i + 1),
                          "--output", dir.string()}));
  }
  for (std::size_t i = 0; i < pids.size(); ++i) {
    const int status = wait_status(pids[i]);
    const JobSpec& spec = sc.jobs[i];
    JobOutcome out;
    out.name = spec.config.name;
    out.kind = spec.config.kind;
    if (WIFSIGNALED(status) && WTERMSIG(status) == SIGKILL && spec.kill_after >= 0) {
      out.killed = true;
      out.ok = true;
    } else {
      try {
        out = outcome_from_json(read_json(job_result_path(dir.string(), out.name)));
      } catch (const std::exception& e) {
        out.error = "job process exited with status " + std::to_string(status) + ": " + e.what();
      }
    }
    report.jobs.push_back(std::move(out));
  }
  ::kill(server, SIGTERM);
  const int st = wait_status(server);
  try {
    report.executor = executor_from_json(read_json(exec_json));
  } catch (const std::exception& e) {
    report.checks.push_back({"executor.process", false,
                             "status " + std::to_string(st) + ": " + e.what()});
  }
  return report;
}

}  // namespace

RunReport run_scenario(const Scenario& sc, const RunOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport report = sc.multi_process ? run_multi_process(sc, o) : run_in_process(sc, o);
  if (report.executor.checksum_before != 0 || report.executor.checksum_after != 0) {
    auto ex = executor_checks(sc, report.executor);
    report.checks.insert(report.checks.end(), ex.begin(), ex.end());
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (o.write_files) write_report(report, sc.output_dir);
  return report;
}

Check solo_equivalence(const Scenario& sc, const RunReport& report) {
  Check c{"batching_invisibility", true, ""};
  std::size_t compared = 0;
  for (const auto& spec : sc.jobs) {
    const JobOutcome* got = report.find(spec.config.name);
    if (!got || !got->ok || got->killed) continue;
    Scenario solo = sc;
    solo.jobs = {spec};
    solo.multi_process = false;
    solo.oracle = false;
    solo.executor.policy.mode = BatchMode::kNoLockstep;
    RunOptions o;
    o.write_files = false;
    const RunReport r = run_scenario(solo, o);
    if (r.jobs.empty() || !r.jobs[0].ok) {
      c.pass = false;
      c.detail = "solo run of " + spec.config.name + " failed";
      return c;
    }
    if (r.jobs[0].output_checksums != got->output_checksums) {
      c.pass = false;
      c.detail = spec.config.name + " differs from its solo run";
      return c;
    }
    ++compared;
  }
  c.detail = std::to_string(compared) + " jobs bitwise equal to solo runs";
  return c;
}

std::vector<Check> ledger_checks(const Scenario& sc, const RunReport& report) {
  std::vector<Check> out;
  const auto w = report.executor.ledger.bytes(Category::kWeights);
  out.push_back({"ledger.executor_weights_closed_form", w == sc.model.base_weight_bytes(),
                 std::to_string(w) + " vs " + std::to_string(sc.model.base_weight_bytes())});
  const auto t = report.executor.ledger.bytes(Category::kTransientBuffer);
  out.push_back({"ledger.executor_transient_released", t == 0,
                 "current " + std::to_string(t) + " bytes"});
  for (const auto& j : report.jobs) {
    if (!j.ok || j.killed) continue;
    const auto saved = j.ledger.bytes(Category::kSavedActivations);
    out.push_back({"ledger.job." + j.name + ".saved_released", saved == 0,
                   "current " + std::to_string(saved) + " bytes"});
  }
  return out;
}

std::string job_result_path(const std::string& dir, const std::string& job) {
  return (fs::path(dir) / ("job_" + job + ".json")).string();
}

namespace {

void write_client_csv(const std::string& path, const JobOutcome& j) {
  std::ofstream os(path);
  os << "iteration,latency_ms,tokens,tokens_per_s,loss,transfer_bytes\n";
  for (const auto& r : j.records) {
    os << r.iteration << ',' << r.latency_ms << ',' << r.tokens << ',' << r.tokens_per_s
       << ',' << r.loss << ',' << r.transfer_bytes << '\n';
  }
}

}  // namespace

void write_report(const RunReport& report, const std::string& dir) {
  fs::create_directories(dir);
  std::vector<LedgerSnapshot> ledgers{report.executor.ledger};
  for (const auto& j : report.jobs) {
    if (j.killed) continue;
    write_client_csv((fs::path(dir) / ("client_" + j.name + ".csv")).string(), j);
    ledgers.push_back(j.ledger);
  }
  {
    std::ofstream os(fs::path(dir) / "executor.csv");
    os << report.executor.metrics_csv;
  }
  {
    std::ofstream os(fs::path(dir) / "ledger.csv");
    write_ledger_csv(os, ledgers);
  }
  json jobs = json::array();
  for (const auto& j : report.jobs) jobs.push_back(to_json(j));
  write_json((fs::path(dir) / "report.json").string(),
             {{"scenario", report.scenario},
              {"multi_process", report.multi_process},
              {"ok", report.ok()},
              {"seconds", report.seconds},
              {"executor", to_json(report.executor)},
              {"checks", to_json(report.all_checks())},
              {"jobs", jobs}});
}

int serve_main(const Scenario& sc, const std::string& port_file,
               const std::string& out_dir) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, SIGINT);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  auto model = executor_model(sc);
  auto host = std::make_shared<LayerHost>(model, sc.executor.memory_optimized_backward);
  const std::uint64_t before = host->base_checksum();
  ExecutorService svc(host, sc.executor.policy);
  svc.start();
  RemoteServer server(svc, sc.executor.endpoint);
  server.start();
  if (!port_file.empty()) {
    {
      std::ofstream os(port_file + ".tmp");
      os << server.port() << '\n';
    }
    fs::rename(port_file + ".tmp", port_file);
  } else {
    std::cout << "listening on " << sc.executor.endpoint.host << ':' << server.port()
              << std::endl;
  }
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  svc.stop();
  const ExecutorSummary e = summarize(svc, *host, before);
  fs::create_directories(out_dir);
  write_json((fs::path(out_dir) / "executor.json").string(), to_json(e));
  return 0;
}

int job_main(const Scenario& sc, const std::string& job_name, const Endpoint& endpoint,
             std::uint32_t client_id, const std::string& out_dir) {
  const JobSpec* spec = sc.find_job(job_name);
  if (!spec) throw ConfigError(sc.source + ":0: no job named " + job_name);
  const BaseModel def = client_model_def(sc);
  std::optional<BaseModel> oracle;
  if (sc.oracle) oracle = oracle_model(sc);
  RemoteChannel channel(endpoint);
  const JobOutcome out = execute_job(*spec, def, channel, client_id,
                                     oracle ? &*oracle : nullptr, spec->kill_after);
  fs::create_directories(out_dir);
  write_json(job_result_path(out_dir, job_name), to_json(out));
  return out.ok && all_pass(out.checks) ? 0 : 1;
}

}  // namespace layerserve
