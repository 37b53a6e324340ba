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

#include "support.hpp"

#include <csignal>
#include <fstream>
#include <spawn.h>
#include <stdexcept>
#include <sys/wait.h>
#include <thread>

#include "json.hpp"
#include "layerserve/scenario.hpp"

extern char** environ;

namespace testsupport {
namespace fs = std::filesystem;

InProcessBackend::InProcessBackend(std::shared_ptr<const BaseModel> model, bool remote,
                                   BatchPolicy policy)
    : host_(std::make_shared<LayerHost>(std::move(model))),
      svc_(std::make_unique<ExecutorService>(host_, policy)),
      remote_(remote) {
  svc_->start();
  if (remote_) {
    server_ = std::make_unique<RemoteServer>(*svc_, Endpoint{"127.0.0.1", 0});
    server_->start();
  }
}

InProcessBackend::~InProcessBackend() { finish(); }

std::unique_ptr<Channel> InProcessBackend::channel(std::size_t batch, std::size_t seq) {
  if (remote_) return std::make_unique<RemoteChannel>(Endpoint{"127.0.0.1", server_->port()});
  return std::make_unique<LocalChannel>(*svc_, batch, seq, host_->config().max_width());
}

LedgerSnapshot InProcessBackend::finish() {
  if (!stopped_) {
    stopped_ = true;
    if (server_) server_->stop();
    svc_->stop();
  }
  return host_->ledger().snapshot();
}

pid_t spawn(const std::vector<std::string>& argv) {
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  pid_t pid = -1;
  if (posix_spawn(&pid, args[0], nullptr, nullptr, args.data(), environ) != 0) {
    throw std::runtime_error("cannot spawn " + argv[0]);
  }
  return pid;
}

int wait_exit(pid_t pid) {
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0) {
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return 128 + WTERMSIG(status);
}

ProcessBackend::ProcessBackend(const std::string& cli, const ModelConfig& config,
                               const fs::path& dir)
    : dir_(dir) {
  fs::create_directories(dir_);
  Scenario sc;
  sc.name = "backend";
  sc.model = config;
  sc.seed = config.seed;
  const fs::path ini = dir_ / "backend.ini";
  {
    std::ofstream os(ini);
    write_scenario(os, sc);
  }
  const fs::path port_file = dir_ / "port";
  fs::remove(port_file);
  pid_ = spawn({cli, "serve", ini.string(), "--port-file", port_file.string(), "--output",
                dir_.string()});
  std::string port;
  for (int i = 0; i < 1000 && port.empty(); ++i) {
    std::ifstream is(port_file);
    if (is) std::getline(is, port);
    if (port.empty()) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  if (port.empty()) {
    ::kill(pid_, SIGKILL);
    wait_exit(pid_);
    pid_ = -1;
    throw std::runtime_error("executor process did not start");
  }
  endpoint_.port = static_cast<std::uint16_t>(std::stoi(port));
}

ProcessBackend::~ProcessBackend() {
  try {
    finish();
  } catch (...) {
  }
}

std::unique_ptr<Channel> ProcessBackend::channel(std::size_t, std::size_t) {
  return std::make_unique<RemoteChannel>(endpoint_);
}

LedgerSnapshot ProcessBackend::finish() {
  if (pid_ < 0) return ledger_;
  ::kill(pid_, SIGTERM);
  const int rc = wait_exit(pid_);
  pid_ = -1;
  if (rc != 0) throw std::runtime_error("executor process exited with " + std::to_string(rc));
  std::ifstream is(dir_ / "executor.json");
  const auto j = nlohmann::json::parse(is);
  ledger_.owner = j.at("ledger").at("owner").get<std::string>();
  ledger_.current = j.at("ledger").at("current").get<decltype(ledger_.current)>();
  ledger_.peak = j.at("ledger").at("peak").get<decltype(ledger_.peak)>();
  checksum_after_ = j.at("checksum_after").get<std::uint64_t>();
  return ledger_;
}

void perturb(AdapterState& adapter, std::uint64_t seed, float amount) {
  Rng rng(mix64(seed));
  adapter.for_each_parameter([&](const std::string&, Tensor& t) {
    for (float& v : t.data()) v += rng.uniform(-amount, amount);
  });
}

std::unique_ptr<ClientJob> make_job(const BaseModel& model, const JobConfig& config,
                                    Channel& channel, std::uint32_t client_id) {
  return std::make_unique<ClientJob>(
      config, virtualize(model, all_base_layers(model.config), &channel, client_id), channel,
      client_id);
}

double max_abs_diff(const Tensor& a, const oracle::Mat& b) {
  if (a.rows() != b.rows || a.cols() != b.cols) return 1e300;
  double worst = 0.0;
  for (std::size_t i = 0; i < b.v.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b.v[i]));
  }
  return worst;
}

TokenBatch random_tokens(Rng& rng, int vocab, std::size_t batch, std::size_t seq) {
  TokenBatch t{batch, seq, {}};
  for (std::size_t i = 0; i < batch * seq; ++i) {
    t.ids.push_back(static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(vocab))));
  }
  return t;
}

}  // namespace testsupport
