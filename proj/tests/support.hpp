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

#ifndef LAYERSERVE_TESTS_SUPPORT_HPP_
#define LAYERSERVE_TESTS_SUPPORT_HPP_

#include <filesystem>
#include <memory>
#include <string>
#include <sys/types.h>

#include "layerserve/channel.hpp"
#include "layerserve/client.hpp"
#include "layerserve/executor.hpp"
#include "layerserve/rng.hpp"
#include "oracle/oracle.hpp"

namespace testsupport {

using namespace layerserve;

/// An executor hosting one model, reached through fresh channels.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::unique_ptr<Channel> channel(std::size_t batch, std::size_t seq) = 0;
  /// Stops the executor and returns its final ledger.
  virtual LedgerSnapshot finish() = 0;
  virtual std::uint64_t checksum_after() = 0;
  virtual std::string name() const = 0;
};

/// Executor in this process; channels are local or loopback TCP.
class InProcessBackend : public Backend {
 public:
  InProcessBackend(std::shared_ptr<const BaseModel> model, bool remote,
                   BatchPolicy policy = {});
  ~InProcessBackend() override;
  std::unique_ptr<Channel> channel(std::size_t batch, std::size_t seq) override;
  LedgerSnapshot finish() override;
  std::uint64_t checksum_after() override { return host_->base_checksum(); }
  std::string name() const override { return remote_ ? "remote" : "local"; }
  LayerHost& host() { return *host_; }
  ExecutorService& service() { return *svc_; }

 private:
  std::shared_ptr<LayerHost> host_;
  std::unique_ptr<ExecutorService> svc_;
  std::unique_ptr<RemoteServer> server_;
  bool remote_;
  bool stopped_ = false;
};

/// `layerserve serve` in a child process, built from `config`.
class ProcessBackend : public Backend {
 public:
  ProcessBackend(const std::string& cli, const ModelConfig& config,
                 const std::filesystem::path& dir);
  ~ProcessBackend() override;
  std::unique_ptr<Channel> channel(std::size_t batch, std::size_t seq) override;
  LedgerSnapshot finish() override;
  std::uint64_t checksum_after() override { return checksum_after_; }
  std::string name() const override { return "process"; }

 private:
  std::filesystem::path dir_;
  pid_t pid_ = -1;
  Endpoint endpoint_;
  LedgerSnapshot ledger_;
  std::uint64_t checksum_after_ = 0;
};

/// Spawns argv[0] with arguments; returns the pid.
pid_t spawn(const std::vector<std::string>& argv);
/// Waits for `pid`; returns the exit code, or 128+signal.
int wait_exit(pid_t pid);

/// Moves every adapter tensor by uniform noise so no gradient is trivially 0.
void perturb(AdapterState& adapter, std::uint64_t seed, float amount = 0.3f);

/// A client job over every base layer of `model`.
std::unique_ptr<ClientJob> make_job(const BaseModel& model, const JobConfig& config,
                                    Channel& channel, std::uint32_t client_id);

double max_abs_diff(const Tensor& a, const oracle::Mat& b);

TokenBatch random_tokens(Rng& rng, int vocab, std::size_t batch, std::size_t seq);

}  // namespace testsupport

#endif  // LAYERSERVE_TESTS_SUPPORT_HPP_
