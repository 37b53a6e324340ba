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

#include <gtest/gtest.h>

#include <sstream>

#include "layerserve/scenario.hpp"

using namespace layerserve;

namespace {

Scenario parse(const std::string& text) {
  std::istringstream is(text);
  return parse_scenario(is, "s.ini");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "no error";
}

const char* kBase = R"([run]
name = demo
seed = 3
steps = 4

[model]
n_layers = 1
d_model = 16
n_heads = 2
d_ff = 32
vocab_size = 20
max_seq = 16
)";

}  // namespace

TEST(Scenario, Defaults) {
  const Scenario sc = parse(std::string(kBase) + "\n[job.a]\n\n[job.b]\nkind = inference\n");
  EXPECT_EQ(sc.name, "demo");
  EXPECT_EQ(sc.seed, 3u);
  EXPECT_EQ(sc.model.seed, 3u);
  ASSERT_EQ(sc.jobs.size(), 2u);
  const JobConfig& a = sc.jobs[0].config;
  EXPECT_EQ(a.kind, JobKind::kFinetune);
  EXPECT_EQ(a.adapter.method, AdapterMethod::kLoRA);
  EXPECT_EQ(a.adapter.targets, (std::set<Role>{Role::kQ, Role::kV, Role::kLmHead}));
  EXPECT_EQ(a.steps, 4);
  EXPECT_EQ(a.batch, 2u);
  const JobConfig& b = sc.jobs[1].config;
  EXPECT_EQ(b.adapter.method, AdapterMethod::kNone);
  EXPECT_EQ(b.steps, 0);
  EXPECT_NE(a.data_seed, b.data_seed);
  EXPECT_EQ(sc.executor.policy.mode, BatchMode::kOpportunistic);
  EXPECT_FALSE(sc.multi_process);
}

TEST(Scenario, CountExpandsJobs) {
  const Scenario sc = parse(std::string(kBase) + "\n[job.w]\ncount = 3\ndata_seed = 10\n");
  ASSERT_EQ(sc.jobs.size(), 3u);
  EXPECT_EQ(sc.jobs[2].config.name, "w.2");
  EXPECT_EQ(sc.jobs[2].config.data_seed, 12u);
  EXPECT_NE(sc.jobs[0].config.adapter.seed, sc.jobs[1].config.adapter.seed);
}

TEST(Scenario, ErrorsCarryLineNumbers) {
  const std::string base(kBase);
  EXPECT_EQ(error_of(base + "bogus = 1\n").rfind("s.ini:13: [model] bogus: unknown key", 0), 0u);
  EXPECT_NE(error_of(base + "\n[job.x]\nrank = many\n").find("s.ini:15:"), std::string::npos);
  EXPECT_NE(error_of(base + "\n[job.x]\nadapter = prefix\n").find("s.ini:15: [job.x] adapter"),
            std::string::npos);
  EXPECT_NE(error_of(base + "\n[job.x]\nseq = 99\n").find("max_seq"), std::string::npos);
  EXPECT_NE(error_of(base + "\n[jobs]\n").find("s.ini:14: [jobs] unknown section"), std::string::npos);
  EXPECT_NE(error_of("orphan = 1\n" + base).find("s.ini:1:"), std::string::npos);
  EXPECT_NE(error_of("[run]\nmode = cluster\n").find("s.ini:2: [run] mode"), std::string::npos);
  EXPECT_NE(error_of(std::string(kBase).replace(std::string(kBase).find("n_heads = 2"), 11, "n_heads = 3"))
                .find("[model]"),
            std::string::npos);
  EXPECT_NE(error_of("[run\n").find("s.ini:1:"), std::string::npos);
  EXPECT_NE(error_of(base + "\n[job.x]\nprivacy = true\nprivacy_k = 1\n").find("s.ini:16: [job.x] privacy_k"),
            std::string::npos);
  EXPECT_NE(error_of(base + "\n[executor]\nendpoint = nowhere\n").find("s.ini:15:"), std::string::npos);
}

TEST(Scenario, MissingFile) {
  EXPECT_THROW(load_scenario("/nonexistent/x.ini"), ConfigError);
}

TEST(Scenario, WriteRoundTrips) {
  Scenario sc = parse(std::string(kBase) + R"(
[executor]
policy = lockstep
wait_per_token_us = 12.5

[job.t]
adapter = ia3
targets = K,FF_DOWN
lr = 0.003
privacy = true
privacy_k = 3
channel = remote

[job.g]
kind = inference
placement = offloaded
decode_compute = offloaded
rounds = 2
)");
  std::ostringstream os;
  write_scenario(os, sc);
  const Scenario back = parse(os.str());
  std::ostringstream again;
  write_scenario(again, back);
  EXPECT_EQ(os.str(), again.str());
  EXPECT_EQ(back.executor.policy.mode, BatchMode::kLockstep);
  EXPECT_EQ(back.jobs[0].config.adapter.targets, (std::set<Role>{Role::kK, Role::kFfDown}));
  EXPECT_EQ(back.jobs[0].config.optimizer.lr, 0.003f);
  EXPECT_EQ(back.jobs[1].config.decode_compute, DecodeCompute::kOnOffloaded);
  EXPECT_EQ(back.jobs[1].rounds, 2u);
  EXPECT_EQ(back.jobs[0].config.data_seed, sc.jobs[0].config.data_seed);
}

TEST(Scenario, ReseedChangesEverySeed) {
  Scenario sc = parse(std::string(kBase) + "\n[job.a]\n");
  const auto before = sc.jobs[0].config.data_seed;
  sc.reseed(99);
  EXPECT_EQ(sc.seed, 99u);
  EXPECT_EQ(sc.model.seed, 99u);
  EXPECT_NE(sc.jobs[0].config.data_seed, before);
}
