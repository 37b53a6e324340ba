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

#include "layerserve/client.hpp"
#include "layerserve/ops.hpp"
#include "support.hpp"

using namespace layerserve;
using testsupport::InProcessBackend;

namespace {

ModelConfig config2() {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 32;
  c.n_heads = 4;
  c.d_ff = 64;
  c.vocab_size = 40;
  c.max_seq = 24;
  c.seed = 13;
  return c;
}

JobConfig lora_job(std::size_t batch = 2, std::size_t seq = 6) {
  JobConfig j;
  j.name = "t";
  j.adapter.method = AdapterMethod::kLoRA;
  j.adapter.rank = 4;
  j.adapter.targets = {Role::kQ, Role::kV, Role::kLmHead};
  j.batch = batch;
  j.seq = seq;
  return j;
}

class ClientTest : public ::testing::Test {
 protected:
  ClientTest()
      : model(std::make_shared<const BaseModel>(build_model(config2()))),
        backend(model, false) {}
  std::shared_ptr<const BaseModel> model;
  InProcessBackend backend;
};

}  // namespace

TEST_F(ClientTest, EmptyBaseSetIsPureLocal) {
  auto ch = backend.channel(2, 6);
  JobConfig j = lora_job();
  ClientJob job(j, virtualize(*model, {}, nullptr, 1), *ch, 1);
  job.start();
  EXPECT_TRUE(job.model().virt_layers.empty());
  EXPECT_EQ(job.model().local_layers.size(), 13u);
  Rng rng(1);
  const TokenBatch t = testsupport::random_tokens(rng, 40, 2, 6);
  EXPECT_TRUE(job.forward(t).bitwise_equal(reference_forward(*model, &job.adapter(), t)));
  EXPECT_EQ(ch->requests_sent(), 0u);
}

TEST_F(ClientTest, FullBaseSetKeepsNoFrozenWeights) {
  auto ch = backend.channel(2, 6);
  const ClientModel cm = virtualize(*model, all_base_layers(model->config), ch.get(), 1);
  EXPECT_EQ(cm.virt_layers.size(), 13u);
  EXPECT_TRUE(cm.local_layers.empty());
  EXPECT_EQ(cm.weight_bytes(), model->config.client_weight_bytes());
  ClientJob job(lora_job(), cm, *ch, 1);
  job.start();
  const LedgerSnapshot s = job.ledger().snapshot();
  EXPECT_EQ(s.bytes(Category::kWeights), model->config.client_weight_bytes());
  EXPECT_EQ(s.bytes(Category::kAdapter), job.adapter().bytes());
}

TEST_F(ClientTest, VirtualizeErrors) {
  auto ch = backend.channel(1, 1);
  EXPECT_THROW(virtualize(*model, {{7, Role::kQ}}, ch.get(), 1), std::invalid_argument);
  EXPECT_THROW(virtualize(*model, {{0, Role::kQ}}, nullptr, 1), std::invalid_argument);
}

TEST_F(ClientTest, SplitMatchesReference) {
  auto ch = backend.channel(2, 6);
  auto job = testsupport::make_job(*model, lora_job(), *ch, 1);
  job->start();
  testsupport::perturb(job->adapter(), 3);
  Rng rng(2);
  const TokenBatch t = testsupport::random_tokens(rng, 40, 2, 6);
  const Tensor split = job->forward(t);
  EXPECT_LE(max_abs_diff(split, reference_forward(*model, &job->adapter(), t)), 1e-5f);
  EXPECT_LE(testsupport::max_abs_diff(split, oracle::forward(*model, &job->adapter(), nullptr, t)), 1e-5);
}

TEST_F(ClientTest, FreshLoraEqualsNoAdapter) {
  auto ch = backend.channel(2, 6);
  auto job = testsupport::make_job(*model, lora_job(), *ch, 1);
  job->start();
  Rng rng(3);
  const TokenBatch t = testsupport::random_tokens(rng, 40, 2, 6);
  EXPECT_TRUE(job->forward(t).bitwise_equal(reference_forward(*model, nullptr, t)));
}

TEST_F(ClientTest, PrivacyKeepsLogits) {
  auto ch = backend.channel(2, 6);
  JobConfig j = lora_job();
  j.privacy.enabled = true;
  j.privacy.k = 3;
  auto job = testsupport::make_job(*model, j, *ch, 1);
  job->start();
  ASSERT_NE(job->noise(), nullptr);
  Rng rng(4);
  for (int i = 0; i < 4; ++i) {
    const TokenBatch t = testsupport::random_tokens(rng, 40, 2, 6);
    EXPECT_LE(max_abs_diff(job->forward(t), reference_forward(*model, &job->adapter(), t)), 1e-4f);
  }
}

TEST_F(ClientTest, ZeroGradLogitsGiveZeroGrads) {
  auto ch = backend.channel(2, 6);
  auto job = testsupport::make_job(*model, lora_job(), *ch, 1);
  job->start();
  testsupport::perturb(job->adapter(), 4);
  Rng rng(5);
  const Tensor logits = job->forward(testsupport::random_tokens(rng, 40, 2, 6));
  const AdapterGrads g = job->backward(Tensor(logits.shape()));
  for (const auto& [a, p] : g.lora) {
    for (float v : p.a.data()) EXPECT_EQ(v, 0.0f);
    for (float v : p.b.data()) EXPECT_EQ(v, 0.0f);
  }
}

TEST_F(ClientTest, GradientsMatchSplitAndMonolithicPaths) {
  // Local (no executor) and fully remote gradients agree to float rounding.
  auto ch = backend.channel(2, 6);
  JobConfig j = lora_job();
  j.adapter.targets = {Role::kQ, Role::kK, Role::kV, Role::kO, Role::kFfUp, Role::kFfDown, Role::kLmHead};
  auto remote = testsupport::make_job(*model, j, *ch, 1);
  ClientJob local(j, virtualize(*model, {}, nullptr, 2), *ch, 2);
  remote->start();
  local.start();
  testsupport::perturb(remote->adapter(), 6);
  testsupport::perturb(local.adapter(), 6);
  Rng rng(6);
  const Dataset d = copy_task(40, 6, 2, 1);
  const LossAndGrad a = cross_entropy(remote->forward(d.tokens), d.targets);
  const LossAndGrad b = cross_entropy(local.forward(d.tokens), d.targets);
  const AdapterGrads ga = remote->backward(a.grad_logits);
  const AdapterGrads gb = local.backward(b.grad_logits);
  for (const auto& [addr, p] : ga.lora) {
    EXPECT_LE(max_abs_diff(p.a, gb.lora.at(addr).a), 1e-5f) << to_string(addr);
    EXPECT_LE(max_abs_diff(p.b, gb.lora.at(addr).b), 1e-5f) << to_string(addr);
  }
}

TEST_F(ClientTest, InferenceJobRejectsBackward) {
  auto ch = backend.channel(1, 4);
  JobConfig j;
  j.kind = JobKind::kInference;
  auto job = testsupport::make_job(*model, j, *ch, 1);
  job->start();
  Rng rng(7);
  const Tensor logits = job->forward(testsupport::random_tokens(rng, 40, 1, 4));
  EXPECT_THROW(job->backward(logits), StateError);
  const std::vector<std::int32_t> targets(4, 0);
  EXPECT_THROW(job->train_step(testsupport::random_tokens(rng, 40, 1, 4), targets), StateError);
}

TEST_F(ClientTest, BackwardWithoutForwardIsStateError) {
  auto ch = backend.channel(2, 6);
  auto job = testsupport::make_job(*model, lora_job(), *ch, 1);
  job->start();
  EXPECT_THROW(job->backward(Tensor({12, 40})), StateError);
}

TEST_F(ClientTest, ZeroLearningRateKeepsLoss) {
  auto ch = backend.channel(2, 6);
  JobConfig j = lora_job();
  j.optimizer.lr = 0.0f;
  auto job = testsupport::make_job(*model, j, *ch, 1);
  job->start();
  testsupport::perturb(job->adapter(), 8);
  const auto before = job->adapter().checksum();
  const Dataset d = copy_task(40, 6, 2, 2);
  const float first = job->train_step(d.tokens, d.targets);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(job->train_step(d.tokens, d.targets), first);
  EXPECT_EQ(job->adapter().checksum(), before);
}

TEST_F(ClientTest, TrainingLeavesBaseUntouched) {
  auto ch = backend.channel(2, 6);
  auto job = testsupport::make_job(*model, lora_job(), *ch, 1);
  job->start();
  const Dataset d = copy_task(40, 6, 8, 3);
  const auto before = backend.host().base_checksum();
  float first = 0, last = 0;
  for (int s = 0; s < 10; ++s) {
    const Dataset b = d.slice((s * 2) % 8, 2);
    last = job->train_step(b.tokens, b.targets);
    if (s == 0) first = last;
  }
  EXPECT_EQ(backend.host().base_checksum(), before);
  EXPECT_EQ(before, build_model(config2()).base_checksum());
  EXPECT_LT(last, first);
  EXPECT_EQ(job->records().size(), 10u);
}

TEST_F(ClientTest, LedgerDeltasAcrossTrainStep) {
  auto ch = backend.channel(2, 6);
  auto job = testsupport::make_job(*model, lora_job(), *ch, 1);
  job->start();
  const Dataset d = copy_task(40, 6, 2, 4);
  const auto exec0 = backend.host().ledger().snapshot().total();
  const auto c0 = job->ledger().snapshot();
  job->train_step(d.tokens, d.targets);
  const auto c1 = job->ledger().snapshot();
  EXPECT_EQ(backend.host().ledger().snapshot().total(), exec0);
  EXPECT_EQ(c1.total() - c0.total(), c1.bytes(Category::kOptimizer));
  EXPECT_EQ(c1.bytes(Category::kOptimizer), 2 * job->adapter().bytes());
  job->train_step(d.tokens, d.targets);
  EXPECT_EQ(job->ledger().snapshot().total(), c1.total());
  EXPECT_GT(c1.peak_bytes(Category::kSavedActivations), 0u);
  EXPECT_EQ(c1.bytes(Category::kSavedActivations), 0u);
}

TEST_F(ClientTest, GenerateMatchesReferenceAndPlacement) {
  JobConfig j;
  j.kind = JobKind::kInference;
  j.batch = 2;
  j.prompt_len = 5;
  const TokenBatch prompt = random_prompts(40, 2, 5, 9);
  const auto want = reference_generate(*model, nullptr, prompt, 6);
  ASSERT_EQ(want.size(), 2u * 11u);
  for (CachePlacement p : {CachePlacement::kFast, CachePlacement::kOffloaded}) {
    for (DecodeCompute c : {DecodeCompute::kOnFast, DecodeCompute::kOnOffloaded}) {
      j.placement = p;
      j.decode_compute = c;
      auto ch = backend.channel(2, 5);
      auto job = testsupport::make_job(*model, j, *ch, 1);
      job->start();
      EXPECT_EQ(job->generate(prompt, 6), want);
      EXPECT_EQ(job->records().size(), 6u);
      EXPECT_EQ(job->ledger().snapshot().bytes(Category::kKVCache),
                2u * 2 * 2 * 10 * 32 * 4);
    }
  }
}

TEST_F(ClientTest, GenerateZeroTokens) {
  JobConfig j;
  j.kind = JobKind::kInference;
  auto ch = backend.channel(1, 4);
  auto job = testsupport::make_job(*model, j, *ch, 1);
  job->start();
  const TokenBatch prompt = random_prompts(40, 1, 4, 1);
  EXPECT_EQ(job->generate(prompt, 0), prompt.ids);
  EXPECT_EQ(ch->requests_sent(), 0u);
  EXPECT_TRUE(job->records().empty());
}

TEST_F(ClientTest, OffloadedTransferBytes) {
  JobConfig j;
  j.kind = JobKind::kInference;
  j.placement = CachePlacement::kOffloaded;
  const TokenBatch prompt = random_prompts(40, 1, 4, 2);
  const std::uint64_t nl = 2, d = 32;
  for (DecodeCompute c : {DecodeCompute::kOnFast, DecodeCompute::kOnOffloaded}) {
    j.decode_compute = c;
    auto ch = backend.channel(1, 4);
    auto job = testsupport::make_job(*model, j, *ch, 1);
    job->start();
    job->generate(prompt, 5);
    for (std::size_t i = 0; i < 5; ++i) {
      const std::uint64_t len = 4 + i;
      const std::uint64_t want =
          c == DecodeCompute::kOnFast ? 2 * nl * len * d * 4 : 4 * nl * d * 4;
      EXPECT_EQ(job->records()[i].transfer_bytes, want);
      EXPECT_EQ(decode_transfer_bytes(model->config, CachePlacement::kOffloaded, c, len), want);
    }
  }
  EXPECT_EQ(decode_transfer_bytes(model->config, CachePlacement::kFast, DecodeCompute::kOnFast, 9), 0u);
}

TEST(Crossover, ReportedLengthIsTheFirstFasterOne) {
  ModelConfig c;
  c.n_layers = 4;
  c.d_model = 256;
  c.n_heads = 4;
  c.d_ff = 512;
  c.vocab_size = 100;
  c.max_seq = 1 << 20;
  TransferModel tm;
  tm.offloaded_flops_per_s = 2e9;
  tm.link_bytes_per_s = 1e9;
  const auto x = decode_crossover(c, tm);
  ASSERT_TRUE(x.has_value());
  auto faster = [&](std::size_t len) {
    return decode_step_seconds(c, DecodeCompute::kOnOffloaded, len, tm) <
           decode_step_seconds(c, DecodeCompute::kOnFast, len, tm);
  };
  EXPECT_TRUE(faster(*x));
  if (*x > 1) EXPECT_FALSE(faster(*x - 1));
  tm.link_bytes_per_s = 1e18;
  EXPECT_FALSE(decode_crossover(c, tm).has_value());
}
