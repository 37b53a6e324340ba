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

#include "layerserve/adapter.hpp"
#include "layerserve/attention.hpp"
#include "layerserve/model.hpp"
#include "layerserve/ops.hpp"
#include "layerserve/rng.hpp"
#include "oracle/oracle.hpp"
#include "support.hpp"

using namespace layerserve;

namespace {

ModelConfig small(int layers = 2, int d = 32) {
  ModelConfig c;
  c.n_layers = layers;
  c.d_model = d;
  c.n_heads = 4;
  c.d_ff = 2 * d;
  c.vocab_size = 48;
  c.max_seq = 16;
  c.seed = 9;
  return c;
}

std::vector<double> flat(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c = small();
  c.n_heads = 5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small();
  c.vocab_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(build_model(c), std::invalid_argument);
}

TEST(BuildModel, DeterministicChecksums) {
  EXPECT_EQ(build_model(small()).base_checksum(), build_model(small()).base_checksum());
  ModelConfig other = small();
  other.seed = 10;
  EXPECT_NE(build_model(small()).base_checksum(), build_model(other).base_checksum());
}

TEST(BuildModel, ThirteenAffineLayers) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 64;
  c.n_heads = 4;
  c.d_ff = 128;
  c.vocab_size = 256;
  const BaseModel m = build_model(c);
  EXPECT_EQ(m.layers.size(), 13u);
  EXPECT_EQ(c.layer_addresses().size(), 13u);
  EXPECT_EQ(c.layer_addresses().back(), (LayerAddress{2, Role::kLmHead}));
}

TEST(BuildModel, ParameterBytesMatchClosedForm) {
  for (bool bias : {true, false}) {
    ModelConfig c = small();
    c.bias = bias;
    const BaseModel m = build_model(c);
    std::size_t bytes = 0;
    for (const auto& [a, p] : m.layers) bytes += p.bytes();
    const std::size_t d = c.d_model, f = c.d_ff, v = c.vocab_size, L = c.n_layers;
    const std::size_t weights = L * (4 * d * d + 2 * d * f) + d * v;
    const std::size_t biases = bias ? L * (4 * d + f + d) + v : 0;
    EXPECT_EQ(bytes, 4 * (weights + biases));
    EXPECT_EQ(c.base_weight_bytes(), bytes);
    EXPECT_EQ(c.client_weight_bytes(), 4 * (v * d + (2 * L + 1) * d));
  }
}

TEST(ReferenceForward, MatchesDoubleOracle) {
  const BaseModel m = build_model(small());
  Rng rng(1);
  const TokenBatch t = testsupport::random_tokens(rng, 48, 2, 7);
  EXPECT_LT(testsupport::max_abs_diff(reference_forward(m, nullptr, t),
                                      oracle::forward(m, nullptr, nullptr, t)),
            1e-5);
}

TEST(ReferenceForward, FreshAdaptersAreIdentity) {
  const ModelConfig c = small();
  const BaseModel m = build_model(c);
  Rng rng(2);
  const TokenBatch t = testsupport::random_tokens(rng, 48, 2, 5);
  const Tensor plain = reference_forward(m, nullptr, t);
  AdapterConfig lora;
  lora.method = AdapterMethod::kLoRA;
  lora.targets = {Role::kQ, Role::kV, Role::kFfUp, Role::kLmHead};
  const AdapterState ls(c, lora);
  EXPECT_TRUE(reference_forward(m, &ls, t).bitwise_equal(plain));
  AdapterConfig ia3 = lora;
  ia3.method = AdapterMethod::kIA3;
  const AdapterState is(c, ia3);
  EXPECT_TRUE(reference_forward(m, &is, t).bitwise_equal(plain));
}

TEST(ReferenceForward, CachedMatchesFullSequence) {
  const ModelConfig c = small();
  const BaseModel m = build_model(c);
  Rng rng(3);
  const TokenBatch t = testsupport::random_tokens(rng, 48, 2, 9);
  const Tensor full = reference_forward(m, nullptr, t);
  std::vector<KVCache> caches(2, KVCache(c));
  // Prefix of 5, then one token at a time.
  auto piece = [&](std::size_t from, std::size_t len) {
    TokenBatch p{2, len, {}};
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t i = 0; i < len; ++i) p.ids.push_back(t.ids[b * 9 + from + i]);
    }
    return reference_forward(m, nullptr, p, &caches);
  };
  const Tensor pre = piece(0, 5);
  EXPECT_LT(max_abs_diff(slice_rows(pre, 0, 5), slice_rows(full, 0, 5)), 1e-5);
  for (std::size_t pos = 5; pos < 9; ++pos) {
    const Tensor step = piece(pos, 1);
    EXPECT_LT(max_abs_diff(slice_rows(step, 0, 1), slice_rows(full, pos, pos + 1)), 1e-5);
    EXPECT_LT(max_abs_diff(slice_rows(step, 1, 2), slice_rows(full, 9 + pos, 10 + pos)), 1e-5);
  }
  EXPECT_EQ(caches[0].length(), 9u);
  EXPECT_EQ(caches[0].bytes(), static_cast<std::size_t>(c.n_layers) * 2 * 9 * c.d_model * 4);
}

TEST(ReferenceForward, RejectsOverlongSequence) {
  const BaseModel m = build_model(small());
  TokenBatch t{1, 17, std::vector<std::int32_t>(17, 0)};
  EXPECT_ANY_THROW(reference_forward(m, nullptr, t));
}

TEST(Lora, ForwardExamples) {
  Rng rng(4);
  const Tensor x = rng.uniform_tensor({3, 4}, -1, 1);
  const Tensor a = rng.uniform_tensor({4, 2}, -1, 1);
  const Tensor zero = lora_forward(x, a, Tensor({2, 4}), 16, 2);
  for (float v : zero.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_TRUE(lora_forward(x, Tensor::identity(4), Tensor::identity(4), 4, 4).bitwise_equal(x));
  const Tensor b = rng.uniform_tensor({2, 5}, -1, 1);
  const oracle::Mat ref = oracle::matmul(oracle::matmul(oracle::from_tensor(x), oracle::from_tensor(a)),
                                         oracle::from_tensor(b));
  const Tensor y = lora_forward(x, a, b, 8, 2);
  for (std::size_t i = 0; i < ref.v.size(); ++i) EXPECT_NEAR(y[i], 4.0 * ref.v[i], 1e-5);
}

TEST(Lora, BackwardExamples) {
  Rng rng(5);
  const Tensor x = rng.uniform_tensor({3, 4}, -1, 1);
  const Tensor a = rng.uniform_tensor({4, 2}, -1, 1);
  const Tensor b = rng.uniform_tensor({2, 5}, -1, 1);
  const LoraGrads z = lora_backward(x, Tensor({3, 5}), a, b, 8, 2);
  for (const Tensor* t : {&z.grad_a, &z.grad_b, &z.grad_x}) {
    for (float v : t->data()) EXPECT_EQ(v, 0.0f);
  }
  const Tensor g = rng.uniform_tensor({3, 5}, -1, 1);
  const LoraGrads fresh = lora_backward(x, g, a, Tensor({2, 5}), 8, 2);
  for (float v : fresh.grad_x.data()) EXPECT_EQ(v, 0.0f);

  const LoraGrads lg = lora_backward(x, g, a, b, 8, 2);
  auto objective = [&](const Tensor& xx, const Tensor& aa, const Tensor& bb) {
    const Tensor y = lora_forward(xx, aa, bb, 8, 2);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * g[i];
    return s;
  };
  auto check = [&](const Tensor& param, const Tensor& grad, int which) {
    const auto f = [&](const std::vector<double>& v) {
      Tensor t(param.shape());
      for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
      return objective(which == 0 ? t : x, which == 1 ? t : a, which == 2 ? t : b);
    };
    EXPECT_LT(oracle::relative_error(flat(grad), oracle::numeric_gradient(f, flat(param), 1e-3)), 1e-3);
  };
  check(x, lg.grad_x, 0);
  check(a, lg.grad_a, 1);
  check(b, lg.grad_b, 2);
}

TEST(AdapterState, InitAndBytes) {
  const ModelConfig c = small();
  AdapterConfig lc;
  lc.method = AdapterMethod::kLoRA;
  lc.rank = 4;
  lc.targets = {Role::kQ, Role::kLmHead};
  const AdapterState s(c, lc);
  EXPECT_TRUE(s.targets({0, Role::kQ}));
  EXPECT_FALSE(s.targets({0, Role::kK}));
  EXPECT_TRUE(s.targets({2, Role::kLmHead}));
  for (float v : s.lora({1, Role::kQ})->b.data()) EXPECT_EQ(v, 0.0f);
  const std::size_t d = c.d_model, v = c.vocab_size;
  EXPECT_EQ(s.bytes(), 4 * (2 * 4 * (d + d) + 4 * (d + v)));
  AdapterConfig ic = lc;
  ic.method = AdapterMethod::kIA3;
  const AdapterState i(c, ic);
  for (float x : i.ia3({0, Role::kQ})->data()) EXPECT_EQ(x, 1.0f);
  EXPECT_EQ(i.bytes(), 4 * (2 * d + v));
}

TEST(Optimizer, ZeroLearningRateLeavesParameters) {
  const ModelConfig c = small();
  AdapterConfig lc;
  lc.method = AdapterMethod::kLoRA;
  lc.targets = {Role::kV};
  AdapterState s(c, lc);
  testsupport::perturb(s, 1);
  const auto before = s.checksum();
  AdapterGrads g = AdapterGrads::zeros_like(s);
  for (auto& [a, p] : g.lora) p.a = Tensor::filled(p.a.shape(), 1.0f);
  for (OptimizerKind k : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    OptimizerConfig oc;
    oc.kind = k;
    oc.lr = 0.0f;
    Optimizer opt(oc);
    opt.step(s, g);
    EXPECT_EQ(s.checksum(), before);
  }
  OptimizerConfig adam;
  Optimizer opt(adam);
  EXPECT_EQ(opt.state_bytes(), 0u);
  opt.step(s, g);
  EXPECT_EQ(opt.state_bytes(), 2 * s.bytes());
  EXPECT_NE(s.checksum(), before);
}

TEST(Attention, SinglePositionReturnsValue) {
  const std::vector<float> q{1, 2}, k{3, 4}, v{5, 6};
  Tensor probs;
  const Tensor out = attend_head(q, k, v, 1, 1, 2, 0, &probs);
  EXPECT_EQ(probs[0], 1.0f);
  EXPECT_EQ(out[0], 5.0f);
  EXPECT_EQ(out[1], 6.0f);
}

TEST(Attention, IdenticalKeysAndValues) {
  Rng rng(6);
  const Tensor q = rng.uniform_tensor({2, 3}, -5, 5);
  const std::vector<float> k{1, 2, 3, 1, 2, 3}, v{7, 8, 9, 7, 8, 9};
  const Tensor out = attend_head(q.data(), k, v, 2, 2, 3, 0);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out.at(r, c), v[c], 1e-6);
  }
}

TEST(Attention, BackwardMatchesFiniteDifferences) {
  Rng rng(7);
  const Tensor q = rng.uniform_tensor({2, 3}, -1, 1), k = rng.uniform_tensor({2, 3}, -1, 1),
               v = rng.uniform_tensor({2, 3}, -1, 1), g = rng.uniform_tensor({2, 3}, -1, 1);
  Tensor probs;
  attend_head(q.data(), k.data(), v.data(), 2, 2, 3, 0, &probs);
  const AttentionGrads ag = attend_head_backward(q, k, v, probs, g);
  auto check = [&](const Tensor& param, const Tensor& grad, int which) {
    const auto f = [&](const std::vector<double>& x) {
      Tensor t(param.shape());
      for (std::size_t i = 0; i < x.size(); ++i) t[i] = static_cast<float>(x[i]);
      const Tensor y = attend_head((which == 0 ? t : q).data(), (which == 1 ? t : k).data(),
                                   (which == 2 ? t : v).data(), 2, 2, 3, 0);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * g[i];
      return s;
    };
    EXPECT_LT(oracle::relative_error(flat(grad), oracle::numeric_gradient(f, flat(param), 1e-3)), 1e-3);
  };
  check(q, ag.dq, 0);
  check(k, ag.dk, 1);
  check(v, ag.dv, 2);
}

TEST(Attention, MultiHeadBackwardMatchesFiniteDifferences) {
  Rng rng(8);
  const Tensor q = rng.uniform_tensor({4, 8}, -1, 1), k = rng.uniform_tensor({4, 8}, -1, 1),
               v = rng.uniform_tensor({4, 8}, -1, 1), g = rng.uniform_tensor({4, 8}, -1, 1);
  std::vector<Tensor> probs;
  causal_self_attention(q, k, v, 2, &probs);
  const MultiHeadGrads mg = causal_self_attention_backward(q, k, v, probs, g, 2);
  const auto f = [&](const std::vector<double>& x) {
    Tensor t(q.shape());
    for (std::size_t i = 0; i < x.size(); ++i) t[i] = static_cast<float>(x[i]);
    const Tensor y = causal_self_attention(t, k, v, 2);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * g[i];
    return s;
  };
  EXPECT_LT(oracle::relative_error(flat(mg.dq), oracle::numeric_gradient(f, flat(q), 1e-3)), 1e-3);
}

TEST(KVCache, BytesAndBounds) {
  const ModelConfig c = small();
  KVCache cache(c);
  EXPECT_EQ(cache.bytes(), 0u);
  const std::vector<float> row(c.d_head(), 1.0f);
  for (int b = 0; b < c.n_layers; ++b) {
    for (int h = 0; h < c.n_heads; ++h) cache.append(b, h, row, row);
  }
  EXPECT_EQ(cache.length(), 1u);
  EXPECT_EQ(cache.bytes(), static_cast<std::size_t>(c.n_layers) * 2 * c.d_model * 4);
  EXPECT_ANY_THROW(cache.append(0, 0, std::vector<float>(3), std::vector<float>(3)));
}
