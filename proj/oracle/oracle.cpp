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

#include "oracle/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

using layerserve::LayerAddress;
using layerserve::Role;

Mat from_tensor(const layerserve::Tensor& t) {
  Mat m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.size(); ++i) m.v[i] = t[i];
  return m;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw std::invalid_argument("oracle matmul: shape mismatch");
  Mat out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < a.cols; ++t) s += a.at(i, t) * b.at(t, j);
      out.at(i, j) = s;
    }
  }
  return out;
}

Mat softmax_rows(const Mat& x) {
  Mat out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < x.cols; ++j) mx = std::max(mx, x.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) sum += std::exp(x.at(i, j) - mx);
    for (std::size_t j = 0; j < x.cols; ++j) out.at(i, j) = std::exp(x.at(i, j) - mx) / sum;
  }
  return out;
}

Mat rmsnorm(const Mat& x, const std::vector<double>& gain, double eps) {
  Mat out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) ss += x.at(i, j) * x.at(i, j);
    const double r = 1.0 / std::sqrt(ss / static_cast<double>(x.cols) + eps);
    for (std::size_t j = 0; j < x.cols; ++j) out.at(i, j) = x.at(i, j) * r * gain[j];
  }
  return out;
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double cross_entropy(const Mat& logits, const std::vector<std::int32_t>& targets) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < logits.cols; ++j) mx = std::max(mx, logits.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols; ++j) sum += std::exp(logits.at(i, j) - mx);
    total += std::log(sum) + mx - logits.at(i, static_cast<std::size_t>(targets[i]));
  }
  return total / static_cast<double>(logits.rows);
}

Params adapter_params(const layerserve::AdapterState& adapter) {
  Params p;
  adapter.for_each_parameter([&](const std::string& name, const layerserve::Tensor& t) {
    p[name] = std::vector<double>(t.data().begin(), t.data().end());
  });
  return p;
}

namespace {

std::vector<double> widen(const layerserve::Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

struct Ctx {
  const layerserve::BaseModel& model;
  const layerserve::AdapterState* adapter;
  const Params* params;

  Mat affine(const LayerAddress& a, const Mat& x) const {
    const layerserve::AffineParams& p = model.layer(a);
    Mat y = matmul(x, from_tensor(p.weight));
    if (p.bias) {
      for (std::size_t i = 0; i < y.rows; ++i) {
        for (std::size_t j = 0; j < y.cols; ++j) y.at(i, j) += (*p.bias)[j];
      }
    }
    if (!adapter || !adapter->targets(a)) return y;
    const std::string key = to_string(a);
    if (const auto* lp = adapter->lora(a)) {
      Mat am(lp->a.rows(), lp->a.cols());
      Mat bm(lp->b.rows(), lp->b.cols());
      am.v = params->at("lora." + key + ".A");
      bm.v = params->at("lora." + key + ".B");
      const Mat d = matmul(matmul(x, am), bm);
      const double s = static_cast<double>(adapter->config().alpha) /
                       static_cast<double>(adapter->config().rank);
      for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += s * d.v[i];
    } else if (adapter->ia3(a)) {
      const auto& l = params->at("ia3." + key);
      for (std::size_t i = 0; i < y.rows; ++i) {
        for (std::size_t j = 0; j < y.cols; ++j) y.at(i, j) *= l[j];
      }
    }
    return y;
  }
};

Mat attention(const Mat& q, const Mat& k, const Mat& v, int n_heads) {
  const std::size_t s = q.rows;
  const std::size_t dh = q.cols / static_cast<std::size_t>(n_heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat out(s, q.cols);
  for (int h = 0; h < n_heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * dh;
    for (std::size_t i = 0; i < s; ++i) {
      std::vector<double> w(i + 1);
      double mx = -INFINITY;
      for (std::size_t j = 0; j <= i; ++j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < dh; ++t) dot += q.at(i, c0 + t) * k.at(j, c0 + t);
        w[j] = dot * scale;
        mx = std::max(mx, w[j]);
      }
      double sum = 0.0;
      for (auto& x : w) sum += (x = std::exp(x - mx));
      for (std::size_t j = 0; j <= i; ++j) {
        for (std::size_t t = 0; t < dh; ++t) out.at(i, c0 + t) += w[j] / sum * v.at(j, c0 + t);
      }
    }
  }
  return out;
}

}  // namespace

Mat forward(const layerserve::BaseModel& model, const layerserve::AdapterState* adapter,
            const Params* params, const layerserve::TokenBatch& tokens) {
  const layerserve::ModelConfig& cfg = model.config;
  Params own;
  if (adapter && !params) {
    own = adapter_params(*adapter);
    params = &own;
  }
  const Ctx ctx{model, adapter, params};
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const double eps = cfg.norm_eps;
  Mat logits(tokens.tokens(), static_cast<std::size_t>(cfg.vocab_size));
  for (std::size_t s = 0; s < tokens.batch; ++s) {
    Mat x(tokens.seq, d);
    for (std::size_t t = 0; t < tokens.seq; ++t) {
      const auto id = static_cast<std::size_t>(tokens.ids[s * tokens.seq + t]);
      for (std::size_t j = 0; j < d; ++j) x.at(t, j) = model.embedding.at(id, j);
    }
    for (int b = 0; b < cfg.n_layers; ++b) {
      const auto blk = static_cast<std::uint16_t>(b);
      const Mat h = rmsnorm(x, widen(model.attn_norm[b]), eps);
      const Mat att = attention(ctx.affine({blk, Role::kQ}, h), ctx.affine({blk, Role::kK}, h),
                                ctx.affine({blk, Role::kV}, h), cfg.n_heads);
      const Mat o = ctx.affine({blk, Role::kO}, att);
      for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] += o.v[i];
      Mat up = ctx.affine({blk, Role::kFfUp}, rmsnorm(x, widen(model.ffn_norm[b]), eps));
      for (auto& u : up.v) u = silu(u);
      const Mat down = ctx.affine({blk, Role::kFfDown}, up);
      for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] += down.v[i];
    }
    const Mat out = ctx.affine({static_cast<std::uint16_t>(cfg.n_layers), Role::kLmHead},
                               rmsnorm(x, widen(model.final_norm), eps));
    std::copy(out.v.begin(), out.v.end(),
              logits.v.begin() + static_cast<std::ptrdiff_t>(s * tokens.seq * logits.cols));
  }
  return logits;
}

double loss(const layerserve::BaseModel& model, const layerserve::AdapterState& adapter,
            const Params& params, const layerserve::TokenBatch& tokens,
            const std::vector<std::int32_t>& targets) {
  return cross_entropy(forward(model, &adapter, &params, tokens), targets);
}

Params loss_gradient(const layerserve::BaseModel& model,
                     const layerserve::AdapterState& adapter,
                     const layerserve::TokenBatch& tokens,
                     const std::vector<std::int32_t>& targets, double step) {
  Params p = adapter_params(adapter);
  Params g;
  for (auto& [name, values] : p) {
    std::vector<double>& out = g[name];
    out.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double keep = values[i];
      values[i] = keep + step;
      const double up = loss(model, adapter, p, tokens, targets);
      values[i] = keep - step;
      const double down = loss(model, adapter, p, tokens, targets);
      values[i] = keep;
      out[i] = (up - down) / (2.0 * step);
    }
  }
  return g;
}

std::vector<double> numeric_gradient(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double step) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f(x);
    x[i] = keep - step;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

JobBytes lora_finetune_bytes(const layerserve::ModelConfig& c, std::size_t batch,
                             std::size_t seq, int rank,
                             const std::set<layerserve::Role>& targets) {
  using layerserve::Role;
  const std::uint64_t d = c.d_model, ff = c.d_ff, v = c.vocab_size, L = c.n_layers;
  const std::uint64_t T = batch * seq, r = static_cast<std::uint64_t>(rank);
  auto dims = [&](Role role) -> std::pair<std::uint64_t, std::uint64_t> {
    switch (role) {
      case Role::kFfUp: return {d, ff};
      case Role::kFfDown: return {ff, d};
      case Role::kLmHead: return {d, v};
      default: return {d, d};
    }
  };
  JobBytes b;
  b.weights = 4 * (v * d + (2 * L + 1) * d);
  std::uint64_t saved = T * d + L * (5 * T * d + T * ff +
                                     batch * c.n_heads * seq * seq);
  for (Role role : targets) {
    const auto [in, out] = dims(role);
    const std::uint64_t n = role == Role::kLmHead ? 1 : L;
    b.adapter += 4 * n * r * (in + out);
    saved += n * T * in;
  }
  b.optimizer = 2 * b.adapter;
  b.saved = 4 * saved;
  b.transient = 4 * T * std::max({d, ff, v});
  return b;
}

}  // namespace oracle
