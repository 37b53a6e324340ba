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

#include "layerserve/ledger.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace layerserve {
namespace {

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

std::uint64_t floor_div(double num, double den) {
  if (num <= 0.0 || den <= 0.0) return 0;
  return static_cast<std::uint64_t>(std::floor(num / den));
}

}  // namespace

std::string category_name(Category c) {
  switch (c) {
    case Category::kWeights: return "weights";
    case Category::kAdapter: return "adapter";
    case Category::kKVCache: return "kv_cache";
    case Category::kOptimizer: return "optimizer";
    case Category::kSavedActivations: return "saved_activations";
    case Category::kTransientBuffer: return "transient_buffer";
  }
  return "?";
}

std::uint64_t LedgerSnapshot::total() const {
  std::uint64_t t = 0;
  for (auto v : current) t += v;
  return t;
}

std::uint64_t LedgerSnapshot::peak_total() const {
  std::uint64_t t = 0;
  for (auto v : peak) t += v;
  return t;
}

MemoryLedger::MemoryLedger(std::string owner)
    : owner_(std::move(owner)), start_(now_seconds()) {
  state_.owner = owner_;
}

void MemoryLedger::allocate(Category c, std::uint64_t bytes) {
  std::lock_guard lock(mu_);
  const auto i = static_cast<std::size_t>(c);
  state_.current[i] += bytes;
  state_.peak[i] = std::max(state_.peak[i], state_.current[i]);
}

void MemoryLedger::release(Category c, std::uint64_t bytes) {
  std::lock_guard lock(mu_);
  const auto i = static_cast<std::size_t>(c);
  if (bytes > state_.current[i]) {
    throw std::logic_error("ledger " + owner_ + ": releasing " +
                           std::to_string(bytes) + " bytes of " +
                           category_name(c) + " with only " +
                           std::to_string(state_.current[i]) + " held");
  }
  state_.current[i] -= bytes;
}

void MemoryLedger::set(Category c, std::uint64_t bytes) {
  std::lock_guard lock(mu_);
  const auto i = static_cast<std::size_t>(c);
  state_.current[i] = bytes;
  state_.peak[i] = std::max(state_.peak[i], bytes);
}

LedgerSnapshot MemoryLedger::snapshot() const {
  std::lock_guard lock(mu_);
  LedgerSnapshot s = state_;
  s.timestamp = now_seconds() - start_;
  return s;
}

bool capacity_check(std::uint64_t budget_bytes,
                    std::span<const LedgerSnapshot> ledgers) {
  std::uint64_t sum = 0;
  for (const auto& l : ledgers) sum += l.total();
  return sum <= budget_bytes;
}

PackingReport packing_report(double model_bytes, double per_job_bytes,
                             double budget_bytes) {
  if (model_bytes <= 0 || per_job_bytes <= 0 || budget_bytes <= 0) {
    throw std::invalid_argument("packing_report: inputs must be positive");
  }
  PackingReport r;
  r.replicated_jobs = floor_div(budget_bytes, model_bytes + per_job_bytes);
  r.shared_jobs = budget_bytes < model_bytes
                      ? 0
                      : floor_div(budget_bytes - model_bytes, per_job_bytes);
  return r;
}

PackingReport packing_report_per_device(double model_bytes,
                                        double per_job_bytes,
                                        double device_bytes, int devices) {
  if (model_bytes <= 0 || per_job_bytes <= 0 || device_bytes <= 0 ||
      devices <= 0) {
    throw std::invalid_argument("packing_report: inputs must be positive");
  }
  PackingReport r;
  r.replicated_jobs = static_cast<std::uint64_t>(devices) *
                      floor_div(device_bytes, model_bytes + per_job_bytes);
  if (device_bytes >= model_bytes) {
    r.shared_jobs = floor_div(device_bytes - model_bytes, per_job_bytes) +
                    static_cast<std::uint64_t>(devices - 1) *
                        floor_div(device_bytes, per_job_bytes);
  }
  return r;
}

void write_ledger_csv(std::ostream& os, std::span<const LedgerSnapshot> ledgers,
                      bool header) {
  if (header) os << "component,category,bytes,peak_bytes,timestamp\n";
  for (const auto& l : ledgers) {
    for (Category c : kAllCategories) {
      os << l.owner << ',' << category_name(c) << ',' << l.bytes(c) << ','
         << l.peak_bytes(c) << ',' << l.timestamp << '\n';
    }
  }
}

}  // namespace layerserve
