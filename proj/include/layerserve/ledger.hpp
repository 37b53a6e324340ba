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

#ifndef LAYERSERVE_LEDGER_HPP_
#define LAYERSERVE_LEDGER_HPP_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <span>
#include <string>

namespace layerserve {

enum class Category : std::size_t {
  kWeights = 0,
  kAdapter,
  kKVCache,
  kOptimizer,
  kSavedActivations,
  kTransientBuffer,
};

inline constexpr std::size_t kCategoryCount = 6;
inline constexpr Category kAllCategories[] = {
    Category::kWeights,   Category::kAdapter,          Category::kKVCache,
    Category::kOptimizer, Category::kSavedActivations, Category::kTransientBuffer};

std::string category_name(Category c);

struct LedgerSnapshot {
  std::string owner;
  std::array<std::uint64_t, kCategoryCount> current{};
  std::array<std::uint64_t, kCategoryCount> peak{};
  double timestamp = 0.0;  // seconds since the ledger was created

  std::uint64_t bytes(Category c) const {
    return current[static_cast<std::size_t>(c)];
  }
  std::uint64_t peak_bytes(Category c) const {
    return peak[static_cast<std::size_t>(c)];
  }
  std::uint64_t total() const;
  std::uint64_t total_excluding(Category c) const { return total() - bytes(c); }
  /// Sum of per-category high-water marks.
  std::uint64_t peak_total() const;
};

/// Exact byte accounting for one component (the executor or one client).
/// Thread-safe; every update touches exactly one category.
class MemoryLedger {
 public:
  explicit MemoryLedger(std::string owner);

  void allocate(Category c, std::uint64_t bytes);
  /// Throws std::logic_error when releasing more than is held.
  void release(Category c, std::uint64_t bytes);
  /// Replaces a category's current value (used for resizable buffers).
  void set(Category c, std::uint64_t bytes);

  LedgerSnapshot snapshot() const;
  const std::string& owner() const { return owner_; }

 private:
  std::string owner_;
  mutable std::mutex mu_;
  LedgerSnapshot state_;
  double start_;
};

/// True when the summed current totals fit in `budget_bytes`.
bool capacity_check(std::uint64_t budget_bytes,
                    std::span<const LedgerSnapshot> ledgers);

struct PackingReport {
  std::uint64_t replicated_jobs = 0;
  std::uint64_t shared_jobs = 0;

  double ratio() const {
    return replicated_jobs
               ? static_cast<double>(shared_jobs) /
                     static_cast<double>(replicated_jobs)
               : 0.0;
  }
};

/// Pooled budget: replicated = floor(budget / (model + job)),
/// shared = floor((budget - model) / job).
PackingReport packing_report(double model_bytes, double per_job_bytes,
                             double budget_bytes);

/// Whole jobs per device, no model spanning devices. The replicated baseline
/// puts a model copy next to every job; the shared deployment holds one model
/// copy on device 0 and fills the rest with clients.
PackingReport packing_report_per_device(double model_bytes,
                                        double per_job_bytes,
                                        double device_bytes, int devices);

/// CSV rows: component,category,bytes,peak_bytes,timestamp
void write_ledger_csv(std::ostream& os, std::span<const LedgerSnapshot> ledgers,
                      bool header = true);

}  // namespace layerserve

#endif  // LAYERSERVE_LEDGER_HPP_
