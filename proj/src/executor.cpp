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

#include "layerserve/executor.hpp"

#include <algorithm>
#include <bit>
#include <ostream>
#include <stdexcept>

#include "layerserve/ops.hpp"

namespace layerserve {

std::string mode_name(BatchMode mode) {
  switch (mode) {
    case BatchMode::kNoLockstep: return "nolockstep";
    case BatchMode::kLockstep: return "lockstep";
    case BatchMode::kOpportunistic: return "opportunistic";
  }
  return "?";
}

BatchMode parse_mode(const std::string& name) {
  if (name == "nolockstep" || name == "no-lockstep") return BatchMode::kNoLockstep;
  if (name == "lockstep") return BatchMode::kLockstep;
  if (name == "opportunistic") return BatchMode::kOpportunistic;
  throw std::invalid_argument("unknown batch policy '" + name + "'");
}

Nanos BatchPolicy::wait_budget(std::size_t tokens) const {
  const Nanos linear = wait_per_token * static_cast<std::int64_t>(tokens);
  return std::max(Nanos{0}, std::min(wait_cap, linear));
}

std::size_t Batch::tokens() const {
  std::size_t t = 0;
  for (const auto& m : members) t += m.token_count;
  return t;
}

void LayerQueues::register_client(std::uint32_t id, JobKind kind) {
  clients_[id] = kind;
}

void LayerQueues::deregister_client(std::uint32_t id) { clients_.erase(id); }

JobKind LayerQueues::kind_of(std::uint32_t id) const {
  auto it = clients_.find(id);
  return it == clients_.end() ? JobKind::kInference : it->second;
}

std::set<std::uint32_t> LayerQueues::active_clients() const {
  std::set<std::uint32_t> out;
  for (const auto& [id, kind] : clients_) out.insert(id);
  return out;
}

void LayerQueues::push(PendingRequest request) {
  if (!clients_.contains(request.client_id)) {
    clients_[request.client_id] = JobKind::kInference;
  }
  queues_[{request.layer, request.pass}].push_back(std::move(request));
}

bool LayerQueues::empty() const {
  return std::all_of(queues_.begin(), queues_.end(),
                     [](const auto& kv) { return kv.second.empty(); });
}

std::size_t LayerQueues::size() const {
  std::size_t n = 0;
  for (const auto& [k, q] : queues_) n += q.size();
  return n;
}

std::set<std::uint32_t> LayerQueues::waiting_clients() const {
  std::set<std::uint32_t> out;
  for (const auto& [k, q] : queues_) {
    for (const auto& r : q) out.insert(r.client_id);
  }
  return out;
}

std::vector<PendingRequest> LayerQueues::drain() {
  std::vector<PendingRequest> out;
  for (auto& [k, q] : queues_) {
    for (auto& r : q) out.push_back(std::move(r));
    q.clear();
  }
  return out;
}

namespace {

Batch take(std::deque<PendingRequest>& q, const QueueKey& key, Nanos now,
           std::size_t max_tokens) {
  Batch b;
  b.key = key;
  b.formed_at = now;
  std::size_t tokens = 0;
  while (!q.empty()) {
    const std::size_t next = q.front().token_count;
    if (!b.members.empty() && tokens + next > max_tokens) break;
    tokens += next;
    b.members.push_back(std::move(q.front()));
    q.pop_front();
  }
  return b;
}

Batch take_one(std::deque<PendingRequest>& q, const QueueKey& key, Nanos now) {
  Batch b;
  b.key = key;
  b.formed_at = now;
  b.members.push_back(std::move(q.front()));
  q.pop_front();
  return b;
}

Batch take_all(std::deque<PendingRequest>& q, const QueueKey& key, Nanos now) {
  return take(q, key, now, static_cast<std::size_t>(-1));
}

bool all_waiting(const LayerQueues& queues) {
  const auto active = queues.active_clients();
  if (active.empty()) return false;
  const auto waiting = queues.waiting_clients();
  return std::includes(waiting.begin(), waiting.end(), active.begin(),
                       active.end());
}

}  // namespace

ScheduleDecision schedule(const BatchPolicy& policy, LayerQueues& queues,
                          Nanos now) {
  ScheduleDecision d;
  auto& qs = queues.queues();

  for (auto& [key, q] : qs) {
    if (key.pass == Pass::kNoiseEffect && !q.empty()) {
      d.batch = take_one(q, key, now);
      return d;
    }
  }

  // Queue whose head arrived first, among those satisfying `pred`.
  auto oldest = [&](auto pred) -> std::map<QueueKey, std::deque<PendingRequest>>::iterator {
    auto best = qs.end();
    for (auto it = qs.begin(); it != qs.end(); ++it) {
      if (it->second.empty() || !pred(it->first, it->second)) continue;
      if (best == qs.end() ||
          it->second.front().arrival < best->second.front().arrival) {
        best = it;
      }
    }
    return best;
  };
  auto any = [](const QueueKey&, const std::deque<PendingRequest>&) { return true; };

  switch (policy.mode) {
    case BatchMode::kNoLockstep: {
      auto it = oldest(any);
      if (it != qs.end()) d.batch = take_one(it->second, it->first, now);
      return d;
    }
    case BatchMode::kLockstep: {
      const auto active = queues.active_clients();
      auto complete = [&](const QueueKey&, const std::deque<PendingRequest>& q) {
        std::set<std::uint32_t> ids;
        for (const auto& r : q) ids.insert(r.client_id);
        return std::includes(ids.begin(), ids.end(), active.begin(),
                             active.end());
      };
      auto it = oldest(complete);
      if (it != qs.end()) {
        d.batch = take_all(it->second, it->first, now);
        return d;
      }
      // Every client is blocked on some other layer: nobody can complete a
      // queue, so release the oldest one rather than deadlock.
      if (all_waiting(queues)) {
        it = oldest(any);
        d.batch = take_all(it->second, it->first, now);
        d.batch->forced = true;
      }
      return d;
    }
    case BatchMode::kOpportunistic: {
      auto deadline = [&](const std::deque<PendingRequest>& q) {
        std::size_t smallest = q.front().token_count;
        for (const auto& r : q) smallest = std::min<std::size_t>(smallest, r.token_count);
        return q.front().arrival + policy.wait_budget(smallest);
      };
      const bool everyone_waiting = all_waiting(queues);
      auto ready = [&](const QueueKey&, const std::deque<PendingRequest>& q) {
        if (everyone_waiting || now >= deadline(q)) return true;
        std::size_t tokens = 0;
        for (const auto& r : q) tokens += r.token_count;
        return tokens >= policy.max_batch_tokens;
      };
      auto it = oldest(ready);
      if (it != qs.end()) {
        d.batch = take(it->second, it->first, now, policy.max_batch_tokens);
        return d;
      }
      for (const auto& [key, q] : qs) {
        if (q.empty()) continue;
        const Nanos t = deadline(q);
        if (!d.wake_at || t < *d.wake_at) d.wake_at = t;
      }
      return d;
    }
  }
  return d;
}

void ExecutorMetrics::record(const Batch& batch, Nanos now) {
  auto& s = layers_[batch.key];
  ++s.dispatches;
  s.requests += batch.members.size();
  s.tokens += batch.tokens();
  ++s.batch_size_histogram[batch.members.size()];
  if (batch.forced) ++forced_;
  for (const auto& m : batch.members) {
    const Nanos wait = std::max(Nanos{0}, now - m.arrival);
    max_wait_ = std::max(max_wait_, wait);
    const auto us = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(wait).count());
    ++wait_hist_[std::bit_ceil(us + 1)];
  }
}

std::uint64_t ExecutorMetrics::dispatches() const {
  std::uint64_t n = 0;
  for (const auto& [k, s] : layers_) n += s.dispatches;
  return n;
}

double ExecutorMetrics::mean_batch_size() const {
  std::uint64_t d = 0;
  std::uint64_t r = 0;
  for (const auto& [k, s] : layers_) {
    if (k.pass == Pass::kNoiseEffect) continue;
    d += s.dispatches;
    r += s.requests;
  }
  return d ? static_cast<double>(r) / static_cast<double>(d) : 0.0;
}

void ExecutorMetrics::write_csv(std::ostream& os) const {
  os << "section,layer,pass,key,value\n";
  for (const auto& [k, s] : layers_) {
    const std::string prefix = to_string(k.layer) + "," + pass_name(k.pass) + ",";
    os << "dispatch," << prefix << "dispatches," << s.dispatches << '\n';
    os << "dispatch," << prefix << "requests," << s.requests << '\n';
    os << "dispatch," << prefix << "tokens," << s.tokens << '\n';
    for (const auto& [size, n] : s.batch_size_histogram) {
      os << "batch_size," << prefix << size << ',' << n << '\n';
    }
  }
  for (const auto& [bucket, n] : wait_hist_) {
    os << "wait_us,all,all," << bucket << ',' << n << '\n';
  }
  os << "summary,all,all,mean_batch_size," << mean_batch_size() << '\n';
  os << "summary,all,all,forced_lockstep," << forced_ << '\n';
}

LayerHost::LayerHost(std::shared_ptr<const BaseModel> model,
                     bool memory_optimized_backward)
    : model_(std::move(model)),
      memory_optimized_(memory_optimized_backward),
      ledger_("executor") {
  std::uint64_t bytes = 0;
  for (const auto& [addr, p] : model_->layers) bytes += p.bytes();
  ledger_.allocate(Category::kWeights, bytes);
}

bool LayerHost::hosts(const LayerAddress& layer) const {
  return model_->layers.contains(layer);
}

const AffineParams& LayerHost::params(const LayerAddress& layer) const {
  return model_->layer(layer);
}

Status LayerHost::validate(const PendingRequest& r) const {
  if (!hosts(r.layer)) {
    return Status::Error(wire::ErrorCode::kUnknownLayer,
                         "layer " + to_string(r.layer) + " is not hosted");
  }
  const auto& p = params(r.layer);
  const std::size_t in_w = r.pass == Pass::kBackward ? p.d_out() : p.d_in();
  const std::size_t out_w = r.pass == Pass::kBackward ? p.d_in() : p.d_out();
  if (r.width != in_w) {
    return Status::Error(wire::ErrorCode::kWidthMismatch,
                         "layer " + to_string(r.layer) + " " + pass_name(r.pass) +
                             " expects width " + std::to_string(in_w) + ", got " +
                             std::to_string(r.width));
  }
  const std::size_t t = r.token_count;
  if (r.input.size() != t * in_w || r.output.size() != t * out_w) {
    return Status::Error(wire::ErrorCode::kBadRequest,
                         "request buffers do not match token count " +
                             std::to_string(t));
  }
  return Status::Ok();
}

void LayerHost::execute(Batch& batch) {
  std::vector<PendingRequest*> good;
  for (auto& m : batch.members) {
    Status s = validate(m);
    if (s.ok) {
      good.push_back(&m);
    } else if (m.done) {
      m.done(s);
    }
  }
  if (good.empty()) return;

  const AffineParams& p = params(batch.key.layer);
  const Pass pass = batch.key.pass;
  const std::size_t in_w = pass == Pass::kBackward ? p.d_out() : p.d_in();
  const std::size_t out_w = pass == Pass::kBackward ? p.d_in() : p.d_out();
  std::size_t rows = 0;
  for (auto* m : good) rows += m->token_count;

  // Token flattening: every member's rows stacked into one [rows, in_w] input.
  std::vector<float> flat;
  flat.reserve(rows * in_w);
  for (auto* m : good) flat.insert(flat.end(), m->input.begin(), m->input.end());
  Tensor x({rows, in_w}, std::move(flat));
  ledger_.set(Category::kTransientBuffer, (rows * in_w + rows * out_w) * sizeof(float));

  Tensor y;
  switch (pass) {
    case Pass::kForward: y = affine_forward(x, p); break;
    case Pass::kBackward: y = affine_backward_input(x, p); break;
    case Pass::kNoiseEffect: y = matmul(x, p.weight); break;
  }

  if (!memory_optimized_) {
    std::lock_guard lock(saved_mu_);
    for (auto* m : good) {
      auto& stack = saved_[{m->client_id, m->layer}];
      if (pass == Pass::kForward && m->save_for_backward) {
        const std::uint64_t b =
            static_cast<std::uint64_t>(m->token_count) * (in_w + out_w) * sizeof(float);
        stack.push_back(b);
        ledger_.allocate(Category::kSavedActivations, b);
      } else if (pass == Pass::kBackward && !stack.empty()) {
        ledger_.release(Category::kSavedActivations, stack.back());
        stack.pop_back();
      }
    }
  }

  std::size_t row = 0;
  for (auto* m : good) {
    const std::size_t n = m->token_count * out_w;
    auto src = y.data().subspan(row * out_w, n);
    std::copy(src.begin(), src.end(), m->output.begin());
    row += m->token_count;
  }
  ledger_.set(Category::kTransientBuffer, 0);
  for (auto* m : good) {
    if (m->done) m->done(Status::Ok());
  }
}

ExecutorService::ExecutorService(std::shared_ptr<LayerHost> host,
                                 BatchPolicy policy)
    : host_(std::move(host)),
      policy_(policy),
      epoch_(std::chrono::steady_clock::now()) {}

ExecutorService::~ExecutorService() { stop(); }

Nanos ExecutorService::now() const {
  return std::chrono::duration_cast<Nanos>(std::chrono::steady_clock::now() -
                                           epoch_);
}

void ExecutorService::start() {
  std::lock_guard lock(mu_);
  if (running_) return;
  running_ = true;
  stopping_ = false;
  thread_ = std::thread([this] { loop(); });
}

void ExecutorService::stop() {
  std::vector<PendingRequest> orphans;
  {
    std::lock_guard lock(mu_);
    if (!running_) return;
    stopping_ = true;
    orphans = queues_.drain();
  }
  cv_.notify_all();
  thread_.join();
  {
    std::lock_guard lock(mu_);
    running_ = false;
  }
  for (auto& r : orphans) {
    if (r.done) r.done(Status::Error(wire::ErrorCode::kShutdown, "executor stopped"));
  }
}

void ExecutorService::register_client(std::uint32_t id, JobKind kind) {
  {
    std::lock_guard lock(mu_);
    queues_.register_client(id, kind);
  }
  cv_.notify_all();
}

void ExecutorService::deregister_client(std::uint32_t id) {
  {
    std::lock_guard lock(mu_);
    queues_.deregister_client(id);
  }
  cv_.notify_all();
}

void ExecutorService::submit(PendingRequest request) {
  Status s = host_->validate(request);
  if (!s.ok) {
    if (request.done) request.done(s);
    return;
  }
  {
    std::unique_lock lock(mu_);
    if (stopping_ || !running_) {
      lock.unlock();
      if (request.done) {
        request.done(Status::Error(wire::ErrorCode::kShutdown, "executor not running"));
      }
      return;
    }
    request.arrival = now();
    request.save_for_backward = queues_.registered(request.client_id) &&
                                queues_.kind_of(request.client_id) == JobKind::kFinetune;
    queues_.push(std::move(request));
  }
  cv_.notify_all();
}

ExecutorMetrics ExecutorService::metrics() const {
  std::lock_guard lock(mu_);
  return metrics_;
}

void ExecutorService::loop() {
  std::unique_lock lock(mu_);
  while (!stopping_) {
    ScheduleDecision d = schedule(policy_, queues_, now());
    if (d.batch) {
      metrics_.record(*d.batch, now());
      Batch batch = std::move(*d.batch);
      lock.unlock();
      host_->execute(batch);
      lock.lock();
      continue;
    }
    if (d.wake_at) {
      cv_.wait_until(lock, epoch_ + *d.wake_at);
    } else {
      cv_.wait(lock);
    }
  }
}

}  // namespace layerserve
