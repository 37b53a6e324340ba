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

#include "layerserve/policy_sim.hpp"

#include <algorithm>
#include <condition_variable>
#include <mutex>
#include <numeric>
#include <thread>

namespace layerserve {

double SimClientResult::mean_latency_ms() const {
  if (iteration_latency.empty()) return 0.0;
  double total = 0.0;
  for (Nanos n : iteration_latency) total += static_cast<double>(n.count());
  return total / static_cast<double>(iteration_latency.size()) / 1e6;
}

double SimResult::throughput() const {
  if (makespan.count() <= 0) return 0.0;
  std::size_t tokens = 0;
  for (const auto& c : clients) tokens += c.tokens;
  return static_cast<double>(tokens) / (static_cast<double>(makespan.count()) / 1e9);
}

bool SimResult::ok() const {
  return std::all_of(clients.begin(), clients.end(),
                     [](const SimClientResult& c) { return c.error.empty(); });
}

namespace {

enum class Phase { kRunning, kSubmitted, kDone };

struct Slot {
  Phase phase = Phase::kRunning;
  Nanos clock{0};
  Nanos arrival{0};
  Nanos iter_start{0};
  bool enqueued = false;
  bool reply_ready = false;
  Status status;
  std::vector<float> in;
  std::vector<float> out;
  PendingRequest request;
  SimClientResult* result = nullptr;
  const SimClient* spec = nullptr;
};

struct World {
  std::mutex mu;
  std::condition_variable cv;
  LayerQueues queues;
  std::vector<Slot> slots;
  Nanos completion{0};
  bool aborted = false;
};

class SimChannel : public Channel {
 public:
  SimChannel(World& world, std::size_t index) : world_(world), index_(index) {}

  void open(std::uint32_t client_id, JobKind kind) override {
    std::lock_guard lock(world_.mu);
    world_.queues.register_client(client_id, kind);
    client_id_ = client_id;
  }
  void close() override {
    std::lock_guard lock(world_.mu);
    world_.queues.deregister_client(client_id_);
  }

  Tensor call(const LayerAddress& layer, Pass pass, const Tensor& input,
              std::size_t out_width) override {
    std::unique_lock lock(world_.mu);
    if (world_.aborted) throw TransportError("simulation aborted");
    Slot& s = world_.slots[index_];
    const std::size_t rows = input.rows();
    s.in.assign(input.data().begin(), input.data().end());
    s.out.assign(rows * out_width, 0.0f);
    s.arrival = s.clock + s.spec->think_base +
                s.spec->think_per_token * static_cast<std::int64_t>(rows);
    PendingRequest& r = s.request;
    r = PendingRequest{};
    r.client_id = client_id_;
    r.request_id = next_request_id();
    r.layer = layer;
    r.pass = pass;
    r.token_count = static_cast<std::uint32_t>(rows);
    r.width = static_cast<std::uint32_t>(input.cols());
    r.input = s.in;
    r.output = s.out;
    r.arrival = s.arrival;
    Slot* sp = &s;
    World* w = &world_;
    const bool marks_iteration = pass == Pass::kForward && layer.role == Role::kLmHead;
    r.done = [sp, w, marks_iteration, rows](const Status& st) {
      sp->status = st;
      sp->clock = w->completion;
      if (marks_iteration) {
        sp->result->iteration_latency.push_back(w->completion - sp->iter_start);
        sp->result->tokens += rows;
        sp->iter_start = w->completion;
      }
      sp->reply_ready = true;
      sp->phase = Phase::kRunning;
    };
    s.enqueued = false;
    s.reply_ready = false;
    s.phase = Phase::kSubmitted;
    world_.cv.notify_all();
    world_.cv.wait(lock, [&] { return s.reply_ready || world_.aborted; });
    if (!s.reply_ready) throw TransportError("simulation aborted");
    if (!s.status.ok) throw ExecutorRejected(s.status.code, s.status.message);
    return Tensor({rows, out_width}, std::move(s.out));
  }

  std::uint64_t payload_copies() const override { return 0; }
  std::uint64_t buffer_bytes() const override { return 0; }
  std::string name() const override { return "sim"; }

 private:
  World& world_;
  std::size_t index_;
  std::uint32_t client_id_ = 0;
};

void drive(const BaseModel& model, const SimClient& spec, SimChannel& channel,
           std::uint32_t id, SimClientResult& out) {
  const JobConfig& jc = spec.job.config;
  ClientJob job(jc, virtualize(model, all_base_layers(model.config), &channel, id),
                channel, id);
  job.keep_outputs(true);
  job.start();
  const int vocab = model.config.vocab_size;
  if (jc.kind == JobKind::kFinetune) {
    for (int s = 0; s < jc.steps; ++s) {
      Dataset d = training_batch(jc, vocab, s);
      out.losses.push_back(job.train_step(d.tokens, d.targets));
    }
  } else {
    for (std::size_t r = 0; r < spec.job.rounds; ++r) {
      auto ids = job.generate(job_prompt(jc, vocab, r), jc.gen_tokens);
      out.generated.insert(out.generated.end(), ids.begin(), ids.end());
    }
  }
  job.finish();
  out.outputs = job.outputs();
}

}  // namespace

SimResult simulate(std::shared_ptr<const BaseModel> model,
                   const BatchPolicy& policy,
                   const std::vector<SimClient>& clients, const SimCost& cost) {
  SimResult result;
  result.mode = policy.mode;
  result.clients.resize(clients.size());
  LayerHost host(model);
  World world;
  world.slots.resize(clients.size());
  std::vector<std::unique_ptr<SimChannel>> channels;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    world.slots[i].spec = &clients[i];
    world.slots[i].result = &result.clients[i];
    result.clients[i].name = clients[i].job.config.name;
    channels.push_back(std::make_unique<SimChannel>(world, i));
  }

  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        drive(*model, clients[i], *channels[i], static_cast<std::uint32_t>(i + 1),
              result.clients[i]);
      } catch (const std::exception& e) {
        result.clients[i].error = e.what();
      }
      std::lock_guard lock(world.mu);
      world.slots[i].phase = Phase::kDone;
      result.clients[i].finish = world.slots[i].clock;
      world.cv.notify_all();
    });
  }

  std::string failure;
  {
    std::unique_lock lock(world.mu);
    Nanos now{0};
    Nanos free_at{0};
    auto settled = [&] {
      return std::all_of(world.slots.begin(), world.slots.end(),
                         [](const Slot& s) { return s.phase != Phase::kRunning; });
    };
    while (true) {
      world.cv.wait(lock, settled);
      if (std::all_of(world.slots.begin(), world.slots.end(),
                      [](const Slot& s) { return s.phase == Phase::kDone; })) {
        break;
      }
      // Arrivals up to `now`, in (time, client) order.
      std::vector<std::size_t> due;
      for (std::size_t i = 0; i < world.slots.size(); ++i) {
        const Slot& s = world.slots[i];
        if (s.phase == Phase::kSubmitted && !s.enqueued && s.arrival <= now) due.push_back(i);
      }
      std::stable_sort(due.begin(), due.end(), [&](std::size_t a, std::size_t b) {
        return world.slots[a].arrival < world.slots[b].arrival;
      });
      for (std::size_t i : due) {
        world.slots[i].enqueued = true;
        PendingRequest r = world.slots[i].request;
        world.queues.push(std::move(r));
      }

      std::optional<Nanos> wake;
      if (free_at <= now && !world.queues.empty()) {
        ScheduleDecision d = schedule(policy, world.queues, now);
        if (d.batch) {
          result.metrics.record(*d.batch, now);
          world.completion =
              now + cost.overhead + cost.per_token * static_cast<std::int64_t>(d.batch->tokens());
          host.execute(*d.batch);
          free_at = world.completion;
          world.cv.notify_all();
          continue;
        }
        wake = d.wake_at;
      }
      std::optional<Nanos> next;
      auto consider = [&](Nanos t) {
        if (t > now && (!next || t < *next)) next = t;
      };
      for (const Slot& s : world.slots) {
        if (s.phase == Phase::kSubmitted && !s.enqueued) consider(s.arrival);
      }
      if (free_at > now) consider(free_at);
      if (wake) consider(std::max(*wake, now + Nanos(1)));
      if (!next) {
        failure = "simulation stalled at " + std::to_string(now.count()) + " ns";
        break;
      }
      now = *next;
    }
    result.makespan = now;
    for (const Slot& s : world.slots) result.makespan = std::max(result.makespan, s.clock);
    if (!failure.empty()) {
      world.aborted = true;
      world.cv.notify_all();
    }
  }
  for (auto& t : threads) t.join();
  if (!failure.empty()) throw std::runtime_error(failure);
  return result;
}

std::vector<SimClient> heterogeneous_clients(const ModelConfig& config,
                                             std::uint64_t seed) {
  // (batch, prompt_len, think_base_us): one small fast client, a spread of
  // medium ones, and a few slow, wide ones.
  struct Shape {
    std::size_t batch;
    std::size_t prompt;
    int think_us;
  };
  const Shape shapes[] = {{1, 4, 50},   {1, 8, 300},  {2, 6, 500},  {2, 12, 800},
                          {3, 5, 1200}, {4, 10, 1600}, {4, 16, 2400}, {6, 8, 3200}};
  std::vector<SimClient> out;
  std::size_t i = 0;
  for (const Shape& s : shapes) {
    SimClient c;
    JobConfig& j = c.job.config;
    j.name = "inf" + std::to_string(i);
    j.kind = JobKind::kInference;
    j.batch = s.batch;
    j.prompt_len = std::min<std::size_t>(s.prompt, static_cast<std::size_t>(config.max_seq) / 2);
    j.gen_tokens = 6;
    j.data_seed = seed * 100 + i;
    c.job.rounds = 1;
    c.think_base = std::chrono::microseconds(s.think_us);
    out.push_back(std::move(c));
    ++i;
  }
  return out;
}

}  // namespace layerserve
