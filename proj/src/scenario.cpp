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

#include "layerserve/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "layerserve/rng.hpp"

namespace layerserve {
namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Line numbers of sections and keys; ptree drops them.
struct LineIndex {
  std::map<std::string, int> sections;
  std::map<std::pair<std::string, std::string>, int> keys;

  explicit LineIndex(const std::string& text) {
    std::istringstream is(text);
    std::string line, section;
    for (int n = 1; std::getline(is, line); ++n) {
      const std::string t = trim(line);
      if (t.empty() || t[0] == ';' || t[0] == '#') continue;
      if (t.front() == '[' && t.back() == ']') {
        section = trim(t.substr(1, t.size() - 2));
        sections.emplace(section, n);
      } else if (auto eq = t.find('='); eq != std::string::npos) {
        keys.emplace(std::pair{section, trim(t.substr(0, eq))}, n);
      }
    }
  }
};

class Section {
 public:
  Section(const std::string& source, const LineIndex& lines, std::string name,
          const pt::ptree* tree)
      : source_(source), lines_(lines), name_(std::move(name)), tree_(tree) {}

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    int line = 0;
    if (auto it = lines_.keys.find({name_, key}); it != lines_.keys.end()) {
      line = it->second;
    } else if (auto s = lines_.sections.find(name_); s != lines_.sections.end()) {
      line = s->second;
    }
    throw ConfigError(source_ + ":" + std::to_string(line) + ": [" + name_ + "] " +
                      (key.empty() ? "" : key + ": ") + msg);
  }

  bool has(const std::string& key) const {
    return tree_ && tree_->find(key) != tree_->not_found();
  }

  std::string str(const std::string& key, const std::string& def) {
    used_.insert(key);
    if (!has(key)) return def;
    return trim(tree_->find(key)->second.data());
  }

  template <typename T>
  T num(const std::string& key, T def) {
    if (!has(key)) {
      used_.insert(key);
      return def;
    }
    const std::string v = str(key, "");
    std::istringstream is(v);
    T out{};
    is >> out;
    if (!is || !(is >> std::ws).eof()) fail(key, "expected a number, got '" + v + "'");
    return out;
  }

  bool flag(const std::string& key, bool def) {
    if (!has(key)) {
      used_.insert(key);
      return def;
    }
    const std::string v = lower(str(key, ""));
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(key, "expected a boolean, got '" + v + "'");
  }

  // Converts with `parse`, reporting its exception at this key's line.
  template <typename T, typename Fn>
  T parsed(const std::string& key, T def, Fn&& parse) {
    if (!has(key)) {
      used_.insert(key);
      return def;
    }
    const std::string v = str(key, "");
    try {
      return parse(v);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail(key, e.what());
    }
  }

  void reject_unknown() const {
    if (!tree_) return;
    for (const auto& [k, v] : *tree_) {
      if (!used_.contains(k)) fail(k, "unknown key");
    }
  }

 private:
  const std::string& source_;
  const LineIndex& lines_;
  std::string name_;
  const pt::ptree* tree_;
  std::set<std::string> used_;
};

std::set<Role> parse_targets(const std::string& text) {
  std::set<Role> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.insert(parse_role(item));
  }
  return out;
}

std::string targets_string(const std::set<Role>& targets) {
  std::string s;
  for (Role r : targets) s += (s.empty() ? "" : ",") + role_name(r);
  return s;
}

std::uint64_t derive_seed(std::uint64_t seed, std::size_t index, std::uint64_t salt) {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(index) * 16 + salt));
}

OptimizerKind parse_optimizer(const std::string& v) {
  const std::string s = lower(v);
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + v + "'");
}

const pt::ptree* child(const pt::ptree& root, const std::string& name) {
  for (const auto& [k, v] : root) {
    if (k == name) return &v;
  }
  return nullptr;
}

}  // namespace

const JobSpec* Scenario::find_job(const std::string& job_name) const {
  for (const auto& j : jobs) {
    if (j.config.name == job_name) return &j;
  }
  return nullptr;
}

void Scenario::reseed(std::uint64_t s) {
  seed = s;
  model.seed = s;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    JobConfig& c = jobs[i].config;
    c.adapter.seed = derive_seed(s, i, 1);
    c.data_seed = derive_seed(s, i, 2);
    c.privacy.seed = derive_seed(s, i, 3);
  }
}

Scenario load_scenario(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path + ":0: cannot open scenario file");
  return parse_scenario(is, path);
}

Scenario parse_scenario(std::istream& is, const std::string& source) {
  const std::string text{std::istreambuf_iterator<char>(is),
                         std::istreambuf_iterator<char>()};
  pt::ptree root;
  try {
    std::istringstream ts(text);
    pt::read_ini(ts, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  const LineIndex lines(text);
  {
    // read_ini drops sections without keys; restore them in file order.
    std::map<int, std::string> order;
    for (const auto& [name, line] : lines.sections) order.emplace(line, name);
    pt::ptree ordered;
    for (const auto& [k, v] : root) {
      if (!lines.sections.contains(k)) ordered.push_back({k, v});
    }
    for (const auto& [line, name] : order) {
      auto it = root.find(name);
      ordered.push_back({name, it == root.not_found() ? pt::ptree() : it->second});
    }
    root.swap(ordered);
  }

  Scenario sc;
  sc.source = source;
  for (const auto& [k, v] : root) {
    if (!v.data().empty()) {
      Section(source, lines, "", nullptr).fail(k, "keys must belong to a section");
    }
    if (k != "model" && k != "executor" && k != "run" && k != "packing" &&
        k.rfind("job.", 0) != 0) {
      Section(source, lines, k, &v).fail("", "unknown section");
    }
  }

  Section run(source, lines, "run", child(root, "run"));
  sc.name = run.str("name", sc.name);
  sc.seed = run.num<std::uint64_t>("seed", 1);
  const int default_steps = run.num<int>("steps", 10);
  sc.output_dir = run.str("output", sc.output_dir);
  sc.oracle = run.flag("oracle", true);
  {
    const std::string mode = lower(run.str("mode", "in-process"));
    if (mode == "in-process" || mode == "inprocess") {
      sc.multi_process = false;
    } else if (mode == "multi-process" || mode == "multiprocess") {
      sc.multi_process = true;
    } else {
      run.fail("mode", "expected in-process or multi-process, got '" + mode + "'");
    }
  }
  run.reject_unknown();

  Section m(source, lines, "model", child(root, "model"));
  ModelConfig& mc = sc.model;
  mc.n_layers = m.num("n_layers", mc.n_layers);
  mc.d_model = m.num("d_model", mc.d_model);
  mc.n_heads = m.num("n_heads", mc.n_heads);
  mc.d_ff = m.num("d_ff", mc.d_ff);
  mc.vocab_size = m.num("vocab_size", mc.vocab_size);
  mc.max_seq = m.num("max_seq", mc.max_seq);
  mc.seed = m.num<std::uint64_t>("seed", sc.seed);
  mc.bias = m.flag("bias", mc.bias);
  mc.norm_eps = m.num("norm_eps", mc.norm_eps);
  sc.checkpoint = m.str("checkpoint", "");
  try {
    mc.validate();
  } catch (const std::exception& e) {
    m.fail("", e.what());
  }
  m.reject_unknown();

  Section ex(source, lines, "executor", child(root, "executor"));
  BatchPolicy& pol = sc.executor.policy;
  pol.mode = ex.parsed("policy", pol.mode, parse_mode);
  pol.wait_per_token = std::chrono::nanoseconds(static_cast<std::int64_t>(
      ex.num("wait_per_token_us", 100.0) * 1e3));
  pol.wait_cap = std::chrono::nanoseconds(
      static_cast<std::int64_t>(ex.num("wait_cap_ms", 50.0) * 1e6));
  pol.max_batch_tokens = ex.num<std::size_t>("max_batch_tokens", pol.max_batch_tokens);
  sc.executor.endpoint = ex.parsed("endpoint", Endpoint{}, parse_endpoint);
  sc.executor.memory_optimized_backward =
      ex.flag("memory_optimized_backward", true);
  if (pol.wait_per_token.count() < 0 || pol.wait_cap.count() < 0) {
    ex.fail("", "wait times must be non-negative");
  }
  ex.reject_unknown();

  Section pk(source, lines, "packing", child(root, "packing"));
  sc.packing.model_gb = pk.num("model_gb", sc.packing.model_gb);
  sc.packing.device_gb = pk.num("device_gb", sc.packing.device_gb);
  sc.packing.devices = pk.num("devices", sc.packing.devices);
  pk.reject_unknown();

  std::size_t index = 0;
  for (const auto& [k, v] : root) {
    if (k.rfind("job.", 0) != 0) continue;
    Section j(source, lines, k, &v);
    const std::string base = k.substr(4);
    if (base.empty()) j.fail("", "job section needs a name");
    JobSpec spec;
    JobConfig& c = spec.config;
    c.kind = j.parsed("kind", JobKind::kFinetune, parse_job_kind);
    const bool ft = c.kind == JobKind::kFinetune;
    c.adapter.method =
        j.parsed("adapter", ft ? AdapterMethod::kLoRA : AdapterMethod::kNone, parse_method);
    c.adapter.rank = j.num("rank", 8);
    c.adapter.alpha = j.num("alpha", 16.0f);
    std::set<Role> def_targets;
    if (c.adapter.method == AdapterMethod::kLoRA) {
      def_targets = {Role::kQ, Role::kV, Role::kLmHead};
    } else if (c.adapter.method == AdapterMethod::kIA3) {
      def_targets = {Role::kK, Role::kV, Role::kFfUp};
    }
    c.adapter.targets = j.parsed("targets", def_targets, parse_targets);
    if (c.adapter.method == AdapterMethod::kNone) c.adapter.targets.clear();
    if (c.adapter.rank <= 0) j.fail("rank", "must be positive");
    c.optimizer.kind = j.parsed("optimizer", c.optimizer.kind, parse_optimizer);
    c.optimizer.lr = j.num("lr", c.optimizer.lr);
    c.batch = j.num<std::size_t>("batch", ft ? 2 : 1);
    c.seq = j.num<std::size_t>("seq", 16);
    c.steps = j.num("steps", ft ? default_steps : 0);
    spec.rounds = j.num<std::size_t>("rounds", 1);
    c.prompt_len = j.num<std::size_t>("prompt_len", 8);
    c.gen_tokens = j.num<std::size_t>("gen_tokens", 8);
    c.placement = j.parsed("placement", c.placement, parse_placement);
    c.decode_compute = j.parsed("decode_compute", c.decode_compute, parse_decode_compute);
    c.privacy.enabled = j.flag("privacy", false);
    c.privacy.k = j.num("privacy_k", c.privacy.k);
    c.privacy.scale = j.num("privacy_scale", c.privacy.scale);
    c.channel = lower(j.str("channel", "local"));
    if (c.channel != "local" && c.channel != "remote") {
      j.fail("channel", "expected local or remote, got '" + c.channel + "'");
    }
    c.dataset_size = j.num<std::size_t>("dataset_size", 32);
    spec.kill_after = j.num("kill_after", -1);
    const int count = j.num("count", 1);
    if (count < 1) j.fail("count", "must be at least 1");
    if (c.batch == 0) j.fail("batch", "must be positive");
    if (ft && c.seq > static_cast<std::size_t>(mc.max_seq)) {
      j.fail("seq", "exceeds model max_seq " + std::to_string(mc.max_seq));
    }
    if (!ft && c.prompt_len + c.gen_tokens > static_cast<std::size_t>(mc.max_seq)) {
      j.fail("gen_tokens", "prompt_len + gen_tokens exceeds max_seq");
    }
    if (!ft && c.prompt_len == 0) j.fail("prompt_len", "must be positive");
    if (c.privacy.enabled && c.privacy.k < 2) j.fail("privacy_k", "must be >= 2");
    const bool has_data_seed = j.has("data_seed");
    const bool has_adapter_seed = j.has("adapter_seed");
    const bool has_privacy_seed = j.has("privacy_seed");
    const auto data_seed = j.num<std::uint64_t>("data_seed", 0);
    const auto adapter_seed = j.num<std::uint64_t>("adapter_seed", 0);
    const auto privacy_seed = j.num<std::uint64_t>("privacy_seed", 0);
    j.reject_unknown();

    for (int i = 0; i < count; ++i, ++index) {
      JobSpec s = spec;
      s.config.name = count == 1 ? base : base + "." + std::to_string(i);
      if (sc.find_job(s.config.name)) j.fail("", "duplicate job name " + s.config.name);
      const auto off = static_cast<std::uint64_t>(i);
      s.config.adapter.seed =
          has_adapter_seed ? adapter_seed + off : derive_seed(sc.seed, index, 1);
      s.config.data_seed = has_data_seed ? data_seed + off : derive_seed(sc.seed, index, 2);
      s.config.privacy.seed =
          has_privacy_seed ? privacy_seed + off : derive_seed(sc.seed, index, 3);
      sc.jobs.push_back(std::move(s));
    }
  }
  return sc;
}

void write_scenario(std::ostream& os, const Scenario& sc) {
  const ModelConfig& m = sc.model;
  const BatchPolicy& p = sc.executor.policy;
  const auto precision = os.precision(std::numeric_limits<double>::max_digits10);
  os << "[run]\nname = " << sc.name << "\nseed = " << sc.seed
     << "\noutput = " << sc.output_dir
     << "\nmode = " << (sc.multi_process ? "multi-process" : "in-process")
     << "\noracle = " << (sc.oracle ? "true" : "false") << "\n\n";
  os << "[model]\nn_layers = " << m.n_layers << "\nd_model = " << m.d_model
     << "\nn_heads = " << m.n_heads << "\nd_ff = " << m.d_ff
     << "\nvocab_size = " << m.vocab_size << "\nmax_seq = " << m.max_seq
     << "\nseed = " << m.seed << "\nbias = " << (m.bias ? "true" : "false")
     << "\nnorm_eps = " << m.norm_eps << "\n";
  if (!sc.checkpoint.empty()) os << "checkpoint = " << sc.checkpoint << "\n";
  os << "\n[executor]\npolicy = " << mode_name(p.mode)
     << "\nwait_per_token_us = " << static_cast<double>(p.wait_per_token.count()) / 1e3
     << "\nwait_cap_ms = " << static_cast<double>(p.wait_cap.count()) / 1e6
     << "\nmax_batch_tokens = " << p.max_batch_tokens
     << "\nendpoint = " << to_string(sc.executor.endpoint)
     << "\nmemory_optimized_backward = "
     << (sc.executor.memory_optimized_backward ? "true" : "false") << "\n\n";
  os << "[packing]\nmodel_gb = " << sc.packing.model_gb
     << "\ndevice_gb = " << sc.packing.device_gb
     << "\ndevices = " << sc.packing.devices << "\n";
  for (const auto& j : sc.jobs) {
    const JobConfig& c = j.config;
    os << "\n[job." << c.name << "]\nkind = " << job_kind_name(c.kind)
       << "\nadapter = " << method_name(c.adapter.method)
       << "\nrank = " << c.adapter.rank << "\nalpha = " << c.adapter.alpha;
    if (!c.adapter.targets.empty()) os << "\ntargets = " << targets_string(c.adapter.targets);
    os << "\noptimizer = " << (c.optimizer.kind == OptimizerKind::kSgd ? "sgd" : "adam")
       << "\nlr = " << c.optimizer.lr << "\nbatch = " << c.batch << "\nseq = " << c.seq
       << "\nsteps = " << c.steps << "\nrounds = " << j.rounds
       << "\nprompt_len = " << c.prompt_len << "\ngen_tokens = " << c.gen_tokens
       << "\nplacement = " << placement_name(c.placement)
       << "\ndecode_compute = " << decode_compute_name(c.decode_compute)
       << "\nprivacy = " << (c.privacy.enabled ? "true" : "false")
       << "\nprivacy_k = " << c.privacy.k << "\nprivacy_scale = " << c.privacy.scale
       << "\nprivacy_seed = " << c.privacy.seed << "\nchannel = " << c.channel
       << "\ndata_seed = " << c.data_seed << "\nadapter_seed = " << c.adapter.seed
       << "\ndataset_size = " << c.dataset_size;
    if (j.kill_after >= 0) os << "\nkill_after = " << j.kill_after;
    os << "\n";
  }
  os.precision(precision);
}

}  // namespace layerserve
