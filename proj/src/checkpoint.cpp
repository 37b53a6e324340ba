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

#include "layerserve/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <functional>

namespace layerserve {
namespace {

constexpr char kMagic[4] = {'L', 'S', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : os_(path, std::ios::binary) {
    if (!os_) throw CheckpointError("cannot open " + path + " for writing");
  }
  void bytes(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  template <typename T>
  void le(T v) {
    std::array<std::uint8_t, sizeof(T)> b{};
    std::uint64_t u = 0;
    std::memcpy(&u, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<std::uint8_t>(u >> (8 * i));
    bytes(b.data(), b.size());
  }
  void blob(const std::string& name, const Tensor& t) {
    le(static_cast<std::uint16_t>(name.size()));
    bytes(name.data(), name.size());
    le(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) le(static_cast<std::uint32_t>(d));
    for (float f : t.data()) le(f);
  }
  void finish() {
    os_.flush();
    if (!os_) throw CheckpointError("write failed");
  }

 private:
  std::ofstream os_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : is_(path, std::ios::binary), path_(path) {
    if (!is_) throw CheckpointError("cannot open checkpoint " + path);
  }
  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is_) throw CheckpointError(path_ + ": truncated checkpoint");
  }
  void skip(std::size_t n) {
    is_.seekg(static_cast<std::streamoff>(n), std::ios::cur);
    if (!is_) throw CheckpointError(path_ + ": truncated checkpoint");
  }
  template <typename T>
  T le() {
    std::array<std::uint8_t, sizeof(T)> b{};
    bytes(b.data(), b.size());
    std::uint64_t u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    T v;
    std::memcpy(&v, &u, sizeof(T));
    return v;
  }
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }
  const std::string& path() const { return path_; }

 private:
  std::ifstream is_;
  std::string path_;
};

ModelConfig read_header(Reader& r) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError(r.path() + ": not a checkpoint (bad magic)");
  }
  if (const auto v = r.le<std::uint16_t>(); v != kVersion) {
    throw CheckpointError(r.path() + ": unsupported version " + std::to_string(v));
  }
  r.le<std::uint16_t>();
  ModelConfig c;
  c.n_layers = r.le<std::int32_t>();
  c.d_model = r.le<std::int32_t>();
  c.n_heads = r.le<std::int32_t>();
  c.d_ff = r.le<std::int32_t>();
  c.vocab_size = r.le<std::int32_t>();
  c.max_seq = r.le<std::int32_t>();
  c.seed = r.le<std::uint64_t>();
  c.bias = r.le<std::uint32_t>() != 0;
  c.norm_eps = r.le<float>();
  c.validate();
  return c;
}

// Visits every blob; `want` decides whether the data is read or skipped.
void scan(Reader& r, const std::function<bool(const std::string&)>& want,
          const std::function<void(const std::string&, Tensor)>& take) {
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.le<std::uint16_t>(), '\0');
    r.bytes(name.data(), name.size());
    Shape shape(r.le<std::uint8_t>());
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.le<std::uint32_t>();
      n *= d;
    }
    if (!want(name)) {
      r.skip(n * sizeof(float));
      continue;
    }
    std::vector<float> data(n);
    for (auto& f : data) f = r.le<float>();
    take(name, Tensor(std::move(shape), std::move(data)));
  }
}

std::string base_name(const LayerAddress& a, const char* part) {
  return "base." + std::to_string(a.block) + "." + role_name(a.role) + "." + part;
}

}  // namespace

void save_checkpoint(const std::string& path, const BaseModel& model) {
  const ModelConfig& c = model.config;
  Writer w(path);
  w.bytes(kMagic, 4);
  w.le(kVersion);
  w.le(std::uint16_t{0});
  w.le(static_cast<std::int32_t>(c.n_layers));
  w.le(static_cast<std::int32_t>(c.d_model));
  w.le(static_cast<std::int32_t>(c.n_heads));
  w.le(static_cast<std::int32_t>(c.d_ff));
  w.le(static_cast<std::int32_t>(c.vocab_size));
  w.le(static_cast<std::int32_t>(c.max_seq));
  w.le(c.seed);
  w.le(static_cast<std::uint32_t>(c.bias ? 1 : 0));
  w.le(c.norm_eps);

  std::uint32_t count = 0;
  for (const auto& [a, p] : model.layers) count += p.bias ? 2 : 1;
  count += 2 + 2 * static_cast<std::uint32_t>(c.n_layers);
  w.le(count);
  for (const auto& a : c.layer_addresses()) {
    const AffineParams& p = model.layer(a);
    w.blob(base_name(a, "weight"), p.weight);
    if (p.bias) w.blob(base_name(a, "bias"), *p.bias);
  }
  w.blob("client.embedding", model.embedding);
  for (int b = 0; b < c.n_layers; ++b) {
    w.blob("client.attn_norm." + std::to_string(b), model.attn_norm[b]);
    w.blob("client.ffn_norm." + std::to_string(b), model.ffn_norm[b]);
  }
  w.blob("client.final_norm", model.final_norm);
  w.finish();
}

ModelConfig read_checkpoint_config(const std::string& path) {
  Reader r(path);
  return read_header(r);
}

std::vector<std::string> checkpoint_blob_names(const std::string& path) {
  Reader r(path);
  read_header(r);
  std::vector<std::string> names;
  scan(r, [&](const std::string& n) { names.push_back(n); return false; },
       [](const std::string&, Tensor) {});
  return names;
}

BaseModel load_checkpoint(const std::string& path, CheckpointHalf half) {
  Reader r(path);
  BaseModel m;
  m.config = read_header(r);
  const ModelConfig& c = m.config;
  m.attn_norm.resize(static_cast<std::size_t>(c.n_layers));
  m.ffn_norm.resize(static_cast<std::size_t>(c.n_layers));
  std::map<LayerAddress, Tensor> weights, biases;

  auto want = [&](const std::string& n) {
    const bool base = n.rfind("base.", 0) == 0;
    if (half == CheckpointHalf::kBase) return base;
    if (half == CheckpointHalf::kClient) return !base;
    return true;
  };
  auto take = [&](const std::string& n, Tensor t) {
    if (n.rfind("base.", 0) == 0) {
      // base.<block>.<ROLE>.<weight|bias>
      const auto p1 = n.find('.', 5);
      const auto p2 = n.find('.', p1 + 1);
      if (p1 == std::string::npos || p2 == std::string::npos) {
        throw CheckpointError(path + ": bad blob name " + n);
      }
      LayerAddress a{static_cast<std::uint16_t>(std::stoi(n.substr(5, p1 - 5))),
                     parse_role(n.substr(p1 + 1, p2 - p1 - 1))};
      if (!c.contains(a)) throw CheckpointError(path + ": unknown layer in " + n);
      (n.substr(p2 + 1) == "bias" ? biases : weights)[a] = std::move(t);
    } else if (n == "client.embedding") {
      m.embedding = std::move(t);
    } else if (n == "client.final_norm") {
      m.final_norm = std::move(t);
    } else if (n.rfind("client.attn_norm.", 0) == 0) {
      m.attn_norm.at(std::stoul(n.substr(17))) = std::move(t);
    } else if (n.rfind("client.ffn_norm.", 0) == 0) {
      m.ffn_norm.at(std::stoul(n.substr(16))) = std::move(t);
    } else {
      throw CheckpointError(path + ": unknown blob " + n);
    }
  };
  scan(r, want, take);
  if (!r.at_end()) throw CheckpointError(path + ": trailing bytes");

  for (auto& [a, w] : weights) {
    if (w.rank() != 2 || w.dim(0) != c.d_in(a.role) || w.dim(1) != c.d_out(a.role)) {
      throw CheckpointError(path + ": layer " + to_string(a) + " has shape " +
                            shape_string(w.shape()));
    }
    std::optional<Tensor> bias;
    if (auto it = biases.find(a); it != biases.end()) bias = std::move(it->second);
    m.layers.emplace(a, AffineParams(std::move(w), std::move(bias)));
  }
  if (half != CheckpointHalf::kClient && m.layers.size() != c.layer_addresses().size()) {
    throw CheckpointError(path + ": missing base layers");
  }
  return m;
}

}  // namespace layerserve
