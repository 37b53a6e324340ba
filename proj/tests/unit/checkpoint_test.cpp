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

#include <filesystem>
#include <fstream>

#include "layerserve/checkpoint.hpp"

using namespace layerserve;
namespace fs = std::filesystem;

namespace {

ModelConfig config() {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 24;
  c.vocab_size = 30;
  c.max_seq = 16;
  c.seed = 21;
  return c;
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    path = (fs::temp_directory_path() / ("ckpt_" + std::to_string(::getpid()) + ".bin")).string();
    save_checkpoint(path, model);
  }
  void TearDown() override { fs::remove(path); }

  std::vector<char> bytes() const {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
  }
  void write(const std::vector<char>& b) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(b.data(), static_cast<std::streamsize>(b.size()));
  }

  BaseModel model = build_model(config());
  std::string path;
};

}  // namespace

TEST_F(CheckpointTest, RoundTrip) {
  const BaseModel back = load_checkpoint(path);
  EXPECT_EQ(back.base_checksum(), model.base_checksum());
  EXPECT_EQ(back.client_checksum(), model.client_checksum());
  EXPECT_EQ(read_checkpoint_config(path).seed, 21u);
  const auto names = checkpoint_blob_names(path);
  EXPECT_EQ(names.front(), "base.0.Q.weight");
  EXPECT_NE(std::find(names.begin(), names.end(), "client.embedding"), names.end());
  EXPECT_EQ(names.size(), 13u * 2 + 1 + 2 * 2 + 1);
}

TEST_F(CheckpointTest, HalvesLoadSeparately) {
  const BaseModel base = load_checkpoint(path, CheckpointHalf::kBase);
  EXPECT_EQ(base.base_checksum(), model.base_checksum());
  EXPECT_TRUE(base.embedding.empty());
  const BaseModel client = load_checkpoint(path, CheckpointHalf::kClient);
  EXPECT_TRUE(client.layers.empty());
  EXPECT_EQ(client.client_checksum(), model.client_checksum());
}

TEST_F(CheckpointTest, Corruption) {
  const auto good = bytes();
  auto magic = good;
  magic[0] = 'X';
  write(magic);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  write(std::vector<char>(good.begin(), good.end() - 7));
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  auto extra = good;
  extra.push_back(0);
  write(extra);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.bin"), CheckpointError);
}

TEST_F(CheckpointTest, FlippedWeightChangesChecksumOnly) {
  auto b = bytes();
  b[b.size() / 3] ^= 0x40;
  write(b);
  const BaseModel damaged = load_checkpoint(path);
  EXPECT_NE(damaged.base_checksum() ^ damaged.client_checksum(),
            model.base_checksum() ^ model.client_checksum());
}
