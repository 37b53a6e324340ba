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

#ifndef LAYERSERVE_CHECKPOINT_HPP_
#define LAYERSERVE_CHECKPOINT_HPP_

#include <stdexcept>
#include <string>
#include <vector>

#include "layerserve/model.hpp"

namespace layerserve {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which blobs to read. The executor loads the base half, clients the client
/// half; both skip the other half without reading it.
enum class CheckpointHalf { kBase, kClient, kAll };

/// Layout (little-endian) is documented in docs/checkpoint-format.md.
void save_checkpoint(const std::string& path, const BaseModel& model);
BaseModel load_checkpoint(const std::string& path,
                          CheckpointHalf half = CheckpointHalf::kAll);
ModelConfig read_checkpoint_config(const std::string& path);

/// Blob names in file order.
std::vector<std::string> checkpoint_blob_names(const std::string& path);

}  // namespace layerserve

#endif  // LAYERSERVE_CHECKPOINT_HPP_
