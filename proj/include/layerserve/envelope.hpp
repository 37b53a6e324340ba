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

#ifndef LAYERSERVE_ENVELOPE_HPP_
#define LAYERSERVE_ENVELOPE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "layerserve/model.hpp"

namespace layerserve {

enum class Pass : std::uint8_t {
  kForward = 0,
  kBackward = 1,
  kNoiseEffect = 2,
};

std::string pass_name(Pass pass);

enum class JobKind : std::uint8_t { kInference = 0, kFinetune = 1 };

std::string job_kind_name(JobKind kind);
JobKind parse_job_kind(const std::string& name);

/// One client-to-executor layer request. Payload rows are flattened tokens:
/// token_count x width, where width is d_in for Forward/NoiseEffect and d_out
/// for Backward.
struct RequestEnvelope {
  std::uint32_t client_id = 0;
  std::uint64_t request_id = 0;
  LayerAddress layer;
  Pass pass = Pass::kForward;
  std::uint32_t token_count = 0;
  std::uint32_t width = 0;
  std::vector<float> payload;

  bool operator==(const RequestEnvelope&) const = default;
};

/// Width the executor expects on input and produces on output.
std::size_t input_width(const ModelConfig& config, const LayerAddress& layer,
                        Pass pass);
std::size_t output_width(const ModelConfig& config, const LayerAddress& layer,
                         Pass pass);

}  // namespace layerserve

#endif  // LAYERSERVE_ENVELOPE_HPP_
