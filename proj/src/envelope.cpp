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

#include "layerserve/envelope.hpp"

#include <stdexcept>

namespace layerserve {

std::string pass_name(Pass pass) {
  switch (pass) {
    case Pass::kForward: return "forward";
    case Pass::kBackward: return "backward";
    case Pass::kNoiseEffect: return "noise_effect";
  }
  return "?";
}

std::string job_kind_name(JobKind kind) {
  return kind == JobKind::kInference ? "inference" : "finetune";
}

JobKind parse_job_kind(const std::string& name) {
  if (name == "inference") return JobKind::kInference;
  if (name == "finetune") return JobKind::kFinetune;
  throw std::invalid_argument("unknown job kind '" + name + "'");
}

std::size_t input_width(const ModelConfig& config, const LayerAddress& layer,
                        Pass pass) {
  return pass == Pass::kBackward ? config.d_out(layer.role)
                                 : config.d_in(layer.role);
}

std::size_t output_width(const ModelConfig& config, const LayerAddress& layer,
                         Pass pass) {
  return pass == Pass::kBackward ? config.d_in(layer.role)
                                 : config.d_out(layer.role);
}

}  // namespace layerserve
