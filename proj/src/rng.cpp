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

#include "layerserve/rng.hpp"

namespace layerserve {

Tensor Rng::uniform_tensor(Shape shape, float lo, float hi) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = uniform(lo, hi);
  return t;
}

}  // namespace layerserve
