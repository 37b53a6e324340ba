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

#include "layerserve/tensor.hpp"

#include <bit>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace layerserve {
namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(element_count(shape_), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::filled(Shape shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0f;
  return t;
}

Tensor Tensor::from_rows(
    std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<float> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) {
    throw DimensionError("expected a 2-D tensor, got " + shape_string(shape_));
  }
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) {
    throw DimensionError("expected a 2-D tensor, got " + shape_string(shape_));
  }
  return shape_[1];
}

std::span<float> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<float>(data_).subspan(r * c, c);
}

std::span<const float> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const float>(data_).subspan(r * c, c);
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(data_[i]) !=
        std::bit_cast<std::uint32_t>(other.data_[i])) {
      return false;
    }
  }
  return true;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

AffineParams::AffineParams(Tensor w, std::optional<Tensor> b)
    : weight(std::move(w)), bias(std::move(b)) {
  if (weight.rank() != 2) {
    throw DimensionError("affine weight must be 2-D, got " +
                         shape_string(weight.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != weight.dim(1))) {
    throw DimensionError("affine bias " + shape_string(bias->shape()) +
                         " does not match weight " +
                         shape_string(weight.shape()));
  }
}

std::size_t AffineParams::bytes() const {
  return weight.bytes() + (bias ? bias->bytes() : 0);
}

std::uint64_t checksum(const Tensor& t, std::uint64_t seed) {
  std::uint64_t h = seed;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffu;
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t d : t.shape()) mix(d);
  for (float v : t.data()) mix(std::bit_cast<std::uint32_t>(v));
  return h;
}

}  // namespace layerserve
