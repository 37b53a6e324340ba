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

#ifndef LAYERSERVE_TENSOR_HPP_
#define LAYERSERVE_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace layerserve {

/// Raised when operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for out-of-range token ids and similar index faults.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major float32 tensor. `data().size()` always equals the product
/// of the shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor filled(Shape shape, float value);
  static Tensor identity(std::size_t n);
  /// Builds a 2-D tensor from nested rows; all rows must have equal length.
  static Tensor from_rows(std::initializer_list<std::initializer_list<float>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  std::size_t bytes() const { return data_.size() * sizeof(float); }
  bool empty() const { return data_.empty(); }

  // 2-D accessors.
  std::size_t rows() const;
  std::size_t cols() const;
  float& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  std::span<float> row(std::size_t r);
  std::span<const float> row(std::size_t r) const;

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  /// Same data, new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  /// Equality of shape and of every float's bit pattern.
  bool bitwise_equal(const Tensor& other) const;
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Weight and optional bias of a frozen affine layer: y = x W + b.
/// Covers both linear and transposed-weight Conv1D layers.
struct AffineParams {
  Tensor weight;              // [d_in, d_out]
  std::optional<Tensor> bias;  // [d_out]

  AffineParams() = default;
  AffineParams(Tensor w, std::optional<Tensor> b);

  std::size_t d_in() const { return weight.dim(0); }
  std::size_t d_out() const { return weight.dim(1); }
  std::size_t bytes() const;
};

/// FNV-1a over the shape and raw float bits.
std::uint64_t checksum(const Tensor& t, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace layerserve

#endif  // LAYERSERVE_TENSOR_HPP_
