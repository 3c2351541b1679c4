// Copyright 2026 The polystack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace polystack {

enum class Precision : std::uint8_t { F32, F64 };

std::string_view to_string(Precision p);
// Accepts "f32"/"float32"/"32" and "f64"/"float64"/"64".
Precision parse_precision(std::string_view s);

using Shape = std::vector<std::int64_t>;

std::int64_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of 32- or 64-bit reals.
//
// Layout is (batch, channel, height, width) for images and (batch, feature)
// for vectors. Copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Precision precision = Precision::F32);

  static Tensor zeros(Shape shape, Precision precision = Precision::F32);
  static Tensor full(Shape shape, double value, Precision precision = Precision::F32);
  static Tensor from_values(Shape shape, std::span<const double> values,
                            Precision precision = Precision::F32);

  const Shape& shape() const noexcept { return shape_; }
  std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept;
  Precision precision() const noexcept { return precision_; }
  bool empty() const noexcept { return size() == 0; }

  // Typed element access. Throws ValidationError when T does not match the
  // tensor's precision.
  template <typename T>
  std::span<T> data();
  template <typename T>
  std::span<const T> data() const;

  double at(std::size_t flat_index) const;
  void set(std::size_t flat_index, double value);
  std::vector<double> to_vector() const;

  Tensor cast(Precision precision) const;
  // Same shape, new extents must have the same element count.
  Tensor reshaped(Shape shape) const;
  // Rows [begin, end) along the leading axis.
  Tensor slice_batch(std::int64_t begin, std::int64_t end) const;
  // Stacks tensors of identical shape along a new leading axis.
  static Tensor stack(std::span<const Tensor> items);

  void fill(double value);
  // this += alpha * other (same shape and precision).
  void add_scaled(const Tensor& other, double alpha = 1.0);

  bool all_finite() const;
  // Same shape, precision and bit pattern.
  bool bitwise_equal(const Tensor& other) const;

  // Little-endian binary: u64 rank, u64 extents, u64 precision tag (32 or
  // 64), then row-major elements.
  void write(std::ostream& out) const;
  static Tensor read(std::istream& in);

 private:
  Shape shape_;
  Precision precision_ = Precision::F32;
  std::variant<std::vector<float>, std::vector<double>> data_;
};

// Max elementwise |a-b| / max(|a|, |b|, floor).
double max_relative_difference(const Tensor& a, const Tensor& b, double floor = 1e-12);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace polystack
