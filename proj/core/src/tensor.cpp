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

#include "polystack/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "polystack/error.hpp"

namespace polystack {

static_assert(std::endian::native == std::endian::little,
              "tensor serialization assumes a little-endian host");

std::string_view to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view s) {
  if (s == "f32" || s == "float32" || s == "32") return Precision::F32;
  if (s == "f64" || s == "float64" || s == "64") return Precision::F64;
  throw ValidationError("unknown precision '" + std::string(s) + "' (use f32 or f64)");
}

std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, Precision precision)
    : shape_(std::move(shape)), precision_(precision) {
  const auto n = static_cast<std::size_t>(shape_size(shape_));
  if (precision_ == Precision::F32) {
    data_ = std::vector<float>(n, 0.0f);
  } else {
    data_ = std::vector<double>(n, 0.0);
  }
}

Tensor Tensor::zeros(Shape shape, Precision precision) { return Tensor(std::move(shape), precision); }

Tensor Tensor::full(Shape shape, double value, Precision precision) {
  Tensor t(std::move(shape), precision);
  t.fill(value);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, Precision precision) {
  Tensor t(std::move(shape), precision);
  if (values.size() != t.size()) {
    throw ShapeError("expected " + std::to_string(t.size()) + " values for shape " +
                     shape_string(t.shape()) + ", got " + std::to_string(values.size()));
  }
  std::visit([&](auto& v) { std::copy(values.begin(), values.end(), v.begin()); }, t.data_);
  return t;
}

std::size_t Tensor::size() const noexcept {
  return std::visit([](const auto& v) { return v.size(); }, data_);
}

template <typename T>
std::span<T> Tensor::data() {
  auto* v = std::get_if<std::vector<T>>(&data_);
  if (!v) throw ValidationError("tensor precision mismatch (tensor is " +
                                std::string(to_string(precision_)) + ")");
  return {v->data(), v->size()};
}

template <typename T>
std::span<const T> Tensor::data() const {
  const auto* v = std::get_if<std::vector<T>>(&data_);
  if (!v) throw ValidationError("tensor precision mismatch (tensor is " +
                                std::string(to_string(precision_)) + ")");
  return {v->data(), v->size()};
}

template std::span<float> Tensor::data<float>();
template std::span<double> Tensor::data<double>();
template std::span<const float> Tensor::data<float>() const;
template std::span<const double> Tensor::data<double>() const;

double Tensor::at(std::size_t i) const {
  return std::visit([&](const auto& v) { return static_cast<double>(v.at(i)); }, data_);
}

void Tensor::set(std::size_t i, double value) {
  std::visit([&](auto& v) { v.at(i) = static_cast<typename std::decay_t<decltype(v)>::value_type>(value); },
             data_);
}

std::vector<double> Tensor::to_vector() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, data_);
}

Tensor Tensor::cast(Precision precision) const {
  if (precision == precision_) return *this;
  Tensor out(shape_, precision);
  std::visit(
      [&](const auto& src) {
        std::visit([&](auto& dst) { std::copy(src.begin(), src.end(), dst.begin()); }, out.data_);
      },
      data_);
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != static_cast<std::int64_t>(size())) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

Tensor Tensor::slice_batch(std::int64_t begin, std::int64_t end) const {
  if (shape_.empty() || begin < 0 || end > shape_[0] || begin > end) {
    throw ShapeError("bad batch slice of " + shape_string(shape_));
  }
  Shape s = shape_;
  s[0] = end - begin;
  Tensor out(s, precision_);
  const std::size_t row = shape_[0] ? size() / static_cast<std::size_t>(shape_[0]) : 0;
  std::visit(
      [&](const auto& src) {
        using T = typename std::decay_t<decltype(src)>::value_type;
        auto dst = out.data<T>();
        std::copy(src.begin() + static_cast<std::ptrdiff_t>(row * begin),
                  src.begin() + static_cast<std::ptrdiff_t>(row * end), dst.begin());
      },
      data_);
  return out;
}

Tensor Tensor::stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("cannot stack zero tensors");
  Shape s = items.front().shape();
  s.insert(s.begin(), static_cast<std::int64_t>(items.size()));
  Tensor out(s, items.front().precision());
  const std::size_t row = items.front().size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].shape() != items.front().shape() ||
        items[i].precision() != items.front().precision()) {
      throw ShapeError("stack: mismatched item " + std::to_string(i));
    }
    std::visit(
        [&](const auto& src) {
          using T = typename std::decay_t<decltype(src)>::value_type;
          std::copy(src.begin(), src.end(), out.data<T>().begin() + static_cast<std::ptrdiff_t>(i * row));
        },
        items[i].data_);
  }
  return out;
}

void Tensor::fill(double value) {
  std::visit([&](auto& v) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    std::fill(v.begin(), v.end(), static_cast<T>(value));
  }, data_);
}

void Tensor::add_scaled(const Tensor& other, double alpha) {
  if (other.shape_ != shape_ || other.precision_ != precision_) {
    throw ShapeError("add_scaled: " + shape_string(shape_) + " vs " + shape_string(other.shape_));
  }
  std::visit(
      [&](auto& dst) {
        using T = typename std::decay_t<decltype(dst)>::value_type;
        auto src = other.data<T>();
        const T a = static_cast<T>(alpha);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
      },
      data_);
}

bool Tensor::all_finite() const {
  return std::visit([](const auto& v) {
    return std::all_of(v.begin(), v.end(), [](auto x) { return std::isfinite(x); });
  }, data_);
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape_ != other.shape_ || precision_ != other.precision_) return false;
  return std::visit(
      [&](const auto& a) {
        using T = typename std::decay_t<decltype(a)>::value_type;
        auto b = other.data<T>();
        return a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
      },
      data_);
}

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw ValidationError("truncated tensor header");
  return v;
}

constexpr std::uint64_t kMaxRank = 16;

}  // namespace

void Tensor::write(std::ostream& out) const {
  write_u64(out, shape_.size());
  for (auto d : shape_) write_u64(out, static_cast<std::uint64_t>(d));
  write_u64(out, precision_ == Precision::F32 ? 32 : 64);
  std::visit(
      [&](const auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(T)));
      },
      data_);
  if (!out) throw Error("failed writing tensor");
}

Tensor Tensor::read(std::istream& in) {
  const std::uint64_t rank = read_u64(in);
  if (rank > kMaxRank) throw ValidationError("tensor rank " + std::to_string(rank) + " too large");
  Shape shape(rank);
  for (auto& d : shape) {
    const std::uint64_t e = read_u64(in);
    if (e > (std::uint64_t{1} << 40)) throw ValidationError("tensor extent too large");
    d = static_cast<std::int64_t>(e);
  }
  const std::uint64_t tag = read_u64(in);
  if (tag != 32 && tag != 64) {
    throw ValidationError("unknown tensor precision tag " + std::to_string(tag));
  }
  Tensor t(shape, tag == 32 ? Precision::F32 : Precision::F64);
  std::visit(
      [&](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
      },
      t.data_);
  if (!in) throw ValidationError("truncated tensor data");
  return t;
}

double max_relative_difference(const Tensor& a, const Tensor& b, double floor) {
  if (a.shape() != b.shape()) {
    throw ShapeError("compare: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.at(i);
    const double y = b.at(i);
    const double denom = std::max({std::abs(x), std::abs(y), floor});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  t.write(out);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return Tensor::read(in);
}

}  // namespace polystack
