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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "oracles.hpp"
#include "polystack/error.hpp"
#include "polystack/rng.hpp"
#include "polystack/tensor.hpp"

namespace polystack {
namespace {

TEST(TensorTest, ShapeAndSize) {
  const Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(shape_size({2, 3, 4}), 24);
  EXPECT_EQ(shape_string({2, 3, 4}), "[2, 3, 4]");
  EXPECT_TRUE(Tensor::zeros({0, 3}).empty());
}

TEST(TensorTest, PrecisionNames) {
  EXPECT_EQ(parse_precision("f32"), Precision::F32);
  EXPECT_EQ(parse_precision("float64"), Precision::F64);
  EXPECT_EQ(parse_precision("64"), Precision::F64);
  EXPECT_EQ(to_string(Precision::F64), "f64");
  EXPECT_THROW(parse_precision("f16"), ValidationError);
}

TEST(TensorTest, TypedAccessChecksPrecision) {
  Tensor t = Tensor::full({3}, 2.5, Precision::F64);
  EXPECT_EQ(t.data<double>()[1], 2.5);
  EXPECT_THROW(t.data<float>(), ValidationError);
}

TEST(TensorTest, FromValuesRejectsWrongCount) {
  const std::vector<double> v{1, 2, 3};
  EXPECT_THROW(Tensor::from_values({2, 2}, v), ValidationError);
}

TEST(TensorTest, CastRoundsToFloat) {
  const std::vector<double> v{0.1, 1.0 / 3.0};
  const auto t = Tensor::from_values({2}, v, Precision::F64);
  const auto f = t.cast(Precision::F32);
  EXPECT_EQ(f.at(0), static_cast<double>(0.1f));
  EXPECT_TRUE(f.cast(Precision::F64).cast(Precision::F32).bitwise_equal(f));
}

TEST(TensorTest, ReshapeSliceStack) {
  std::vector<double> v(12);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const auto t = Tensor::from_values({3, 4}, v, Precision::F64);
  EXPECT_EQ(t.reshaped({2, 6}).at(7), 7.0);
  EXPECT_THROW(t.reshaped({5, 2}), ShapeError);
  const auto s = t.slice_batch(1, 3);
  EXPECT_EQ(s.shape(), (Shape{2, 4}));
  EXPECT_EQ(s.at(0), 4.0);
  std::vector<Tensor> rows{t.slice_batch(0, 1).reshaped({4}), t.slice_batch(1, 2).reshaped({4}),
                           t.slice_batch(2, 3).reshaped({4})};
  EXPECT_TRUE(Tensor::stack(rows).bitwise_equal(t));
}

TEST(TensorTest, AddScaledAndFill) {
  auto a = Tensor::full({4}, 1.0, Precision::F64);
  const auto b = Tensor::full({4}, 2.0, Precision::F64);
  a.add_scaled(b, -0.5);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.at(i), 0.0);
  a.fill(3.0);
  EXPECT_EQ(a.at(3), 3.0);
  EXPECT_THROW(a.add_scaled(Tensor::full({5}, 1.0, Precision::F64)), ShapeError);
}

TEST(TensorTest, FiniteAndBitwise) {
  auto t = Tensor::zeros({3}, Precision::F64);
  EXPECT_TRUE(t.all_finite());
  t.set(1, std::numeric_limits<double>::quiet_NaN());
  EXPECT_FALSE(t.all_finite());
  auto z = Tensor::zeros({3}, Precision::F64);
  auto nz = Tensor::zeros({3}, Precision::F64);
  nz.set(0, -0.0);
  EXPECT_FALSE(z.bitwise_equal(nz));
  EXPECT_FALSE(z.bitwise_equal(Tensor::zeros({3}, Precision::F32)));
}

TEST(TensorTest, BinaryRoundTrip) {
  std::mt19937_64 rng(1);
  for (auto p : {Precision::F32, Precision::F64}) {
    const auto t = testing::random_tensor({2, 3, 5}, p, rng);
    std::stringstream ss;
    t.write(ss);
    EXPECT_TRUE(Tensor::read(ss).bitwise_equal(t));
  }
  const auto path = std::filesystem::temp_directory_path() / "polystack_tensor_test.tns";
  const auto t = testing::random_tensor({7}, Precision::F64, rng);
  save_tensor(path.string(), t);
  EXPECT_TRUE(load_tensor(path.string()).bitwise_equal(t));
  std::filesystem::remove(path);
}

TEST(TensorTest, ReadRejectsTruncatedInput) {
  const auto t = Tensor::full({4}, 1.0, Precision::F64);
  std::stringstream ss;
  t.write(ss);
  std::string bytes = ss.str();
  bytes.resize(bytes.size() - 3);
  std::stringstream cut(bytes);
  EXPECT_THROW(Tensor::read(cut), ValidationError);
}

TEST(TensorTest, MaxRelativeDifference) {
  const std::vector<double> a{1.0, 2.0}, b{1.0, 2.2};
  EXPECT_NEAR(max_relative_difference(Tensor::from_values({2}, a, Precision::F64),
                                      Tensor::from_values({2}, b, Precision::F64)),
              0.2 / 2.2, 1e-15);
}

TEST(RngTest, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(1, "data"), derive_seed(1, "data"));
  EXPECT_NE(derive_seed(1, "data"), derive_seed(1, "gates"));
  EXPECT_NE(derive_seed(1, "data"), derive_seed(2, "data"));
}

TEST(RngTest, UniformMomentsAndRange) {
  Rng rng(42);
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0 / 12.0, 0.002);
}

TEST(RngTest, NormalMomentsAndBelow) {
  Rng rng(9);
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
  std::vector<int> counts(5);
  for (int i = 0; i < 50000; ++i) ++counts[rng.below(5)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

}  // namespace
}  // namespace polystack
