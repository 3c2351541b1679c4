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

#include <algorithm>
#include <random>
#include <set>

#include "polystack/error.hpp"
#include "polystack/evaluation.hpp"

namespace polystack {
namespace {

ScoreMatrix random_scores(std::size_t crops, std::size_t classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScoreMatrix s(crops, std::vector<double>(classes));
  for (auto& row : s) {
    for (auto& v : row) v = u(rng);
  }
  return s;
}

TEST(PoolCountTest, CeilingWithFloorOfOne) {
  EXPECT_EQ(pool_count(36, 0.3), 11);
  EXPECT_EQ(pool_count(4, 0.5), 2);
  EXPECT_EQ(pool_count(10, 0.3), 3);
  EXPECT_EQ(pool_count(3, 0.01), 1);
  EXPECT_EQ(pool_count(7, 1.0), 7);
}

TEST(TopkPoolTest, HandComputedExample) {
  const ScoreMatrix s{{0.9}, {0.5}, {0.8}, {0.1}};
  const auto pooled = topk_pool(s, 0.5);
  ASSERT_EQ(pooled.size(), 1u);
  EXPECT_NEAR(pooled[0], 0.85, 1e-15);
}

TEST(TopkPoolTest, FullFractionIsMeanAndSmallFractionIsMax) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_scores(1 + trial % 9, 5, rng);
    const auto mean = topk_pool(s, 1.0);
    const auto top = topk_pool(s, 1e-6);
    for (std::size_t c = 0; c < 5; ++c) {
      double sum = 0.0, mx = 0.0;
      for (const auto& row : s) {
        sum += row[c];
        mx = std::max(mx, row[c]);
      }
      EXPECT_NEAR(mean[c], sum / static_cast<double>(s.size()), 1e-12);
      EXPECT_EQ(top[c], mx);
    }
  }
}

TEST(TopkPoolTest, PermutationInvariantAndMonotone) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = random_scores(2 + trial % 11, 4, rng);
    const double fraction = 0.05 + 0.19 * (trial % 5);
    const auto base = topk_pool(s, fraction);
    std::shuffle(s.begin(), s.end(), rng);
    const auto shuffled = topk_pool(s, fraction);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(shuffled[c], base[c], 1e-12);
    const std::size_t row = rng() % s.size();
    s[row][trial % 4] += 0.5;
    const auto raised = topk_pool(s, fraction);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_GE(raised[c] + 1e-12, base[c]);
  }
}

TEST(TopkPoolTest, DuplicatingCropsChangesNothingWhenCountIsIntegral) {
  std::mt19937_64 rng(3);
  for (std::size_t crops : {10u, 20u, 30u}) {
    const auto s = random_scores(crops, 3, rng);
    ScoreMatrix doubled = s;
    doubled.insert(doubled.end(), s.begin(), s.end());
    const auto a = topk_pool(s, 0.3);
    const auto b = topk_pool(doubled, 0.3);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(a[c], b[c], 1e-12);
  }
}

TEST(TopkPoolTest, RejectsBadInput) {
  EXPECT_THROW(topk_pool({}, 0.3), ValidationError);
  EXPECT_THROW(topk_pool({{1.0}}, 0.0), ValidationError);
  EXPECT_THROW(topk_pool({{1.0}}, 1.5), ValidationError);
}

TEST(TopkErrorTest, OneHotAndFullK) {
  const std::vector<int> labels{0, 3, 2, 1, 3};
  ScoreMatrix s(labels.size(), std::vector<double>(4, 0.0));
  for (std::size_t i = 0; i < labels.size(); ++i) s[i][static_cast<std::size_t>(labels[i])] = 1.0;
  for (int k = 1; k <= 4; ++k) EXPECT_EQ(topk_error(s, labels, k), 0.0);
  std::mt19937_64 rng(4);
  EXPECT_EQ(topk_error(random_scores(5, 4, rng), labels, 4), 0.0);
}

TEST(TopkErrorTest, TiesRankTheLowerClassFirst) {
  const std::vector<int> labels{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const ScoreMatrix uniform(labels.size(), std::vector<double>(10, 0.25));
  for (int k = 1; k <= 10; ++k) {
    // Rank order is 0, 1, 2, ...: label l is hit iff l < k.
    EXPECT_NEAR(topk_error(uniform, labels, k), static_cast<double>(10 - k) / 10.0, 1e-15) << k;
  }
  const ScoreMatrix partial{{0.5, 0.2, 0.5, 0.5}};
  EXPECT_EQ(topk_error(partial, {2}, 2), 0.0);
  EXPECT_EQ(topk_error(partial, {3}, 2), 1.0);
}

TEST(TopkErrorTest, TensorOverloadMatchesMatrix) {
  std::mt19937_64 rng(5);
  const auto s = random_scores(6, 7, rng);
  std::vector<double> flat;
  for (const auto& row : s) flat.insert(flat.end(), row.begin(), row.end());
  const auto t = Tensor::from_values({6, 7}, flat, Precision::F64);
  const std::vector<int> labels{0, 1, 2, 3, 4, 5};
  for (int k : {1, 3, 5}) EXPECT_EQ(topk_error(t, labels, k), topk_error(s, labels, k));
}

TEST(CropGridTest, DistinctInBoundsAndMirroredFill) {
  for (int count : {1, 2, 5, 8, 12}) {
    const auto g = crop_grid(20, 24, 12, count);
    ASSERT_EQ(g.size(), static_cast<std::size_t>(count));
    const std::size_t plain = static_cast<std::size_t>((count + 1) / 2);
    std::set<std::pair<std::int64_t, std::int64_t>> seen;
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_GE(g[i].y, 0);
      EXPECT_GE(g[i].x, 0);
      EXPECT_LE(g[i].y + 12, 20);
      EXPECT_LE(g[i].x + 12, 24);
      EXPECT_EQ(g[i].mirrored, i >= plain);
      if (i < plain) {
        EXPECT_TRUE(seen.insert({g[i].y, g[i].x}).second);
      } else {
        EXPECT_EQ(g[i].y, g[i - plain].y);
        EXPECT_EQ(g[i].x, g[i - plain].x);
      }
    }
    EXPECT_EQ(g[0].y, 4);
    EXPECT_EQ(g[0].x, 6);
  }
  const auto corners = crop_grid(20, 24, 12, 10);
  const std::set<std::pair<std::int64_t, std::int64_t>> expected{{0, 0}, {0, 12}, {8, 0}, {8, 12}};
  std::set<std::pair<std::int64_t, std::int64_t>> got;
  for (std::size_t i = 1; i < 5; ++i) got.insert({corners[i].y, corners[i].x});
  EXPECT_EQ(got, expected);
}

Model toy() {
  auto c = parse_network("A: ir; B: poly-2");
  c.input_size = 16;
  c.classes = 5;
  apply_stage_defaults(c);
  LowerOptions o;
  o.precision = Precision::F64;
  return lower(c, BlockArch::conv(8, 2), 0.5, 2, o);
}

TEST(MulticropTest, SingleCropCollapsesToPlainEvaluation) {
  const Model m = toy();
  const auto data = synth_dataset(40, 5, 16, 1);
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  PoolingConfig one;
  one.scales = {1.0};
  one.crops_per_scale = 1;
  one.top_fraction = 1.0;
  const auto multi = multicrop_eval(m, data, idx, one);
  const auto plain = evaluate(m, data, idx, 7);
  EXPECT_EQ(multi.top1, plain.top1);
  EXPECT_EQ(multi.top5, plain.top5);
  EXPECT_EQ(multi.n_images, 40u);
  EXPECT_EQ(model_input_size(m), 16);
}

TEST(MulticropTest, DefaultProtocolRunsAndIsStable) {
  const Model m = toy();
  const auto data = synth_dataset(20, 5, 20, 3);
  const std::vector<std::size_t> idx{0, 3, 5, 8, 13};
  const PoolingConfig cfg;
  const auto a = multicrop_eval(m, data, idx, cfg);
  const auto b = multicrop_eval(m, data, idx, cfg);
  EXPECT_EQ(a.top1, b.top1);
  EXPECT_EQ(a.top5, b.top5);
  EXPECT_GE(a.top1, 0.0);
  EXPECT_LE(a.top1, 1.0);
  EXPECT_LE(a.top5, a.top1);
  EXPECT_TRUE(a.warnings.empty());
}

TEST(MulticropTest, TooSmallScaleIsSkippedWithWarning) {
  const Model m = toy();
  const auto data = synth_dataset(10, 5, 16, 3);
  PoolingConfig cfg;
  cfg.scales = {0.5, 1.0};
  const auto r = multicrop_eval(m, data, {0, 1, 2}, cfg);
  EXPECT_FALSE(r.warnings.empty());
  cfg.scales = {1.0};
  const auto ref = multicrop_eval(m, data, {0, 1, 2}, cfg);
  EXPECT_EQ(r.top1, ref.top1);
}

TEST(EvaluateTest, BatchSizeDoesNotMatter) {
  const Model m = toy();
  const auto data = synth_dataset(30, 5, 16, 4);
  std::vector<std::size_t> idx(30);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto a = evaluate(m, data, idx, 1);
  const auto b = evaluate(m, data, idx, 64);
  EXPECT_EQ(a.top1, b.top1);
  EXPECT_NEAR(a.loss, b.loss, 1e-12);
  EXPECT_GT(a.loss, 0.0);
}

}  // namespace
}  // namespace polystack
