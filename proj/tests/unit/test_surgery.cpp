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

#include "oracles.hpp"
#include "polystack/cost_model.hpp"
#include "polystack/error.hpp"
#include "polystack/network_builder.hpp"

namespace polystack {
namespace {

using testing::random_tensor;

Model base_model(const std::string& text, const BlockArch& arch, Precision precision = Precision::F64) {
  auto c = parse_network(text);
  c.input_size = 16;
  apply_stage_defaults(c);
  LowerOptions o;
  o.precision = precision;
  return lower(c, arch, 0.3, 5, o);
}

NetworkConfig with_kinds(const Model& m, const std::string& text) {
  auto c = parse_network(text);
  c.input_size = m.meta.config.input_size;
  c.classes = m.meta.config.classes;
  apply_stage_defaults(c);
  return c;
}

double output_gap(const Model& a, const Model& b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Shape s{4};
  s.insert(s.end(), a.graph.input_shape().begin(), a.graph.input_shape().end());
  const auto x = random_tensor(s, a.meta.precision, rng);
  return max_relative_difference(forward(a.graph, a.params, x).output, forward(b.graph, b.params, x).output, 1e-12);
}

const BlockArch kDense = BlockArch::dense(16, 32);
const BlockArch kConv = BlockArch::conv(16, 4);

TEST(UpgradeTest, NoOpTargetIsBitwiseIdentity) {
  const auto m = base_model("A: ir -> ir; B: ir", kDense);
  const auto up = upgrade(m, m.meta.config, false, 99);
  EXPECT_TRUE(up.params.bitwise_equal(m.params));
  EXPECT_EQ(up.meta.config, m.meta.config);
  EXPECT_EQ(output_gap(m, up, 1), 0.0);
}

TEST(UpgradeTest, IrToMpolyKeepsFAndDrawsG) {
  const auto m = base_model("A: ir -> ir; B: ir", kDense);
  const auto up = upgrade(m, with_kinds(m, "A: ir -> mpoly-2; B: ir"), false, 99);
  EXPECT_TRUE(up.params.group_bitwise_equal("A.1.F", m.params, "A.1.F"));
  EXPECT_TRUE(up.params.contains_group("A.1.G"));
  EXPECT_FALSE(up.params.group_bitwise_equal("A.1.G", up.params, "A.1.F"));
  for (const auto& key : {"A.0.F", "B.0.F", "stem", "head", "A-B"}) {
    EXPECT_TRUE(up.params.group_bitwise_equal(key, m.params, key)) << key;
  }
}

TEST(UpgradeTest, IrToPolyCopiesTheSharedBlock) {
  const auto m = base_model("A: ir; B: ir", kDense);
  const auto up = upgrade(m, with_kinds(m, "A: poly-3; B: ir"), false, 99);
  EXPECT_TRUE(up.params.group_bitwise_equal("A.0.F", m.params, "A.0.F"));
  // Same parameter count: the retained F is the whole module.
  EXPECT_EQ(count_params(up).params, count_params(m).params);
}

TEST(UpgradeTest, SameFamilyKeepsCommonBlocks) {
  const auto m = base_model("A: 2-way; B: mpoly-2", kDense);
  const auto up = upgrade(m, with_kinds(m, "A: 3-way; B: mpoly-3"), false, 7);
  for (const auto& key : {"A.0.F", "A.0.G", "B.0.F", "B.0.G"}) {
    EXPECT_TRUE(up.params.group_bitwise_equal(key, m.params, key)) << key;
  }
}

TEST(UpgradeTest, ZeroLastPreservesFunction) {
  for (const auto& arch : {kDense, kConv}) {
    const auto m = base_model("A: ir -> ir; B: ir -> 2-way", arch);
    for (const char* target : {"A: mpoly-2 -> 3-way; B: mpoly-3 -> 3-way", "A: 2-way -> ir; B: 4-way -> 3-way"}) {
      const auto up = upgrade(m, with_kinds(m, target), true, 31);
      EXPECT_LE(output_gap(m, up, 2), 1e-9) << target << " " << arch.describe();
      EXPECT_GT(count_params(up).params, count_params(m).params);
    }
  }
}

TEST(UpgradeTest, WithoutZeroLastFunctionChanges) {
  const auto m = base_model("A: ir; B: ir", kDense);
  const auto up = upgrade(m, with_kinds(m, "A: mpoly-2; B: ir"), false, 31);
  EXPECT_GT(output_gap(m, up, 3), 1e-9);
}

TEST(UpgradeTest, RejectsZeroLastOnSharedBlocksAndMismatchedLayouts) {
  const auto m = base_model("A: ir -> ir; B: ir", kDense);
  EXPECT_THROW(upgrade(m, with_kinds(m, "A: poly-2 -> ir; B: ir"), true, 1), ValidationError);
  EXPECT_NO_THROW(upgrade(m, with_kinds(m, "A: poly-2 -> ir; B: ir"), false, 1));
  EXPECT_THROW(upgrade(m, with_kinds(m, "A: ir; B: ir"), false, 1), ValidationError);
  EXPECT_THROW(upgrade(m, with_kinds(m, "A: ir -> ir"), false, 1), ValidationError);
  EXPECT_THROW(upgrade(m, with_kinds(m, "A: ir -> ir; C: ir"), false, 1), ValidationError);
}

TEST(UpgradeTest, ParamsNeverShrink) {
  std::mt19937_64 rng(4);
  const std::vector<std::string> kinds{"ir", "poly-2", "poly-3", "mpoly-2", "mpoly-3", "2-way", "3-way"};
  const auto m = base_model("A: ir -> ir; B: ir", kDense);
  for (int trial = 0; trial < 12; ++trial) {
    std::string text = "A: " + kinds[rng() % kinds.size()] + " -> " + kinds[rng() % kinds.size()] +
                       "; B: " + kinds[rng() % kinds.size()];
    const auto up = upgrade(m, with_kinds(m, text), false, 3);
    EXPECT_GE(count_params(up).params, count_params(m).params) << text;
  }
}

TEST(InsertionGapsTest, EvenSpreadAndRoundRobin) {
  EXPECT_EQ(insertion_gaps(3, 3), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(insertion_gaps(4, 2), (std::vector<int>{0, 2}));
  EXPECT_EQ(insertion_gaps(5, 2), (std::vector<int>{0, 2}));
  EXPECT_EQ(insertion_gaps(3, 1), (std::vector<int>{0}));
  EXPECT_EQ(insertion_gaps(2, 5), (std::vector<int>{0, 0, 0, 1, 1}));
  EXPECT_TRUE(insertion_gaps(4, 0).empty());
  for (int n = 1; n <= 8; ++n) {
    for (int m = 0; m <= n; ++m) {
      const auto gaps = insertion_gaps(n, m);
      ASSERT_EQ(gaps.size(), static_cast<std::size_t>(m));
      for (std::size_t i = 1; i < gaps.size(); ++i) EXPECT_LT(gaps[i - 1], gaps[i]);
    }
  }
}

TEST(DeepenTest, InterleavesNewUnits) {
  const auto m = base_model("A: ir -> poly-2 -> 2-way; B: ir", kDense);
  const auto d = deepen_interleave(m, {3, 0}, false, 8);
  ASSERT_EQ(d.meta.config.stages[0].modules.size(), 6u);
  const std::vector<std::string> expected{"ir", "ir", "poly-2", "poly-2", "2-way", "2-way"};
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(d.meta.config.stages[0].modules[i].token(), expected[i]);
  // Originals move to positions 0, 2, 4 with their parameters.
  EXPECT_TRUE(d.params.group_bitwise_equal("A.0.F", m.params, "A.0.F"));
  EXPECT_TRUE(d.params.group_bitwise_equal("A.2.F", m.params, "A.1.F"));
  EXPECT_TRUE(d.params.group_bitwise_equal("A.4.F", m.params, "A.2.F"));
  EXPECT_TRUE(d.params.group_bitwise_equal("A.4.G", m.params, "A.2.G"));
  EXPECT_TRUE(d.params.group_bitwise_equal("B.0.F", m.params, "B.0.F"));
}

TEST(DeepenTest, NothingNewIsIdentity) {
  const auto m = base_model("A: ir -> ir; B: mpoly-2", kDense);
  const auto d = deepen_interleave(m, {0, 0}, false, 8);
  EXPECT_TRUE(d.params.bitwise_equal(m.params));
  EXPECT_EQ(d.meta.config, m.meta.config);
}

TEST(DeepenTest, ZeroLastPreservesFunction) {
  for (const auto& arch : {kDense, kConv}) {
    const auto m = base_model("A: ir -> poly-2; B: mpoly-2 -> 2-way -> ir", arch);
    const auto d = deepen_interleave(m, {2, 5}, true, 12);
    EXPECT_EQ(d.module_count(), m.module_count() + 7);
    EXPECT_LE(output_gap(m, d, 4), 1e-9) << arch.describe();
  }
}

TEST(DeepenTest, RejectsBadCounts) {
  const auto m = base_model("A: ir; B: ir", kDense);
  EXPECT_THROW(deepen_interleave(m, {1}, false, 1), ValidationError);
  EXPECT_THROW(deepen_interleave(m, {1, -1}, false, 1), ValidationError);
  const auto single = lower_module(ModuleKind::ir(), BlockArch::dense(4, 8), 1.0, 1);
  EXPECT_THROW(deepen_interleave(single, {1}, false, 1), ValidationError);
}

TEST(ModuleSurgeryTest, SingleModuleUpgrade) {
  LowerOptions o;
  o.precision = Precision::F64;
  const auto m = lower_module(ModuleKind::ir(), BlockArch::dense(4, 8), 1.0, 2, o);
  NetworkConfig target = m.meta.config;
  target.stages[0].modules[0] = ModuleKind::kway(3);
  const auto up = upgrade(m, target, true, 4);
  EXPECT_TRUE(up.params.group_bitwise_equal("M.0.F", m.params, "M.0.F"));
  std::mt19937_64 rng(1);
  const auto x = random_tensor({5, 4}, Precision::F64, rng);
  EXPECT_LE(max_relative_difference(forward(m.graph, m.params, x).output, forward(up.graph, up.params, x).output,
                                    1e-12),
            1e-9);
}

}  // namespace
}  // namespace polystack
