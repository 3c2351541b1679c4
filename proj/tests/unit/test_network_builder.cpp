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

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "polystack/error.hpp"
#include "polystack/network_builder.hpp"

namespace polystack {
namespace {

using testing::dot;
using testing::max_rel_error;
using testing::numeric_input_grad;
using testing::numeric_param_grad;
using testing::random_tensor;

LowerOptions f64(ModuleForm form = ModuleForm::Cascaded) {
  LowerOptions o;
  o.form = form;
  o.precision = Precision::F64;
  o.spatial = 3;
  return o;
}

std::vector<ModuleKind> kinds_up_to(int k) {
  std::vector<ModuleKind> out{ModuleKind::ir()};
  for (int j = 2; j <= k; ++j) {
    out.push_back(ModuleKind::poly(j));
    out.push_back(ModuleKind::mpoly(j));
    out.push_back(ModuleKind::kway(j));
  }
  return out;
}

Tensor batch_for(const Model& m, std::int64_t n, std::mt19937_64& rng) {
  Shape s{n};
  s.insert(s.end(), m.graph.input_shape().begin(), m.graph.input_shape().end());
  return random_tensor(s, m.meta.precision, rng);
}

// Moves zero-initialised biases off zero so no ReLU input sits exactly on
// the kink, where central differences see half the slope.
void jitter_biases(ParamStore& params, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.1);
  params.for_each_mut([&](const std::string&, const std::string& name, ParamEntry& e) {
    if (!name.ends_with(".bias")) return;
    for (std::size_t i = 0; i < e.value.size(); ++i) e.value.set(i, e.value.at(i) + n(rng));
  });
}

int count_nodes(const Model& m, const std::string& key, const std::string& param) {
  int n = 0;
  for (const auto& node : m.graph.nodes()) {
    if (node.share_key == key && node.param == param) ++n;
  }
  return n;
}

TEST(BlockArchTest, ParseDescribeAndParams) {
  EXPECT_EQ(BlockArch::parse("dense:4,8"), BlockArch::dense(4, 8));
  EXPECT_EQ(BlockArch::parse("conv:16,4"), BlockArch::conv(16, 4));
  EXPECT_EQ(BlockArch::parse(BlockArch::conv(16, 4).describe()), BlockArch::conv(16, 4));
  EXPECT_EQ(BlockArch::dense(4, 8).block_params(), 76);
  // 1x1 16->4, 3x3 4->4, 1x1 4->16, with biases.
  EXPECT_EQ(BlockArch::conv(16, 4).block_params(), 16 * 4 + 4 + 9 * 16 + 4 + 4 * 16 + 16);
  EXPECT_EQ(BlockArch::dense(16, 32).at_width(32), BlockArch::dense(32, 64));
  EXPECT_EQ(BlockArch::conv(16, 4).at_width(64), BlockArch::conv(64, 4));
  for (const char* bad : {"", "dense", "dense:4", "conv:5,2", "mlp:3,3", "dense:0,4"}) {
    EXPECT_THROW(BlockArch::parse(bad), ValidationError) << bad;
  }
  EXPECT_EQ(last_layer_param(BlockArch::dense(4, 8)), "fc2");
  EXPECT_EQ(last_layer_param(BlockArch::conv(4, 2)), "conv3");
}

TEST(LowerModuleTest, DenseBlockParamCount) {
  const auto m = lower_module(ModuleKind::ir(), BlockArch::dense(4, 8), 1.0, 1);
  EXPECT_EQ(m.params.trainable_count("M.0.F"), 76);
}

TEST(LowerModuleTest, SharingAndMemoization) {
  for (int k = 1; k <= 4; ++k) {
    const auto poly = lower_module(ModuleKind::poly(k), BlockArch::dense(4, 8), 1.0, 1);
    EXPECT_EQ(poly.params.groups().size(), 1u);
    EXPECT_EQ(count_nodes(poly, "M.0.F", "fc1"), k);
    EXPECT_EQ(poly.modules[0].block_apps, k);
    const auto naive = lower_module(ModuleKind::poly(k), BlockArch::dense(4, 8), 1.0, 1,
                                    f64(ModuleForm::Naive));
    EXPECT_EQ(count_nodes(naive, "M.0.F", "fc1"), k * (k + 1) / 2);
    const auto mp = lower_module(ModuleKind::mpoly(k), BlockArch::dense(4, 8), 1.0, 1);
    EXPECT_EQ(mp.params.groups().size(), static_cast<std::size_t>(k));
    EXPECT_EQ(mp.modules[0].block_apps, k);
    const auto kw = lower_module(ModuleKind::kway(k), BlockArch::dense(4, 8), 1.0, 1);
    EXPECT_EQ(kw.params.groups().size(), static_cast<std::size_t>(k));
  }
  EXPECT_EQ(count_nodes(lower_module(ModuleKind::poly(2), BlockArch::dense(4, 8), 1.0, 1), "M.0.F", "fc2"), 2);
}

TEST(LowerModuleTest, ZeroResidualGivesReluOfInput) {
  std::mt19937_64 rng(1);
  for (const auto& arch : {BlockArch::dense(4, 8), BlockArch::conv(4, 2)}) {
    auto m = lower_module(ModuleKind::ir(), arch, 1.0, 3, f64());
    zero_last_layer(m.params, "M.0.F", arch);
    const auto x = batch_for(m, 5, rng);
    const auto y = forward(m.graph, m.params, x).output;
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.at(i), std::max(0.0, x.at(i)));
  }
}

TEST(LowerModuleTest, ScaledConstantBranch) {
  std::mt19937_64 rng(2);
  const auto arch = BlockArch::dense(4, 8);
  auto m = lower_module(ModuleKind::ir(), arch, 0.3, 3, f64());
  m.params.get_mut("M.0.F", "fc2.weight").fill(0.0);
  m.params.get_mut("M.0.F", "fc2.bias").fill(1.0);
  const auto x = batch_for(m, 6, rng);
  const auto y = forward(m.graph, m.params, x).output;
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y.at(i), std::max(0.0, x.at(i) + 0.3));
}

TEST(LowerModuleTest, NaiveAndCascadedAgree) {
  std::mt19937_64 rng(3);
  for (const auto& arch : {BlockArch::dense(8, 16), BlockArch::conv(4, 2)}) {
    for (const auto& kind : kinds_up_to(4)) {
      for (double beta : {1.0, 0.3}) {
        const auto c = lower_module(kind, arch, beta, 9, f64());
        const auto n = lower_module(kind, arch, beta, 9, f64(ModuleForm::Naive));
        ASSERT_TRUE(c.params.bitwise_equal(n.params));
        const auto x = batch_for(c, 10, rng);
        EXPECT_LE(max_relative_difference(forward(c.graph, c.params, x).output,
                                          forward(n.graph, n.params, x).output, 1e-12),
                  1e-9)
            << kind.token() << " " << arch.describe();
      }
    }
  }
}

TEST(LowerModuleTest, SharedBlockMutationReachesEveryOccurrence) {
  std::mt19937_64 rng(4);
  const auto arch = BlockArch::dense(4, 8);
  auto m = lower_module(ModuleKind::poly(2), arch, 1.0, 5, f64());
  std::vector<NodeId> sites;
  for (std::size_t id = 0; id < m.graph.size(); ++id) {
    const auto& node = m.graph.nodes()[id];
    if (node.share_key == "M.0.F" && node.param == "fc2") sites.push_back(static_cast<NodeId>(id));
  }
  ASSERT_EQ(sites.size(), 2u);
  const auto x = batch_for(m, 3, rng);
  const auto before = forward(m.graph, m.params, x).tape;
  auto& w = m.params.get_mut("M.0.F", "fc1.weight");
  w.set(0, w.at(0) + 0.5);
  const auto after = forward(m.graph, m.params, x).tape;
  for (NodeId s : sites) {
    EXPECT_FALSE(before.values[static_cast<std::size_t>(s)].bitwise_equal(after.values[static_cast<std::size_t>(s)]));
  }
}

TEST(LowerModuleTest, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (const auto& arch : {BlockArch::dense(3, 4), BlockArch::conv(4, 2)}) {
    for (const auto& kind : kinds_up_to(3)) {
      for (auto form : {ModuleForm::Cascaded, ModuleForm::Naive}) {
        auto opts = f64(form);
        opts.spatial = 2;
        auto m = lower_module(kind, arch, 0.3, 6, opts);
        jitter_biases(m.params, rng);
        const auto x = batch_for(m, 2, rng);
        ForwardOptions train;
        train.mode = Mode::Train;
        const auto fwd = forward(m.graph, m.params, x, train);
        const auto probe = random_tensor(fwd.output.shape(), Precision::F64, rng);
        const auto grads = backward(fwd.tape, probe);
        auto loss_p = [&](const ParamStore& p) { return dot(forward(m.graph, p, x, train).output, probe); };
        auto loss_x = [&](const Tensor& in) { return dot(forward(m.graph, m.params, in, train).output, probe); };
        EXPECT_LE(max_rel_error(grads.params, numeric_param_grad(loss_p, m.params, 1e-6), 1e-4), 1e-5)
            << kind.token() << " " << arch.describe();
        EXPECT_LE(max_rel_error(grads.input, numeric_input_grad(loss_x, x, 1e-6), 1e-4), 1e-5)
            << kind.token() << " " << arch.describe();
      }
    }
  }
}

TEST(LowerModuleTest, SharedGradientIsSumOfUntiedGradients) {
  std::mt19937_64 rng(6);
  const auto arch = BlockArch::dense(4, 6);
  for (int k : {2, 3}) {
    const auto poly = lower_module(ModuleKind::poly(k), arch, 1.0, 7, f64(ModuleForm::Naive));
    auto mp = lower_module(ModuleKind::mpoly(k), arch, 1.0, 7, f64(ModuleForm::Naive));
    // With every mpoly block set to F, mpoly-2 (I+F+GF) and poly-2 (I+F+FF)
    // are the same function. For k = 3 the monomials differ (HGF vs FFF with
    // G = H = F), which is still the same function.
    for (const auto& letter : {"F", "G", "H"}) {
      if (mp.params.contains_group(std::string("M.0.") + letter)) {
        mp.params.set_group(std::string("M.0.") + letter, poly.params.group("M.0.F"));
      }
    }
    const auto x = batch_for(poly, 4, rng);
    const auto probe = random_tensor({4, 4}, Precision::F64, rng);
    ForwardOptions train;
    train.mode = Mode::Train;
    const auto gp = backward(forward(poly.graph, poly.params, x, train).tape, probe).params;
    const auto gm = backward(forward(mp.graph, mp.params, x, train).tape, probe).params;
    for (const auto& [name, entry] : gp.group("M.0.F")) {
      Tensor sum = Tensor::zeros(entry.value.shape(), Precision::F64);
      for (const auto& [key, group] : gm.groups()) sum.add_scaled(group.at(name).value);
      EXPECT_LE(max_relative_difference(entry.value, sum, 1e-12), 1e-10) << k << " " << name;
    }
  }
}

TEST(LowerTest, PresetModuleCountsAndOutputShape) {
  auto c = preset("ir-3-6-3");
  apply_stage_defaults(c);
  const auto m = lower(c, BlockArch::dense(16, 32), 1.0, 1);
  EXPECT_EQ(m.module_count(), 12u);
  EXPECT_EQ(m.graph.node(m.graph.output()).shape, (Shape{4}));
  EXPECT_EQ(m.graph.input_shape(), (Shape{3, 32, 32}));
  EXPECT_EQ(m.path_counts(), std::vector<int>(12, 1));
  for (std::size_t j = 0; j < m.modules.size(); ++j) EXPECT_EQ(m.modules[j].index, static_cast<int>(j));
  EXPECT_EQ(m.modules[3].stage, "B");
  EXPECT_EQ(m.modules[3].stage_index, 0);
  EXPECT_EQ(m.modules[3].key_prefix, "B.0.");
}

TEST(LowerTest, ConvNetworkRunsAndIsDeterministic) {
  auto c = parse_network("A: poly-2; B: 2-way -> mpoly-2");
  c.input_size = 16;
  c.classes = 3;
  apply_stage_defaults(c);
  const auto a = lower(c, BlockArch::conv(16, 4), 0.5, 11);
  const auto b = lower(c, BlockArch::conv(16, 4), 0.5, 11);
  const auto other = lower(c, BlockArch::conv(16, 4), 0.5, 12);
  EXPECT_TRUE(a.params.bitwise_equal(b.params));
  EXPECT_FALSE(a.params.bitwise_equal(other.params));
  EXPECT_EQ(a.path_counts(), (std::vector<int>{2, 2, 2}));
  std::mt19937_64 rng(1);
  const auto x = random_tensor({2, 3, 16, 16}, Precision::F32, rng);
  const auto y = forward(a.graph, a.params, x).output;
  EXPECT_EQ(y.shape(), (Shape{2, 3}));
  EXPECT_TRUE(y.bitwise_equal(forward(b.graph, b.params, x).output));
}

TEST(LowerTest, ParametersShareAcrossPolyOccurrencesOnly) {
  auto c = parse_network("A: poly-3 -> mpoly-3 -> 3-way");
  apply_stage_defaults(c);
  const auto m = lower(c, BlockArch::dense(16, 32), 1.0, 2);
  EXPECT_TRUE(m.params.contains_group("A.0.F"));
  EXPECT_FALSE(m.params.contains_group("A.0.G"));
  EXPECT_TRUE(m.params.contains_group("A.1.H"));
  EXPECT_TRUE(m.params.contains_group("A.2.H"));
  const auto per_block = BlockArch::dense(16, 32).block_params();
  EXPECT_EQ(m.params.trainable_count("A.0.F"), per_block);
}

TEST(LowerTest, RejectsBadBeta) {
  auto c = parse_network("A: ir");
  apply_stage_defaults(c);
  EXPECT_THROW(lower(c, BlockArch::dense(16, 32), 0.0, 1), ValidationError);
  EXPECT_THROW(lower_module(ModuleKind::ir(), BlockArch::dense(4, 8), 1.2, 1), ValidationError);
  NetworkConfig empty;
  EXPECT_THROW(lower(empty, BlockArch::dense(16, 32), 1.0, 1), ValidationError);
}

TEST(CheckpointTest, RoundTripsModel) {
  auto c = parse_network("A: poly-2 -> ir; B: 2-way");
  c.input_size = 16;
  apply_stage_defaults(c);
  auto m = lower(c, BlockArch::conv(16, 4), 0.3, 21);
  m.meta.iteration = 123;
  const auto path = std::filesystem::temp_directory_path() / "polystack_ckpt_test.pnck";
  save_checkpoint(path.string(), m);
  const auto back = load_checkpoint(path.string());
  EXPECT_TRUE(back.params.bitwise_equal(m.params));
  EXPECT_EQ(back.meta.config, m.meta.config);
  EXPECT_EQ(back.meta.arch, m.meta.arch);
  EXPECT_EQ(back.meta.beta, 0.3);
  EXPECT_EQ(back.meta.seed, 21u);
  EXPECT_EQ(back.meta.iteration, 123);
  std::mt19937_64 rng(1);
  const auto x = random_tensor({2, 3, 16, 16}, Precision::F32, rng);
  EXPECT_TRUE(forward(back.graph, back.params, x).output.bitwise_equal(forward(m.graph, m.params, x).output));

  // Truncated and foreign files are rejected.
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  EXPECT_THROW(load_checkpoint(path.string()), ValidationError);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "not a checkpoint";
  }
  EXPECT_THROW(load_checkpoint(path.string()), ValidationError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path.string()), ValidationError);
}

TEST(CheckpointTest, RoundTripsModuleModel) {
  const auto m = lower_module(ModuleKind::mpoly(3), BlockArch::dense(4, 8), 0.5, 3, f64());
  const auto path = std::filesystem::temp_directory_path() / "polystack_ckpt_module.pnck";
  save_checkpoint(path.string(), m);
  const auto back = load_checkpoint(path.string());
  EXPECT_TRUE(back.meta.headless);
  EXPECT_EQ(back.meta.precision, Precision::F64);
  EXPECT_TRUE(back.params.bitwise_equal(m.params));
  EXPECT_EQ(back.modules[0].kind, ModuleKind::mpoly(3));
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace polystack
