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
#include <string>
#include <string_view>
#include <vector>

#include "polystack/config_dsl.hpp"
#include "polystack/graph.hpp"
#include "polystack/operator_algebra.hpp"

namespace polystack {

// Shape-preserving stand-in for a residual block.
//   Dense: x -> fc2(relu(fc1(x))), dim -> hidden -> dim
//   Conv:  1x1 C->C/r, relu, 3x3 C/r->C/r, relu, 1x1 C/r->C
struct BlockArch {
  enum class Kind : std::uint8_t { Dense, Conv };

  Kind kind = Kind::Dense;
  std::int64_t dim = 16;       // Dense: feature dim d;  Conv: channels C
  std::int64_t hidden = 32;    // Dense: hidden width h; Conv: reduction r

  static BlockArch dense(std::int64_t d, std::int64_t h) { return {Kind::Dense, d, h}; }
  static BlockArch conv(std::int64_t channels, std::int64_t reduction) {
    return {Kind::Conv, channels, reduction};
  }

  // "dense:d,h" or "conv:C,r".
  static BlockArch parse(std::string_view text);
  std::string describe() const;

  // The same family resized to `width` features/channels. Dense blocks keep
  // the hidden/dim ratio (rounded, at least 1).
  BlockArch at_width(std::int64_t width) const;

  // Trainable scalars of one block.
  std::int64_t block_params() const;

  friend bool operator==(const BlockArch&, const BlockArch&) = default;
};

// Name of the last layer of a block ("fc2" or "conv3"); zero_last clears it.
std::string last_layer_param(const BlockArch& arch);

enum class ModuleForm : std::uint8_t {
  Cascaded,  // cascade(expand_module(...)) with prefix memoization
  Naive,     // expand_module(...) with every block reference evaluated
};

struct LowerOptions {
  ModuleForm form = ModuleForm::Cascaded;
  Precision precision = Precision::F32;
  // Module-level models only: spatial extent of the input for conv blocks.
  std::int64_t spatial = 4;
};

struct ModuleInfo {
  std::string stage;
  int stage_index = 0;   // position within the stage
  int index = 0;         // position within the network (gate slot)
  ModuleKind kind;
  std::string key_prefix;  // "A.0."
  OperatorExpr expr;       // expression that was lowered (share keys prefixed)
  int path_count = 1;
  std::int64_t block_apps = 0;  // block subgraphs in the lowered graph
  NodeId input_node = 0;
  NodeId sum_node = 0;     // x + beta * R, before the ReLU
  NodeId output_node = 0;
};

struct ModelMeta {
  NetworkConfig config;
  BlockArch arch;
  double beta = 1.0;
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;
  ModuleForm form = ModuleForm::Cascaded;
  Precision precision = Precision::F32;
  // A module-level model: one residual module, no stem or head.
  bool headless = false;
  std::int64_t spatial = 4;
};

struct Model {
  ComputationGraph graph;
  ParamStore params;
  std::vector<ModuleInfo> modules;
  ModelMeta meta;

  std::size_t module_count() const { return modules.size(); }
  // Per-module path counts, the shape expected by gate sampling.
  std::vector<int> path_counts() const;
};

// Builds the network: stem (3x3 conv, stride-2 downsample), stage module
// chains, stride-2 transitions doubling the width, global average pooling
// and a dense classifier. With dense blocks the features are pooled right
// after the stem and transitions are dense layers. Stage widths come from
// the config; parameters are drawn from `seed` (He fan-in normal).
Model lower(const NetworkConfig& config, const BlockArch& arch, double beta, std::uint64_t seed,
            const LowerOptions& options = {});

// A single residual module: input (d) or (C, spatial, spatial) -> module
// output. Share keys are "M.0.<letter>".
Model lower_module(ModuleKind kind, const BlockArch& arch, double beta, std::uint64_t seed,
                   const LowerOptions& options = {});

// Sets the last layer of every block in `share_key` to zero.
void zero_last_layer(ParamStore& params, const std::string& share_key, const BlockArch& arch);

// Replaces module kinds position by position. Unchanged modules are copied
// whole; a changed module keeps its first-order block F, and k-way/mpoly
// targets of the same family also keep their common blocks. Other blocks are
// initialized from `seed`, or zeroed in their last layer with zero_last.
// Throws ValidationError if stages or module counts differ, or if zero_last
// would have to zero a retained shared block (poly-k targets, k >= 2).
Model upgrade(const Model& model, const NetworkConfig& target, bool zero_last, std::uint64_t seed);

// Inserts per_stage_new[i] units into stage i, spread evenly between the
// original units (ties toward earlier gaps, round-robin when there are more
// new units than originals). A new unit takes the kind of the original it
// follows. Original parameters are copied bitwise.
Model deepen_interleave(const Model& model, const std::vector<int>& per_stage_new, bool zero_last,
                        std::uint64_t seed);

// Gap index (0-based original unit after which to insert) for each of m new
// units in a stage of n originals.
std::vector<int> insertion_gaps(int n, int m);

// Single-file checkpoint: "PNCK", u64 manifest length, JSON manifest, u64
// entry count, then (key, name, trainable, tensor) entries.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace polystack
