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
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "polystack/network_builder.hpp"

namespace polystack {

// One breakdown row. Residual modules have module_index >= 0; stem,
// transition and head rows use -1 and kind "-".
struct CostRow {
  std::string section;   // "stem", stage name, "A-B", "head"
  std::string stage;     // owning stage, or the section for non-stage rows
  int module_index = -1; // network-wide module index
  std::string kind = "-";
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::int64_t block_apps = 0;
};

// Analytic cost of one forward sample. Trainable scalars are counted once per
// share key. MACs: dense in*out, conv Ho*Wo*k*k*Cin*Cout; norms, activations,
// sums and pooling cost 0 MACs (norm affine parameters are counted).
struct CostReport {
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::int64_t block_apps = 0;
  std::vector<CostRow> rows;

  // Totals over the rows whose section is not listed.
  std::int64_t macs_excluding(const std::vector<std::string>& sections) const;
  std::int64_t params_excluding(const std::vector<std::string>& sections) const;
};

// Parameters only (macs left at 0).
CostReport count_params(const Model& model);
// Full report for a given per-sample input shape (defaults to the graph's).
CostReport count_macs(const Model& model, const std::optional<Shape>& input_shape = std::nullopt);

// Same nodes re-added on a new input shape so every extent is re-inferred.
ComputationGraph reshape_graph(const ComputationGraph& graph, const Shape& input_shape);

// CSV with columns config,stage,module_index,kind,params,macs,block_apps,
// followed by a "total" row. JSON mirrors the field names.
std::string cost_csv(const std::string& config_name, const CostReport& report);
std::string cost_json(const std::string& config_name, const CostReport& report);

struct EfficiencyRow {
  std::string config;
  std::string network;   // canonical DSL
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::int64_t block_apps = 0;
  std::optional<double> accuracy;
};

struct EfficiencyTable {
  std::vector<EfficiencyRow> rows;
  std::vector<std::string> warnings;  // accuracy keys without a config, and vice versa
};

// One row per named config. Accuracy entries are joined by name; mismatched
// keys are reported in `warnings`.
EfficiencyTable efficiency_table(const std::vector<std::pair<std::string, NetworkConfig>>& configs,
                                 const BlockArch& arch,
                                 const std::map<std::string, double>& accuracy = {});

std::string efficiency_csv(const EfficiencyTable& table);
std::string efficiency_json(const EfficiencyTable& table);

// The stage-by-kind grid over `base`: for every stage and each of 2-way,
// 3-way, poly-2, poly-3, mpoly-2, mpoly-3, the stage's units are replaced by
// that kind. The baseline comes first, named "baseline"; the rest are named
// "<stage>:<kind>".
std::vector<std::pair<std::string, NetworkConfig>> ablation_grid(const NetworkConfig& base);

}  // namespace polystack
