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

#include "polystack/cost_model.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

#include "polystack/error.hpp"

namespace polystack {

std::int64_t CostReport::macs_excluding(const std::vector<std::string>& sections) const {
  std::int64_t n = 0;
  for (const auto& r : rows) {
    if (std::find(sections.begin(), sections.end(), r.section) == sections.end()) n += r.macs;
  }
  return n;
}

std::int64_t CostReport::params_excluding(const std::vector<std::string>& sections) const {
  std::int64_t n = 0;
  for (const auto& r : rows) {
    if (std::find(sections.begin(), sections.end(), r.section) == sections.end()) n += r.params;
  }
  return n;
}

ComputationGraph reshape_graph(const ComputationGraph& graph, const Shape& input_shape) {
  ComputationGraph out(input_shape);
  for (std::size_t i = 1; i < graph.size(); ++i) {
    Node n = graph.nodes()[i];
    n.shape.clear();
    out.add(std::move(n));
  }
  out.set_output(graph.output());
  return out;
}

namespace {

std::int64_t node_macs(const Node& n, const Shape& in) {
  switch (n.kind) {
    case OpKind::Dense:
      return n.in_features * n.out_features;
    case OpKind::Conv2D:
    case OpKind::Downsample: {
      (void)in;
      const std::int64_t area = n.shape.at(1) * n.shape.at(2);
      return area * n.kernel * n.kernel * n.in_features * n.out_features;
    }
    default:
      return 0;
  }
}

CostReport build_report(const Model& model, const ComputationGraph& graph, bool with_macs) {
  CostReport report;
  std::map<std::pair<std::string, int>, std::size_t> index;
  std::set<std::string> seen_keys;
  auto row_for = [&](const Node& n) -> CostRow& {
    const auto key = std::make_pair(n.section, n.module);
    auto it = index.find(key);
    if (it == index.end()) {
      CostRow row;
      row.section = n.section;
      row.stage = n.section;
      row.module_index = n.module;
      if (n.module >= 0) {
        const ModuleInfo& m = model.modules.at(static_cast<std::size_t>(n.module));
        row.stage = m.stage;
        row.kind = m.kind.token();
        row.block_apps = m.block_apps;
      }
      it = index.emplace(key, report.rows.size()).first;
      report.rows.push_back(row);
    }
    return report.rows[it->second];
  };
  for (std::size_t i = 1; i < graph.size(); ++i) {
    const Node& n = graph.nodes()[i];
    CostRow& row = row_for(n);
    if (with_macs) row.macs += node_macs(n, graph.node(n.inputs.front()).shape);
    if (!n.share_key.empty() && seen_keys.insert(n.share_key).second) {
      row.params += model.params.trainable_count(n.share_key);
    }
  }
  for (const auto& r : report.rows) {
    report.params += r.params;
    report.macs += r.macs;
    report.block_apps += r.block_apps;
  }
  return report;
}

}  // namespace

CostReport count_params(const Model& model) { return build_report(model, model.graph, false); }

CostReport count_macs(const Model& model, const std::optional<Shape>& input_shape) {
  if (input_shape && *input_shape != model.graph.input_shape()) {
    return build_report(model, reshape_graph(model.graph, *input_shape), true);
  }
  return build_report(model, model.graph, true);
}

std::string cost_csv(const std::string& config_name, const CostReport& report) {
  std::ostringstream out;
  out << "config,stage,module_index,kind,params,macs,block_apps\n";
  for (const auto& r : report.rows) {
    out << config_name << ',' << r.section << ',' << r.module_index << ',' << r.kind << ',' << r.params
        << ',' << r.macs << ',' << r.block_apps << '\n';
  }
  out << config_name << ",total,-1,-," << report.params << ',' << report.macs << ',' << report.block_apps
      << '\n';
  return out.str();
}

std::string cost_json(const std::string& config_name, const CostReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"config", config_name},
                    {"stage", r.section},
                    {"module_index", r.module_index},
                    {"kind", r.kind},
                    {"params", r.params},
                    {"macs", r.macs},
                    {"block_apps", r.block_apps}});
  }
  nlohmann::json j = {{"config", config_name},
                      {"params", report.params},
                      {"macs", report.macs},
                      {"block_apps", report.block_apps},
                      {"note", "norm parameters counted; norms, activations, sums and pooling cost 0 MACs"},
                      {"rows", rows}};
  return j.dump(2) + "\n";
}

EfficiencyTable efficiency_table(const std::vector<std::pair<std::string, NetworkConfig>>& configs,
                                 const BlockArch& arch, const std::map<std::string, double>& accuracy) {
  EfficiencyTable table;
  std::set<std::string> names;
  for (const auto& [name, config] : configs) {
    const Model model = lower(config, arch, 1.0, 0);
    const CostReport cost = count_macs(model);
    EfficiencyRow row{name, render_network(config), cost.params, cost.macs, cost.block_apps, std::nullopt};
    if (auto it = accuracy.find(name); it != accuracy.end()) {
      row.accuracy = it->second;
    } else if (!accuracy.empty()) {
      table.warnings.push_back("no accuracy for config '" + name + "'");
    }
    names.insert(name);
    table.rows.push_back(std::move(row));
  }
  for (const auto& [name, value] : accuracy) {
    if (!names.contains(name)) table.warnings.push_back("accuracy key '" + name + "' matches no config");
  }
  return table;
}

std::string efficiency_csv(const EfficiencyTable& table) {
  std::ostringstream out;
  out << "config,network,params,macs,block_apps,accuracy\n";
  for (const auto& r : table.rows) {
    out << r.config << ",\"" << r.network << "\"," << r.params << ',' << r.macs << ',' << r.block_apps << ',';
    if (r.accuracy) out << *r.accuracy;
    out << '\n';
  }
  return out.str();
}

std::string efficiency_json(const EfficiencyTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    nlohmann::json j = {{"config", r.config},   {"network", r.network},
                        {"params", r.params},   {"macs", r.macs},
                        {"block_apps", r.block_apps}};
    j["accuracy"] = r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json(nullptr);
    rows.push_back(std::move(j));
  }
  return nlohmann::json({{"rows", rows}, {"warnings", table.warnings}}).dump(2) + "\n";
}

std::vector<std::pair<std::string, NetworkConfig>> ablation_grid(const NetworkConfig& base) {
  static const std::vector<ModuleKind> kinds = {ModuleKind::kway(2),  ModuleKind::kway(3),
                                                ModuleKind::poly(2),  ModuleKind::poly(3),
                                                ModuleKind::mpoly(2), ModuleKind::mpoly(3)};
  std::vector<std::pair<std::string, NetworkConfig>> grid;
  grid.emplace_back("baseline", base);
  for (std::size_t s = 0; s < base.stages.size(); ++s) {
    for (const auto& kind : kinds) {
      NetworkConfig c = base;
      std::fill(c.stages[s].modules.begin(), c.stages[s].modules.end(), kind);
      grid.emplace_back(base.stages[s].name + ":" + kind.token(), std::move(c));
    }
  }
  return grid;
}

}  // namespace polystack
