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

#include <algorithm>
#include <set>

#include "polystack/error.hpp"
#include "polystack/network_builder.hpp"

namespace polystack {

namespace {

bool is_module_key(const Model& model, const std::string& key) {
  return std::any_of(model.modules.begin(), model.modules.end(), [&](const ModuleInfo& m) {
    return key.starts_with(m.key_prefix);
  });
}

// Block letters of a module ("F", "G", ...), from its share keys.
std::vector<std::string> letters(const ModuleInfo& m) {
  std::vector<std::string> out;
  for (const auto& key : share_keys(m.expr)) out.push_back(key.substr(m.key_prefix.size()));
  return out;
}

Model relower(const Model& source, const NetworkConfig& config, std::uint64_t seed) {
  LowerOptions opts;
  opts.form = source.meta.form;
  opts.precision = source.meta.precision;
  opts.spatial = source.meta.spatial;
  if (source.meta.headless) {
    return lower_module(config.stages.front().modules.front(), source.meta.arch, source.meta.beta, seed,
                        opts);
  }
  return lower(config, source.meta.arch, source.meta.beta, seed, opts);
}

void copy_shared_groups(const Model& source, Model& out) {
  for (const auto& [key, group] : source.params.groups()) {
    if (is_module_key(source, key)) continue;
    if (!out.params.contains_group(key)) {
      throw ValidationError("surgery target lacks parameter group '" + key + "'");
    }
    out.params.set_group(key, group);
  }
}

BlockArch stage_arch(const Model& model, const std::string& stage) {
  for (const auto& s : model.meta.config.stages) {
    if (s.name == stage) return model.meta.arch.at_width(s.width);
  }
  throw ValidationError("unknown stage '" + stage + "'");
}

}  // namespace

Model upgrade(const Model& model, const NetworkConfig& target_in, bool zero_last, std::uint64_t seed) {
  const NetworkConfig& src = model.meta.config;
  NetworkConfig target = target_in;
  if (target.stages.size() != src.stages.size()) {
    throw ValidationError("upgrade target has " + std::to_string(target.stages.size()) +
                          " stages, source has " + std::to_string(src.stages.size()));
  }
  for (std::size_t s = 0; s < src.stages.size(); ++s) {
    if (target.stages[s].name != src.stages[s].name ||
        target.stages[s].modules.size() != src.stages[s].modules.size()) {
      throw ValidationError("upgrade target stage '" + target.stages[s].name +
                            "' does not match the source layout");
    }
    target.stages[s].width = src.stages[s].width;
    target.stages[s].resolution = src.stages[s].resolution;
  }
  target.input_size = src.input_size;
  target.classes = src.classes;

  Model out = relower(model, target, seed);
  out.meta.iteration = model.meta.iteration;
  copy_shared_groups(model, out);

  for (std::size_t j = 0; j < model.modules.size(); ++j) {
    const ModuleInfo& from = model.modules[j];
    const ModuleInfo& to = out.modules[j];
    if (from.kind == to.kind) {
      for (const auto& l : letters(from)) {
        out.params.set_group(to.key_prefix + l, model.params.group(from.key_prefix + l));
      }
      continue;
    }
    if (zero_last && to.kind.family == ModuleKind::Family::Poly && to.kind.order >= 2) {
      throw ValidationError("zero_last cannot apply to " + to.kind.token() + " at " + to.key_prefix +
                            ": its only block is the retained F");
    }
    std::set<std::string> retained{"F"};
    const bool same_family = from.kind.family == to.kind.family &&
                             (to.kind.family == ModuleKind::Family::MPoly ||
                              to.kind.family == ModuleKind::Family::KWay);
    const auto source_letters = letters(from);
    const auto target_letters = letters(to);
    if (same_family) {
      for (const auto& l : target_letters) {
        if (std::find(source_letters.begin(), source_letters.end(), l) != source_letters.end()) {
          retained.insert(l);
        }
      }
    }
    const BlockArch arch = stage_arch(out, to.stage);
    for (const auto& l : target_letters) {
      if (retained.contains(l)) {
        out.params.set_group(to.key_prefix + l, model.params.group(from.key_prefix + l));
      } else if (zero_last) {
        zero_last_layer(out.params, to.key_prefix + l, arch);
      }
    }
  }
  return out;
}

std::vector<int> insertion_gaps(int n, int m) {
  if (n < 1 || m < 0) throw ValidationError("insertion needs at least one original unit");
  std::vector<int> gaps;
  gaps.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    gaps.push_back(m <= n ? static_cast<int>(static_cast<std::int64_t>(j) * n / m) : j % n);
  }
  std::sort(gaps.begin(), gaps.end());
  return gaps;
}

Model deepen_interleave(const Model& model, const std::vector<int>& per_stage_new, bool zero_last,
                        std::uint64_t seed) {
  const NetworkConfig& src = model.meta.config;
  if (model.meta.headless) throw ValidationError("cannot deepen a single-module model");
  if (per_stage_new.size() != src.stages.size()) {
    throw ValidationError("need one insertion count per stage (" + std::to_string(src.stages.size()) +
                          "), got " + std::to_string(per_stage_new.size()));
  }
  NetworkConfig target = src;
  // origin[stage][position] = original stage index, or -1 for an inserted unit.
  std::vector<std::vector<int>> origin(src.stages.size());
  for (std::size_t s = 0; s < src.stages.size(); ++s) {
    if (per_stage_new[s] < 0) throw ValidationError("negative insertion count");
    const auto& mods = src.stages[s].modules;
    const auto gaps = insertion_gaps(static_cast<int>(mods.size()), per_stage_new[s]);
    std::vector<ModuleKind> kinds;
    std::size_t g = 0;
    for (std::size_t o = 0; o < mods.size(); ++o) {
      kinds.push_back(mods[o]);
      origin[s].push_back(static_cast<int>(o));
      for (; g < gaps.size() && gaps[g] == static_cast<int>(o); ++g) {
        kinds.push_back(mods[o]);
        origin[s].push_back(-1);
      }
    }
    target.stages[s].modules = std::move(kinds);
  }

  Model out = relower(model, target, seed);
  out.meta.iteration = model.meta.iteration;
  copy_shared_groups(model, out);

  std::size_t j = 0;
  for (std::size_t s = 0; s < target.stages.size(); ++s) {
    const BlockArch arch = stage_arch(out, target.stages[s].name);
    for (int o : origin[s]) {
      const ModuleInfo& to = out.modules[j++];
      if (o >= 0) {
        const std::string from_prefix = src.stages[s].name + "." + std::to_string(o) + ".";
        for (const auto& l : letters(to)) {
          out.params.set_group(to.key_prefix + l, model.params.group(from_prefix + l));
        }
      } else if (zero_last) {
        for (const auto& l : letters(to)) zero_last_layer(out.params, to.key_prefix + l, arch);
      }
    }
  }
  return out;
}

}  // namespace polystack
