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

#include "polystack/operator_algebra.hpp"

namespace polystack {

struct StageConfig {
  std::string name;
  std::vector<ModuleKind> modules;
  std::int64_t width = 16;      // channels (conv blocks) or feature dimension
  std::string resolution;       // e.g. "16x16"

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

struct NetworkConfig {
  std::vector<StageConfig> stages;
  std::int64_t input_size = 32;
  std::int64_t classes = 4;

  std::size_t module_count() const;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

// Width of the first stage; every later stage doubles it.
inline constexpr std::int64_t kBaseStageWidth = 16;

// Parses the architecture DSL:
//
//   network := stage (';' stage)* | chain
//   stage   := NAME ':' chain
//   chain   := group ('->' group)*
//   group   := module | '(' chain ')' 'x' INT
//   module  := 'ir' | 'poly-'INT | 'mpoly-'INT | INT'-way'
//
// A bare chain is a single stage named A. '#' starts a line comment, "→" and
// "×" are accepted for "->" and "x", and a new "NAME:" may start a stage
// without a ';'. The shorthand "IR a-b-c" yields stages A, B, C with a, b, c
// plain residual units. Repetition groups are unrolled. Throws ParseError
// (with line and column) or ValidationError.
NetworkConfig parse_network(std::string_view text);

// Canonical text with runs re-compressed greedily into "(...) x n" groups.
// parse_network(render_network(c)) == c for any parsed config.
std::string render_network(const NetworkConfig& config);

// Named configurations: ir-3-6-3, ir-6-12-6, ir-5-10-5, ir-20-56-20,
// mixed-b-6-12-6, very-deep-polynet. The pairs in very-deep-polynet's B and C
// stages put poly-3 before 2-way. Throws ValidationError for unknown names.
NetworkConfig preset(std::string_view name);
std::string preset_text(std::string_view name);
std::vector<std::string> preset_names();

// A preset name, or DSL text otherwise.
NetworkConfig resolve_network(std::string_view text_or_preset);

// Fills stage widths (16, 32, 64, ...) and resolution tags from input_size.
void apply_stage_defaults(NetworkConfig& config);

// Checks the structural invariants: at least one stage, every stage
// non-empty with a positive width, unique stage names.
void validate(const NetworkConfig& config);

}  // namespace polystack
