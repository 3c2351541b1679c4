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

#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace polystack::cli {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Line-oriented "key = value" file; '#' starts a comment, blank lines are
// skipped. Keys are long flag names without the dashes.
KeyValues read_config_file(const std::string& path);

// Splices "--key=value" pairs from every --config file in `args` in front of
// the remaining command-line arguments (right after the subcommand name), so
// flags given on the command line win.
std::vector<std::string> expand_config_args(const std::vector<std::string>& args);

// Resolved value of every option of `app`: given values, else the default.
KeyValues resolved_options(const CLI::App& app);

// Writes manifest.json (command, options, seeds, version) and run.conf, a
// config file that replays the run, into `dir`.
void write_manifest(const std::string& dir, const std::string& command, const KeyValues& options,
                    const nlohmann::json& extra = nlohmann::json::object());

std::vector<double> parse_double_list(const std::string& text, const std::string& what);
std::vector<int> parse_int_list(const std::string& text, const std::string& what);

}  // namespace polystack::cli
