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

#include "run_config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>

#include "polystack/error.hpp"
#include "polystack/rng.hpp"

namespace polystack::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

}  // namespace

KeyValues read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file '" + path + "'");
  KeyValues out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("expected 'key = value' in " + path, lineno, 1);
    }
    std::string key = trim(line.substr(0, eq));
    while (!key.empty() && key.front() == '-') key.erase(0, 1);
    if (key.empty()) throw ParseError("empty key in " + path, lineno, 1);
    if (key == "config") throw ParseError("config files cannot include other config files", lineno, 1);
    out.emplace_back(key, unquote(trim(line.substr(eq + 1))));
  }
  return out;
}

std::vector<std::string> expand_config_args(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::vector<std::string> injected;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) {
        rest.push_back(args[i]);  // let the parser report the missing value
        continue;
      }
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
      continue;
    }
    for (const auto& [k, v] : read_config_file(path)) {
      if (!v.empty()) injected.push_back("--" + k + "=" + v);  // empty means default
    }
  }
  if (injected.empty() || rest.empty()) return rest;
  std::vector<std::string> out{rest.front()};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

KeyValues resolved_options(const CLI::App& app) {
  KeyValues out;
  for (const CLI::Option* opt : app.get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names.front() == "help" || names.front() == "help-all" || names.front() == "config") {
      continue;
    }
    std::string value;
    if (opt->get_expected_min() == 0) {
      value = opt->as<bool>() ? "true" : "false";
    } else if (opt->count() > 0) {
      const auto& results = opt->results();
      value = results.empty() ? "true" : results.back();
    } else {
      value = opt->get_default_str();
    }
    out.emplace_back(names.front(), value);
  }
  return out;
}

void write_manifest(const std::string& dir, const std::string& command, const KeyValues& options,
                    const nlohmann::json& extra) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json opts = nlohmann::json::object();
  std::uint64_t seed = 0;
  for (const auto& [k, v] : options) {
    opts[k] = v;
    if (k == "seed") seed = std::stoull(v);
  }
  nlohmann::json manifest = {
      {"tool", "polystack"},
      {"version", "0.1.0"},
      {"command", command},
      {"options", opts},
      {"seeds",
       {{"master", seed},
        {"data", derive_seed(seed, "data")},
        {"augment", derive_seed(seed, "augment")},
        {"gates", derive_seed(seed, "gates")}}},
  };
  for (const auto& [k, v] : extra.items()) manifest[k] = v;
  std::ofstream(fs::path(dir) / "manifest.json") << manifest.dump(2) << "\n";
  std::ofstream conf(fs::path(dir) / "run.conf");
  conf << "# polystack " << command << "\n";
  for (const auto& [k, v] : options) {
    if (k == "out" || v.empty()) continue;
    conf << k << " = " << v << "\n";
  }
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = trim(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    double v = 0.0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
      throw ValidationError("bad number '" + item + "' in " + what);
    }
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  for (double v : parse_double_list(text, what)) {
    if (v != static_cast<double>(static_cast<int>(v))) {
      throw ValidationError("expected integers in " + what);
    }
    out.push_back(static_cast<int>(v));
  }
  return out;
}

}  // namespace polystack::cli
