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
#include <iosfwd>
#include <string>

#include <CLI11.hpp>

#include "polystack/config_dsl.hpp"
#include "polystack/data_pipeline.hpp"
#include "polystack/network_builder.hpp"

namespace polystack::cli {

struct CommonOptions {
  std::uint64_t seed = 0;
  std::string out;
};

struct ModelOptions {
  std::string network = "IR 1-2-1";
  std::string arch = "dense:16,32";
  std::int64_t input_size = 32;
  std::int64_t base_width = kBaseStageWidth;
  double beta = 1.0;
  std::string precision = "f32";
  std::string form = "cascaded";
};

struct DataOptions {
  std::size_t size = 2000;
  int classes = 4;
  std::int64_t image_size = 32;
  std::uint64_t data_seed = 1;
  std::string data_dir;
};

void add_common_options(CLI::App* app, CommonOptions& o);
void add_model_options(CLI::App* app, ModelOptions& o);
void add_data_options(CLI::App* app, DataOptions& o);

NetworkConfig build_config(const ModelOptions& o, std::int64_t classes);
LowerOptions lower_options(const ModelOptions& o);
ModuleForm parse_form(const std::string& text);
Dataset load_data(const DataOptions& o);

// Each command registers its subcommand on `app` and returns the callback
// that runs it once parsing succeeded.
using Runner = std::function<int(std::ostream& out, std::ostream& err)>;

Runner add_parse(CLI::App& app);
Runner add_expand(CLI::App& app);
Runner add_rewrite(CLI::App& app);
Runner add_analyze(CLI::App& app);
Runner add_gradcheck(CLI::App& app);
Runner add_surgery(CLI::App& app);
Runner add_train(CLI::App& app);
Runner add_eval(CLI::App& app);
Runner add_sweep(CLI::App& app);

}  // namespace polystack::cli
