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

#include "commands.hpp"
#include "polystack/error.hpp"

namespace polystack::cli {

void add_common_options(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", "Read options from a key = value file");
  app->add_option("--seed", o.seed, "Master seed; every random stream derives from it");
  app->add_option("--out", o.out, "Directory for reports and manifest.json");
}

void add_model_options(CLI::App* app, ModelOptions& o) {
  app->add_option("--network", o.network, "Preset name or architecture DSL");
  app->add_option("--arch", o.arch, "Residual block: dense:d,h or conv:C,r");
  app->add_option("--input-size", o.input_size, "Input image side length")->check(CLI::PositiveNumber);
  app->add_option("--base-width", o.base_width, "Width of the first stage; later stages double it")
      ->check(CLI::PositiveNumber);
  app->add_option("--beta", o.beta, "Residual scaling in (0, 1]");
  app->add_option("--precision", o.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  app->add_option("--form", o.form, "cascaded or naive module lowering")
      ->check(CLI::IsMember({"cascaded", "naive"}));
}

void add_data_options(CLI::App* app, DataOptions& o) {
  app->add_option("--data-size", o.size, "Synthetic dataset size")->check(CLI::PositiveNumber);
  app->add_option("--classes", o.classes, "Number of classes")->check(CLI::Range(2, 1000));
  app->add_option("--image-size", o.image_size, "Synthetic image side length")->check(CLI::Range(8, 4096));
  app->add_option("--data-seed", o.data_seed, "Seed of the synthetic dataset");
  app->add_option("--data-dir", o.data_dir, "Load <label>_<index>.tns files instead of generating data");
}

NetworkConfig build_config(const ModelOptions& o, std::int64_t classes) {
  NetworkConfig config = resolve_network(o.network);
  config.input_size = o.input_size;
  config.classes = classes;
  apply_stage_defaults(config);
  std::int64_t width = o.base_width;
  for (auto& stage : config.stages) {
    stage.width = width;
    width *= 2;
  }
  validate(config);
  return config;
}

ModuleForm parse_form(const std::string& text) {
  if (text == "cascaded") return ModuleForm::Cascaded;
  if (text == "naive") return ModuleForm::Naive;
  throw ValidationError("unknown module form '" + text + "' (use cascaded or naive)");
}

LowerOptions lower_options(const ModelOptions& o) {
  LowerOptions lo;
  lo.form = parse_form(o.form);
  lo.precision = parse_precision(o.precision);
  return lo;
}

Dataset load_data(const DataOptions& o) {
  if (!o.data_dir.empty()) return import_dataset(o.data_dir, o.classes);
  return synth_dataset(o.size, o.classes, o.image_size, o.data_seed);
}

}  // namespace polystack::cli
