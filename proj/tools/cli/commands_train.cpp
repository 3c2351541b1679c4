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

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "commands.hpp"
#include "polystack/cost_model.hpp"
#include "polystack/error.hpp"
#include "polystack/evaluation.hpp"
#include "polystack/trainer.hpp"
#include "run_config.hpp"

namespace polystack::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainFlags {
  std::int64_t iterations = 2000;
  int batch_size = 32;
  int eval_every = 100;
  double lr = 0.045;
  double lr_factor = 0.1;
  std::int64_t lr_step = 0;
  double rms_decay = 0.9;
  double rms_epsilon = 1.0;
  std::string augment = "desk";
  std::size_t train_eval_samples = 512;
  bool stochastic_paths = false;
  double max_prob = 0.25;
  std::string trigger = "off";
  std::int64_t trigger_start = 0;
  int window = 3;
  std::int64_t min_gap = 0;
  std::string rescale = "none";
};

void add_train_flags(CLI::App* sub, TrainFlags& t) {
  sub->add_option("--iterations", t.iterations, "Training iterations")->check(CLI::NonNegativeNumber);
  sub->add_option("--batch-size", t.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  sub->add_option("--eval-every", t.eval_every, "Iterations between evaluations")->check(CLI::PositiveNumber);
  sub->add_option("--lr", t.lr, "Base learning rate");
  sub->add_option("--lr-factor", t.lr_factor, "Learning-rate decay factor");
  sub->add_option("--lr-step", t.lr_step, "Iterations between decays; 0 picks iterations/3.5")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--rms-decay", t.rms_decay, "RMSProp decay");
  sub->add_option("--rms-epsilon", t.rms_epsilon, "RMSProp epsilon");
  sub->add_option("--augment", t.augment, "desk, full or none")
      ->check(CLI::IsMember({"desk", "full", "none"}));
  sub->add_option("--train-eval-samples", t.train_eval_samples, "Training images scored at each evaluation");
  sub->add_flag("--stochastic-paths", t.stochastic_paths, "Drop module paths during training");
  sub->add_option("--max-prob", t.max_prob, "Drop probability of the last module");
  sub->add_option("--trigger", t.trigger, "off (whole run), manual or auto")
      ->check(CLI::IsMember({"off", "manual", "auto"}));
  sub->add_option("--trigger-start", t.trigger_start, "First iteration with dropping for --trigger manual");
  sub->add_option("--window", t.window, "Evaluations of rising val loss that trigger auto dropping");
  sub->add_option("--min-gap", t.min_gap, "Minimum iterations before auto dropping");
  sub->add_option("--rescale", t.rescale, "none, inverse (train) or expectation (eval)")
      ->check(CLI::IsMember({"none", "inverse", "expectation"}));
}

TrainOptions train_options(const TrainFlags& t, std::uint64_t seed, std::int64_t input_size) {
  TrainOptions opts;
  opts.iterations = t.iterations;
  opts.batch_size = t.batch_size;
  opts.eval_every = t.eval_every;
  opts.seed = seed;
  opts.hp = OptimizerHP::desk(t.iterations);
  opts.hp.base_lr = t.lr;
  opts.hp.lr_factor = t.lr_factor;
  if (t.lr_step > 0) opts.hp.lr_step = t.lr_step;
  opts.hp.decay = t.rms_decay;
  opts.hp.epsilon = t.rms_epsilon;
  if (t.augment == "full") {
    opts.augment = AugmentConfig::full(input_size);
  } else if (t.augment == "none") {
    opts.augment = AugmentConfig::none(input_size);
  } else {
    opts.augment = AugmentConfig::desk(input_size);
  }
  opts.train_eval_samples = t.train_eval_samples;
  opts.paths.enabled = t.stochastic_paths;
  opts.paths.max_prob = t.max_prob;
  opts.paths.trigger = t.trigger == "manual" ? StochasticPathConfig::Trigger::Manual
                       : t.trigger == "auto" ? StochasticPathConfig::Trigger::Auto
                                             : StochasticPathConfig::Trigger::Off;
  opts.paths.manual_start = t.trigger_start;
  opts.paths.window = t.window;
  opts.paths.min_gap = t.min_gap;
  opts.paths.rescale = t.rescale == "inverse"       ? PathRescale::InverseSurvival
                       : t.rescale == "expectation" ? PathRescale::EvalExpectation
                                                    : PathRescale::None;
  return opts;
}

json record_json(const TrainRecord& r) {
  return {{"iteration", r.iteration}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss},
          {"val_top1", r.val_top1},   {"val_top5", r.val_top5},     {"train_top1", r.train_top1},
          {"lr", r.lr},               {"gates_active", r.gates_active}};
}

void print_record(std::ostream& out, const TrainRecord& r) {
  out << "iter " << std::setw(6) << r.iteration << std::fixed << std::setprecision(4) << "  loss " << r.train_loss
      << "  val_loss " << r.val_loss << std::setprecision(3) << "  val_top1 " << r.val_top1 << "  val_top5 "
      << r.val_top5 << "  train_top1 " << r.train_top1 << std::defaultfloat << "  lr " << r.lr
      << (r.gates_active ? "  paths dropped" : "") << "\n"
      << std::flush;
}

void write_text(const std::string& dir, const std::string& name, const std::string& text) {
  fs::create_directories(dir);
  std::ofstream(fs::path(dir) / name) << text;
}

std::vector<std::size_t> split_indices(const Dataset& data, const std::string& split) {
  if (split == "val") return data.split(true);
  if (split == "train") return data.split(false);
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

}  // namespace

// ---------------------------------------------------------------------------

Runner add_train(CLI::App& app) {
  struct Opts {
    ModelOptions model;
    DataOptions data;
    CommonOptions common;
    TrainFlags train;
    std::string init_checkpoint;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("train", "Train a network on the synthetic dataset");
  add_model_options(sub, o->model);
  add_data_options(sub, o->data);
  add_train_flags(sub, o->train);
  sub->add_option("--init-checkpoint", o->init_checkpoint,
                  "Start from this checkpoint (its network, arch and precision win)");
  add_common_options(sub, o->common);
  return [o, sub](std::ostream& out, std::ostream& err) {
    const Dataset data = load_data(o->data);
    Model model;
    if (o->init_checkpoint.empty()) {
      const NetworkConfig config = build_config(o->model, data.classes);
      model = lower(config, BlockArch::parse(o->model.arch), o->model.beta, o->common.seed, lower_options(o->model));
    } else {
      model = load_checkpoint(o->init_checkpoint);
      if (model.meta.config.classes != data.classes) {
        throw ValidationError("checkpoint has " + std::to_string(model.meta.config.classes) +
                              " classes, dataset has " + std::to_string(data.classes));
      }
    }
    TrainOptions opts = train_options(o->train, o->common.seed, model_input_size(model));
    if (!o->common.out.empty()) {
      write_manifest(o->common.out, "train", resolved_options(*sub));
      opts.history_path = (fs::path(o->common.out) / "history.jsonl").string();
      opts.checkpoint_dir = (fs::path(o->common.out) / "checkpoints").string();
    }
    opts.on_record = [&out](const TrainRecord& r) { print_record(out, r); };
    const CostReport cost = count_macs(model);
    out << "network " << render_network(model.meta.config) << "  arch " << model.meta.arch.describe() << "  params "
        << cost.params << "  macs " << cost.macs << "\n";
    const TrainResult result = train(std::move(model), data, opts);
    const double ms_per_iter =
        opts.iterations > 0 ? result.history.wall_ms / static_cast<double>(opts.iterations) : 0.0;
    out << "wall " << std::fixed << std::setprecision(1) << result.history.wall_ms / 1000.0 << " s ("
        << std::setprecision(2) << ms_per_iter << " ms/iter)\n"
        << std::defaultfloat;
    if (!o->common.out.empty()) {
      json j = {{"network", render_network(result.model.meta.config)},
                {"arch", result.model.meta.arch.describe()},
                {"params", cost.params},
                {"macs", cost.macs},
                {"block_apps", cost.block_apps},
                {"iterations", opts.iterations},
                {"wall_ms", result.history.wall_ms},
                {"ms_per_iter", ms_per_iter}};
      if (!result.history.records.empty()) j["final"] = record_json(result.history.records.back());
      write_text(o->common.out, "train.json", j.dump(2) + "\n");
    } else {
      err << "note: no --out given; checkpoints were not written\n";
    }
    return 0;
  };
}

// ---------------------------------------------------------------------------

Runner add_eval(CLI::App& app) {
  struct Opts {
    std::string checkpoint;
    DataOptions data;
    CommonOptions common;
    std::string split = "val";
    std::string scales = "1,1.25,1.5";
    int crops = 8;
    double fraction = 0.3;
    int batch_size = 64;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("eval", "Single-crop and multi-crop evaluation of a checkpoint");
  sub->add_option("--checkpoint", o->checkpoint, "Checkpoint file")->required();
  add_data_options(sub, o->data);
  sub->add_option("--split", o->split, "val, train or all")->check(CLI::IsMember({"val", "train", "all"}));
  sub->add_option("--scales", o->scales, "Comma-separated scales relative to the model input");
  sub->add_option("--crops", o->crops, "Crops per scale (half of them mirrored)")->check(CLI::PositiveNumber);
  sub->add_option("--fraction", o->fraction, "Fraction of crops pooled per class");
  sub->add_option("--batch-size", o->batch_size, "Batch size of single-crop evaluation")
      ->check(CLI::PositiveNumber);
  add_common_options(sub, o->common);
  return [o, sub](std::ostream& out, std::ostream& err) {
    const Model model = load_checkpoint(o->checkpoint);
    const Dataset data = load_data(o->data);
    if (model.meta.config.classes != data.classes) {
      throw ValidationError("checkpoint has " + std::to_string(model.meta.config.classes) + " classes, dataset has " +
                            std::to_string(data.classes));
    }
    PoolingConfig pool;
    pool.scales = parse_double_list(o->scales, "--scales");
    pool.crops_per_scale = o->crops;
    pool.top_fraction = o->fraction;
    pool.validate();
    const auto indices = split_indices(data, o->split);
    const EvalReport single = evaluate(model, data, indices, o->batch_size);
    const EvalReport multi = multicrop_eval(model, data, indices, pool);
    for (const auto& w : multi.warnings) err << "warning: " << w << "\n";
    out << std::fixed << std::setprecision(4);
    out << "images " << single.n_images << " (" << o->split << ")\n";
    out << "single-crop  top1 " << single.top1 << "  top5 " << single.top5 << "  loss " << single.loss << "\n";
    out << "multi-crop   top1 " << multi.top1 << "  top5 " << multi.top5 << "  (" << pool.crops_per_scale
        << " crops x " << pool.scales.size() << " scales, top " << pool.top_fraction << ")\n";
    out << std::defaultfloat;
    if (!o->common.out.empty()) {
      const json j = {{"checkpoint", o->checkpoint},
                      {"split", o->split},
                      {"images", single.n_images},
                      {"single", {{"top1", single.top1}, {"top5", single.top5}, {"loss", single.loss}}},
                      {"multi",
                       {{"top1", multi.top1},
                        {"top5", multi.top5},
                        {"scales", pool.scales},
                        {"crops_per_scale", pool.crops_per_scale},
                        {"fraction", pool.top_fraction},
                        {"warnings", multi.warnings}}}};
      write_text(o->common.out, "eval.json", j.dump(2) + "\n");
      write_manifest(o->common.out, "eval", resolved_options(*sub));
    }
    return 0;
  };
}

// ---------------------------------------------------------------------------

Runner add_sweep(CLI::App& app) {
  struct Opts {
    ModelOptions model;
    DataOptions data;
    CommonOptions common;
    TrainFlags train;
    int seeds = 1;
    int jobs = 1;
  };
  auto o = std::make_shared<Opts>();
  o->model.network = "ir-3-6-3";
  o->train.iterations = 300;
  CLI::App* sub = app.add_subcommand("sweep", "Train the stage-by-kind grid around a base network");
  add_model_options(sub, o->model);
  add_data_options(sub, o->data);
  add_train_flags(sub, o->train);
  sub->add_option("--seeds", o->seeds, "Seeds per grid cell")->check(CLI::PositiveNumber);
  sub->add_option("--jobs", o->jobs, "Cells trained concurrently")->check(CLI::PositiveNumber);
  add_common_options(sub, o->common);
  return [o, sub](std::ostream& out, std::ostream& err) {
    const Dataset data = load_data(o->data);
    const NetworkConfig base = build_config(o->model, data.classes);
    const BlockArch arch = BlockArch::parse(o->model.arch);
    const LowerOptions lo = lower_options(o->model);
    const auto grid = ablation_grid(base);

    struct Cell {
      std::size_t config = 0;
      int seed_index = 0;
      TrainRecord final;
      double ms_per_iter = 0.0;
    };
    std::vector<Cell> cells;
    for (std::size_t c = 0; c < grid.size(); ++c) {
      for (int s = 0; s < o->seeds; ++s) cells.push_back({c, s, {}, 0.0});
    }
    std::atomic<std::size_t> next{0};
    std::mutex print_mutex;
    std::exception_ptr failure;
    auto worker = [&]() {
      for (std::size_t i = next++; i < cells.size(); i = next++) {
        Cell& cell = cells[i];
        try {
          const std::uint64_t seed = derive_seed(o->common.seed, "sweep/" + std::to_string(cell.seed_index));
          NetworkConfig config = grid[cell.config].second;
          const Model model = lower(config, arch, o->model.beta, seed, lo);
          TrainOptions opts = train_options(o->train, seed, model_input_size(model));
          const TrainResult r = train(model, data, opts);
          cell.final = r.history.records.empty() ? TrainRecord{} : r.history.records.back();
          cell.ms_per_iter = opts.iterations > 0 ? r.history.wall_ms / static_cast<double>(opts.iterations) : 0.0;
          std::lock_guard lock(print_mutex);
          err << "[" << i + 1 << "/" << cells.size() << "] " << grid[cell.config].first << " seed "
              << cell.seed_index << ": val_top1 " << cell.final.val_top1 << "\n";
        } catch (...) {
          std::lock_guard lock(print_mutex);
          if (!failure) failure = std::current_exception();
          next = cells.size();
        }
      }
    };
    std::vector<std::thread> threads;
    for (int j = 1; j < o->jobs; ++j) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);

    std::ostringstream csv;
    csv << "config,stage,kind,params,macs,block_apps,val_top1,val_top5,train_top1,ms_per_iter,seeds\n";
    json rows = json::array();
    std::map<std::string, std::map<std::string, double>> pivot;  // kind -> stage -> val_top1
    double baseline_top1 = 0.0;
    for (std::size_t c = 0; c < grid.size(); ++c) {
      const auto& [name, config] = grid[c];
      const CostReport cost = count_macs(lower(config, arch, o->model.beta, o->common.seed, lo));
      double top1 = 0.0, top5 = 0.0, train1 = 0.0, ms = 0.0;
      for (const auto& cell : cells) {
        if (cell.config != c) continue;
        top1 += cell.final.val_top1 / o->seeds;
        top5 += cell.final.val_top5 / o->seeds;
        train1 += cell.final.train_top1 / o->seeds;
        ms += cell.ms_per_iter / o->seeds;
      }
      const auto colon = name.find(':');
      const std::string stage = colon == std::string::npos ? "-" : name.substr(0, colon);
      const std::string kind = colon == std::string::npos ? "baseline" : name.substr(colon + 1);
      if (colon == std::string::npos) baseline_top1 = top1;
      pivot[kind][stage] = top1;
      csv << name << "," << stage << "," << kind << "," << cost.params << "," << cost.macs << "," << cost.block_apps
          << "," << top1 << "," << top5 << "," << train1 << "," << ms << "," << o->seeds << "\n";
      rows.push_back({{"config", name},   {"stage", stage},       {"kind", kind},
                      {"params", cost.params}, {"macs", cost.macs}, {"block_apps", cost.block_apps},
                      {"val_top1", top1}, {"val_top5", top5},     {"train_top1", train1},
                      {"ms_per_iter", ms}, {"network", render_network(config)}});
    }
    out << csv.str();
    out << "\nval top-1 error by replaced stage (baseline " << std::fixed << std::setprecision(3) << baseline_top1
        << ")\n";
    out << std::left << std::setw(10) << "kind";
    for (const auto& stage : base.stages) out << std::setw(9) << stage.name;
    out << "\n";
    for (const auto& [kind, by_stage] : pivot) {
      if (kind == "baseline") continue;
      out << std::setw(10) << kind;
      for (const auto& stage : base.stages) out << std::setw(9) << by_stage.at(stage.name);
      out << "\n";
    }
    out << std::defaultfloat;
    if (!o->common.out.empty()) {
      write_text(o->common.out, "sweep.csv", csv.str());
      write_text(o->common.out, "sweep.json", json{{"base", render_network(base)}, {"rows", rows}}.dump(2) + "\n");
      write_manifest(o->common.out, "sweep", resolved_options(*sub));
    }
    return 0;
  };
}

}  // namespace polystack::cli
