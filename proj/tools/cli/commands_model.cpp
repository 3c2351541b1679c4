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

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "polystack/cost_model.hpp"
#include "polystack/error.hpp"
#include "polystack/graph.hpp"
#include "polystack/rng.hpp"
#include "run_config.hpp"

namespace polystack::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const std::string& dir, const std::string& name, const std::string& text) {
  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / name);
  if (!f) throw Error("cannot write '" + (fs::path(dir) / name).string() + "'");
  f << text;
}

Tensor random_tensor(const Shape& shape, Precision precision, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(shape_size(shape)));
  for (auto& x : v) x = rng.normal();
  return Tensor::from_values(shape, v, precision);
}

std::vector<ModuleKind> kinds_from(const std::string& text) {
  if (text == "all") {
    return {ModuleKind::ir(),    ModuleKind::poly(2),  ModuleKind::poly(3), ModuleKind::mpoly(2),
            ModuleKind::mpoly(3), ModuleKind::kway(2), ModuleKind::kway(3)};
  }
  std::vector<ModuleKind> kinds;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    kinds.push_back(ModuleKind::parse(text.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return kinds;
}

}  // namespace

// ---------------------------------------------------------------------------

Runner add_parse(CLI::App& app) {
  struct Opts {
    std::string text;
    std::string format = "text";
    CommonOptions common;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("parse", "Parse a network description; print canonical form and modules");
  sub->add_option("network", o->text, "Preset name or DSL text")->required();
  sub->add_option("--format", o->format, "text or json")->check(CLI::IsMember({"text", "json"}));
  add_common_options(sub, o->common);
  return [o, sub](std::ostream& out, std::ostream&) {
    const NetworkConfig config = resolve_network(o->text);
    json j = {{"canonical", render_network(config)},
              {"input_size", config.input_size},
              {"classes", config.classes},
              {"module_count", config.module_count()}};
    json modules = json::array();
    int index = 0;
    for (const auto& stage : config.stages) {
      for (std::size_t i = 0; i < stage.modules.size(); ++i) {
        const ModuleKind& k = stage.modules[i];
        modules.push_back({{"index", index++},
                           {"stage", stage.name},
                           {"stage_index", i},
                           {"kind", k.token()},
                           {"paths", k.path_count()},
                           {"distinct_blocks", k.distinct_blocks()},
                           {"width", stage.width},
                           {"resolution", stage.resolution}});
      }
    }
    j["modules"] = modules;
    std::ostringstream text;
    text << render_network(config) << "\n";
    text << std::left << std::setw(7) << "index" << std::setw(7) << "stage" << std::setw(7) << "unit"
         << std::setw(10) << "kind" << std::setw(7) << "paths" << std::setw(8) << "blocks" << "width\n";
    for (const auto& m : modules) {
      text << std::setw(7) << m["index"].get<int>() << std::setw(7) << m["stage"].get<std::string>()
           << std::setw(7) << m["stage_index"].get<int>() << std::setw(10) << m["kind"].get<std::string>()
           << std::setw(7) << m["paths"].get<int>() << std::setw(8) << m["distinct_blocks"].get<int>()
           << m["width"].get<std::int64_t>() << "\n";
    }
    out << (o->format == "json" ? j.dump(2) + "\n" : text.str());
    if (!o->common.out.empty()) {
      write_text(o->common.out, "parse.json", j.dump(2) + "\n");
      write_manifest(o->common.out, "parse", resolved_options(*sub));
    }
    return 0;
  };
}

// ---------------------------------------------------------------------------

namespace {

struct ExprOpts {
  std::string kind;
  double beta = 1.0;
  bool stats = false;
  bool symbolic = false;
  CommonOptions common;
};

CLI::App* add_expr_command(CLI::App& app, const char* name, const char* help, ExprOpts& o) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--kind", o.kind, "ir, poly-K, mpoly-K or K-way")->required();
  sub->add_option("--beta", o.beta, "Residual scaling in (0, 1]");
  sub->add_flag("--stats", o.stats, "Also print block applications");
  sub->add_flag("--symbolic", o.symbolic, "Also print the flat polynomial");
  add_common_options(sub, o.common);
  return sub;
}

void print_expansion(const OperatorExpr& e, std::ostream& out) {
  for (const auto& [key, term] : expand_symbolic(e)) {
    out << "  " << term.coefficient << "  " << print_expr(OperatorExpr::from_application_order(term.blocks))
        << "\n";
  }
}

int run_expr_command(const ExprOpts& o, const CLI::App& sub, bool cascaded, std::ostream& out) {
  const ModuleKind kind = ModuleKind::parse(o.kind);
  const OperatorExpr naive = expand_module(kind, o.beta);
  const OperatorExpr shown = cascaded ? cascade(naive) : naive;
  out << print_expr(shown) << "\n";
  const std::int64_t naive_apps = block_applications(naive, false);
  const std::int64_t cascaded_apps = block_applications(cascade(naive), true);
  if (o.stats) {
    out << "block applications: naive " << naive_apps << ", cascaded " << cascaded_apps << "\n";
  }
  if (o.symbolic) {
    out << "expansion:\n";
    print_expansion(shown, out);
  }
  if (!o.common.out.empty()) {
    json j = {{"kind", kind.token()},
              {"beta", o.beta},
              {"expression", print_expr(shown)},
              {"naive", print_expr(naive)},
              {"cascaded", print_expr(cascade(naive))},
              {"block_apps_naive", naive_apps},
              {"block_apps_cascaded", cascaded_apps}};
    write_text(o.common.out, std::string(sub.get_name()) + ".json", j.dump(2) + "\n");
    write_manifest(o.common.out, sub.get_name(), resolved_options(sub));
  }
  return 0;
}

}  // namespace

Runner add_expand(CLI::App& app) {
  auto o = std::make_shared<ExprOpts>();
  CLI::App* sub = add_expr_command(app, "expand", "Print the naive operator polynomial of a module kind", *o);
  return [o, sub](std::ostream& out, std::ostream&) { return run_expr_command(*o, *sub, false, out); };
}

Runner add_rewrite(CLI::App& app) {
  auto o = std::make_shared<ExprOpts>();
  CLI::App* sub = add_expr_command(app, "rewrite", "Print the cascaded (factored) form of a module kind", *o);
  return [o, sub](std::ostream& out, std::ostream&) { return run_expr_command(*o, *sub, true, out); };
}

// ---------------------------------------------------------------------------

Runner add_analyze(CLI::App& app) {
  struct Opts {
    ModelOptions model;
    CommonOptions common;
    std::int64_t classes = 4;
    std::string format = "csv";
    bool grid = false;
    std::string accuracy;
    int time_iters = 0;
    int batch_size = 32;
  };
  auto o = std::make_shared<Opts>();
  o->model.network = "ir-3-6-3";
  CLI::App* sub = app.add_subcommand("analyze", "Parameter, MAC and block-application counts");
  add_model_options(sub, o->model);
  sub->add_option("--classes", o->classes, "Number of classes")->check(CLI::Range(2, 100000));
  sub->add_option("--format", o->format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  sub->add_flag("--grid", o->grid, "Efficiency table over the stage-by-kind grid of the network");
  sub->add_option("--accuracy", o->accuracy, "JSON object config name -> accuracy, joined into --grid rows");
  sub->add_option("--time-iters", o->time_iters, "Also measure forward+backward ms/iter over this many steps")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--batch-size", o->batch_size, "Batch size for --time-iters")->check(CLI::PositiveNumber);
  add_common_options(sub, o->common);
  return [o, sub](std::ostream& out, std::ostream& err) {
    const NetworkConfig config = build_config(o->model, o->classes);
    const BlockArch arch = BlockArch::parse(o->model.arch);
    const LowerOptions lo = lower_options(o->model);
    std::string report;
    std::string stem;
    if (o->grid) {
      std::map<std::string, double> accuracy;
      if (!o->accuracy.empty()) {
        std::ifstream f(o->accuracy);
        if (!f) throw ValidationError("cannot read '" + o->accuracy + "'");
        try {
          accuracy = json::parse(f).get<std::map<std::string, double>>();
        } catch (const json::exception& e) {
          throw ValidationError("bad accuracy file '" + o->accuracy + "': " + e.what());
        }
      }
      std::vector<std::pair<std::string, NetworkConfig>> configs;
      for (auto [name, c] : ablation_grid(config)) {
        c.input_size = config.input_size;
        c.classes = config.classes;
        for (std::size_t i = 0; i < c.stages.size(); ++i) c.stages[i].width = config.stages[i].width;
        configs.emplace_back(std::move(name), std::move(c));
      }
      const EfficiencyTable table = efficiency_table(configs, arch, accuracy);
      for (const auto& w : table.warnings) err << "warning: " << w << "\n";
      report = o->format == "json" ? efficiency_json(table) : efficiency_csv(table);
      stem = "efficiency";
    } else {
      const Model model = lower(config, arch, o->model.beta, o->common.seed, lo);
      const CostReport cost = count_macs(model);
      report = o->format == "json" ? cost_json(o->model.network, cost) : cost_csv(o->model.network, cost);
      stem = "cost";
    }
    out << report;
    if (!report.empty() && report.back() != '\n') out << "\n";

    json extra = json::object();
    if (o->time_iters > 0) {
      const Model model = lower(config, arch, o->model.beta, o->common.seed, lo);
      Rng rng(derive_seed(o->common.seed, "timing"));
      Shape shape{o->batch_size};
      for (auto d : model.graph.input_shape()) shape.push_back(d);
      const Tensor batch = random_tensor(shape, lo.precision, rng);
      ForwardOptions fwd;
      fwd.mode = Mode::Train;
      const auto start = std::chrono::steady_clock::now();
      for (int i = 0; i < o->time_iters; ++i) {
        const ForwardResult r = forward(model.graph, model.params, batch, fwd);
        const Gradients g = backward(r.tape, Tensor::full(r.output.shape(), 1.0, lo.precision), false);
        (void)g;
      }
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count() /
                        o->time_iters;
      err << "measured " << std::fixed << std::setprecision(3) << ms << " ms/iter (batch " << o->batch_size
          << ", forward+backward)\n";
      extra["timing"] = {{"ms_per_iter", ms}, {"batch_size", o->batch_size}, {"iterations", o->time_iters}};
    }
    if (!o->common.out.empty()) {
      write_text(o->common.out, stem + "." + o->format, report);
      if (extra.contains("timing")) write_text(o->common.out, "timing.json", extra["timing"].dump(2) + "\n");
      write_manifest(o->common.out, "analyze", resolved_options(*sub), extra);
    }
    return 0;
  };
}

// ---------------------------------------------------------------------------

Runner add_gradcheck(CLI::App& app) {
  struct Opts {
    std::string kinds = "all";
    std::string arch = "dense:4,8";
    double beta = 1.0;
    double h = 1e-6;
    double tol = 1e-5;
    double floor = 1e-4;
    int batch = 2;
    std::string form = "cascaded";
    CommonOptions common;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("gradcheck", "Compare backward() with central finite differences");
  sub->add_option("--kind", o->kinds, "Comma-separated module kinds, or all");
  sub->add_option("--arch", o->arch, "Residual block: dense:d,h or conv:C,r");
  sub->add_option("--beta", o->beta, "Residual scaling in (0, 1]");
  sub->add_option("--step", o->h, "Finite-difference step")->check(CLI::PositiveNumber);
  sub->add_option("--tol", o->tol, "Maximum relative error")->check(CLI::PositiveNumber);
  sub->add_option("--floor", o->floor, "Denominator floor of the relative error")->check(CLI::PositiveNumber);
  sub->add_option("--batch", o->batch, "Probe batch size")->check(CLI::PositiveNumber);
  sub->add_option("--form", o->form, "cascaded or naive")->check(CLI::IsMember({"cascaded", "naive"}));
  add_common_options(sub, o->common);
  return [o, sub](std::ostream& out, std::ostream&) {
    const BlockArch arch = BlockArch::parse(o->arch);
    LowerOptions lo;
    lo.form = parse_form(o->form);
    lo.precision = Precision::F64;
    json rows = json::array();
    double worst = 0.0;
    out << std::left << std::setw(10) << "kind" << std::setw(10) << "params" << std::setw(14) << "param_err"
        << std::setw(14) << "input_err" << "status\n";
    for (const ModuleKind& kind : kinds_from(o->kinds)) {
      Model model = lower_module(kind, arch, o->beta, o->common.seed, lo);
      Rng rng(derive_seed(o->common.seed, "gradcheck/" + kind.token()));
      // Zero biases put whole ReLU inputs exactly on the kink when the
      // receptive field is all zeros; finite differences disagree there.
      model.params.for_each_mut([&](const std::string&, const std::string& name, ParamEntry& e) {
        if (!e.trainable || !name.ends_with(".bias")) return;
        for (std::size_t i = 0; i < e.value.size(); ++i) e.value.set(i, e.value.at(i) + 0.1 * rng.normal());
      });
      Shape in_shape{o->batch};
      for (auto d : model.graph.input_shape()) in_shape.push_back(d);
      const Tensor x = random_tensor(in_shape, Precision::F64, rng);
      Shape out_shape{o->batch};
      for (auto d : model.graph.node(model.graph.output()).shape) out_shape.push_back(d);
      const Tensor probe = random_tensor(out_shape, Precision::F64, rng);
      ForwardOptions fwd;
      fwd.mode = Mode::Train;
      auto loss = [&](const ParamStore& p, const Tensor& input) {
        const Tensor y = forward(model.graph, p, input, fwd).output;
        double s = 0.0;
        const auto ys = y.data<double>();
        const auto ws = probe.data<double>();
        for (std::size_t i = 0; i < ys.size(); ++i) s += ys[i] * ws[i];
        return s;
      };
      const ForwardResult r = forward(model.graph, model.params, x, fwd);
      const Gradients analytic = backward(r.tape, probe, true);
      const ParamStore numeric =
          finite_diff_grad([&](const ParamStore& p) { return loss(p, x); }, model.params, o->h);
      const Tensor numeric_input =
          finite_diff_input([&](const Tensor& t) { return loss(model.params, t); }, x, o->h);
      const double param_err = max_relative_error(analytic.params, numeric, o->floor);
      const double input_err = max_relative_difference(analytic.input, numeric_input, o->floor);
      const double err = std::max(param_err, input_err);
      worst = std::max(worst, err);
      const bool ok = err <= o->tol;
      out << std::setw(10) << kind.token() << std::setw(10) << model.params.trainable_count() << std::setw(14)
          << std::scientific << std::setprecision(3) << param_err << std::setw(14) << input_err
          << std::defaultfloat << (ok ? "ok" : "FAIL") << "\n";
      rows.push_back({{"kind", kind.token()},
                      {"params", model.params.trainable_count()},
                      {"param_rel_err", param_err},
                      {"input_rel_err", input_err},
                      {"ok", ok}});
    }
    out << "max relative error " << std::scientific << std::setprecision(3) << worst << std::defaultfloat
        << " (tolerance " << o->tol << ")\n";
    if (!o->common.out.empty()) {
      const json j = {{"rows", rows}, {"max_rel_err", worst}, {"tolerance", o->tol}};
      write_text(o->common.out, "gradcheck.json", j.dump(2) + "\n");
      write_manifest(o->common.out, "gradcheck", resolved_options(*sub));
    }
    if (worst > o->tol) {
      std::ostringstream msg;
      msg << "gradient check failed: max relative error " << std::scientific << std::setprecision(3) << worst
          << " exceeds " << o->tol;
      throw NumericError(msg.str());
    }
    return 0;
  };
}

// ---------------------------------------------------------------------------

Runner add_surgery(CLI::App& app) {
  struct Opts {
    std::string checkpoint;
    std::string target;
    std::string interleave;
    bool zero_last = false;
    std::string output = "surgery.pnck";
    CommonOptions common;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("surgery", "Grow a trained checkpoint, keeping its parameters");
  sub->add_option("--checkpoint", o->checkpoint, "Source checkpoint")->required();
  auto* target = sub->add_option("--target", o->target, "Network with the same stages and unit counts");
  auto* inter = sub->add_option("--interleave", o->interleave, "New units per stage, e.g. 1,2,1");
  target->excludes(inter);
  sub->add_flag("--zero-last", o->zero_last, "Zero the last layer of every new block");
  sub->add_option("--output", o->output, "Checkpoint file name inside --out");
  add_common_options(sub, o->common);
  return [o, sub](std::ostream& out, std::ostream&) {
    if (o->target.empty() == o->interleave.empty()) {
      throw CLI::ValidationError("surgery needs exactly one of --target or --interleave");
    }
    if (o->common.out.empty()) throw CLI::ValidationError("surgery needs --out");
    const Model source = load_checkpoint(o->checkpoint);
    Model grown;
    if (!o->target.empty()) {
      NetworkConfig target = resolve_network(o->target);
      target.input_size = source.meta.config.input_size;
      target.classes = source.meta.config.classes;
      for (std::size_t i = 0; i < target.stages.size() && i < source.meta.config.stages.size(); ++i) {
        target.stages[i].width = source.meta.config.stages[i].width;
        target.stages[i].resolution = source.meta.config.stages[i].resolution;
      }
      grown = upgrade(source, target, o->zero_last, o->common.seed);
    } else {
      grown = deepen_interleave(source, parse_int_list(o->interleave, "--interleave"), o->zero_last,
                                o->common.seed);
    }
    std::size_t retained = 0;
    for (const auto& [key, group] : source.params.groups()) {
      for (const auto& [other_key, other] : grown.params.groups()) {
        if (source.params.group_bitwise_equal(key, grown.params, other_key)) {
          ++retained;
          break;
        }
      }
    }
    Rng rng(derive_seed(o->common.seed, "surgery/probe"));
    Shape shape{4};
    for (auto d : source.graph.input_shape()) shape.push_back(d);
    const Tensor probe = random_tensor(shape, source.meta.precision, rng);
    const Tensor before = forward(source.graph, source.params, probe).output;
    const Tensor after = forward(grown.graph, grown.params, probe).output;
    double max_abs = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) max_abs = std::max(max_abs, std::abs(before.at(i) - after.at(i)));

    const std::string path = (fs::path(o->common.out) / o->output).string();
    fs::create_directories(o->common.out);
    save_checkpoint(path, grown);
    out << "source  " << render_network(source.meta.config) << "\n";
    out << "result  " << render_network(grown.meta.config) << "\n";
    out << "parameter groups retained bitwise: " << retained << "/" << source.params.groups().size() << "\n";
    out << "max |output difference| on probe batch: " << max_abs << "\n";
    out << "wrote " << path << "\n";
    const json j = {{"source", render_network(source.meta.config)},
                    {"result", render_network(grown.meta.config)},
                    {"groups_retained", retained},
                    {"groups_source", source.params.groups().size()},
                    {"groups_result", grown.params.groups().size()},
                    {"max_output_diff", max_abs},
                    {"checkpoint", path}};
    write_text(o->common.out, "surgery.json", j.dump(2) + "\n");
    write_manifest(o->common.out, "surgery", resolved_options(*sub));
    return 0;
  };
}

}  // namespace polystack::cli
