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

#include "polystack/network_builder.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "polystack/error.hpp"
#include "polystack/rng.hpp"

namespace polystack {

// ---------------------------------------------------------------------------
// BlockArch

namespace {

std::int64_t parse_extent(std::string_view s, std::string_view what) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v < 1) {
    throw ValidationError("bad " + std::string(what) + " '" + std::string(s) + "' in block arch");
  }
  return v;
}

}  // namespace

BlockArch BlockArch::parse(std::string_view text) {
  const auto colon = text.find(':');
  const auto comma = text.find(',');
  if (colon == std::string_view::npos || comma == std::string_view::npos || comma < colon) {
    throw ValidationError("block arch must look like dense:d,h or conv:C,r, got '" +
                          std::string(text) + "'");
  }
  const auto family = text.substr(0, colon);
  const auto a = text.substr(colon + 1, comma - colon - 1);
  const auto b = text.substr(comma + 1);
  if (family == "dense") return dense(parse_extent(a, "dim"), parse_extent(b, "hidden width"));
  if (family == "conv") {
    BlockArch arch = conv(parse_extent(a, "channels"), parse_extent(b, "reduction"));
    arch.at_width(arch.dim);  // checks divisibility
    return arch;
  }
  throw ValidationError("unknown block family '" + std::string(family) + "' (use dense or conv)");
}

std::string BlockArch::describe() const {
  return std::string(kind == Kind::Dense ? "dense:" : "conv:") + std::to_string(dim) + "," +
         std::to_string(hidden);
}

BlockArch BlockArch::at_width(std::int64_t width) const {
  if (width < 1) throw ValidationError("block width must be positive");
  if (kind == Kind::Dense) {
    const double ratio = static_cast<double>(hidden) / static_cast<double>(dim);
    const auto h = std::max<std::int64_t>(1, std::llround(ratio * static_cast<double>(width)));
    return dense(width, h);
  }
  if (width % hidden != 0) {
    throw ValidationError("width " + std::to_string(width) + " is not divisible by the conv block reduction " +
                          std::to_string(hidden));
  }
  return conv(width, hidden);
}

std::int64_t BlockArch::block_params() const {
  if (kind == Kind::Dense) return dim * hidden + hidden + hidden * dim + dim;
  const std::int64_t mid = dim / hidden;
  return (dim * mid + mid) + (mid * mid * 9 + mid) + (mid * dim + dim);
}

std::string last_layer_param(const BlockArch& arch) {
  return arch.kind == BlockArch::Kind::Dense ? "fc2" : "conv3";
}

std::vector<int> Model::path_counts() const {
  std::vector<int> out;
  out.reserve(modules.size());
  for (const auto& m : modules) out.push_back(m.path_count);
  return out;
}

void zero_last_layer(ParamStore& params, const std::string& share_key, const BlockArch& arch) {
  const std::string last = last_layer_param(arch);
  params.get_mut(share_key, last + ".weight").fill(0.0);
  params.get_mut(share_key, last + ".bias").fill(0.0);
}

// ---------------------------------------------------------------------------
// Lowering

namespace {

using Context = std::vector<PathKey>;

Context extend(const Context& ctx, const OperatorExpr& e) {
  const SymbolicExpansion terms = expand_symbolic(e);
  Context out;
  for (const auto& prefix : ctx) {
    for (const auto& [key, term] : terms) {
      PathKey k = prefix;
      k.insert(k.end(), key.begin(), key.end());
      out.push_back(std::move(k));
    }
  }
  return out;
}

class Lowerer {
 public:
  Lowerer(Model& model, std::uint64_t seed, Precision precision)
      : model_(model), seed_(seed), precision_(precision) {}

  NodeId conv(NodeId x, const std::string& key, const std::string& param, std::int64_t in,
              std::int64_t out, std::int64_t k, bool downsample, const std::string& section,
              int module) {
    const std::int64_t kernel = downsample ? 3 : k;
    ensure_weight(key, param, {out, in, kernel, kernel}, in * kernel * kernel);
    Node n;
    n.kind = downsample ? OpKind::Downsample : OpKind::Conv2D;
    n.inputs = {x};
    n.share_key = key;
    n.param = param;
    n.in_features = in;
    n.out_features = out;
    n.kernel = kernel;
    return add(std::move(n), section, module);
  }

  NodeId dense(NodeId x, const std::string& key, const std::string& param, std::int64_t in,
               std::int64_t out, const std::string& section, int module) {
    ensure_weight(key, param, {out, in}, in);
    Node n;
    n.kind = OpKind::Dense;
    n.inputs = {x};
    n.share_key = key;
    n.param = param;
    n.in_features = in;
    n.out_features = out;
    return add(std::move(n), section, module);
  }

  NodeId norm(NodeId x, const std::string& key, const std::string& param, const std::string& section) {
    const std::int64_t c = model_.graph.node(x).shape.at(0);
    if (!model_.params.contains(key, param + ".gamma")) {
      model_.params.set(key, param + ".gamma", Tensor::full({c}, 1.0, precision_));
      model_.params.set(key, param + ".beta", Tensor::zeros({c}, precision_));
      model_.params.set(key, param + ".running_mean", Tensor::zeros({c}, precision_), false);
      model_.params.set(key, param + ".running_var", Tensor::full({c}, 1.0, precision_), false);
    }
    Node n;
    n.kind = OpKind::ChannelNorm;
    n.inputs = {x};
    n.share_key = key;
    n.param = param;
    return add(std::move(n), section, -1);
  }

  NodeId simple(OpKind kind, std::vector<NodeId> inputs, const std::string& label,
                const std::string& section, int module, double scale = 1.0) {
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.label = label;
    n.scale = scale;
    return add(std::move(n), section, module);
  }

  NodeId add_node(Node n, const std::string& section, int module) {
    return add(std::move(n), section, module);
  }

  NodeId block(NodeId x, const BlockArch& arch, const std::string& key, const std::string& section,
               int module, int application) {
    const std::string tag = key + "@" + std::to_string(application);
    if (arch.kind == BlockArch::Kind::Dense) {
      NodeId h = dense(x, key, "fc1", arch.dim, arch.hidden, section, module);
      h = simple(OpKind::ReLU, {h}, tag + "/relu1", section, module);
      return dense(h, key, "fc2", arch.hidden, arch.dim, section, module);
    }
    const std::int64_t mid = arch.dim / arch.hidden;
    NodeId h = conv(x, key, "conv1", arch.dim, mid, 1, false, section, module);
    h = simple(OpKind::ReLU, {h}, tag + "/relu1", section, module);
    h = conv(h, key, "conv2", mid, mid, 3, false, section, module);
    h = simple(OpKind::ReLU, {h}, tag + "/relu2", section, module);
    return conv(h, key, "conv3", mid, arch.dim, 1, false, section, module);
  }

 private:
  NodeId add(Node n, const std::string& section, int module) {
    n.section = section;
    n.module = module;
    if (n.label.empty()) n.label = n.share_key + "/" + n.param;
    return model_.graph.add(std::move(n));
  }

  void ensure_weight(const std::string& key, const std::string& param, Shape shape, std::int64_t fan_in) {
    if (model_.params.contains(key, param + ".weight")) {
      if (model_.params.get(key, param + ".weight").shape() != shape) {
        throw ShapeError("parameter '" + key + ":" + param + "' reused with a different shape");
      }
      return;
    }
    const std::int64_t out = shape.front();
    Tensor w(std::move(shape), Precision::F64);
    Rng rng(derive_seed(seed_, "init/" + key + "/" + param));
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    auto ws = w.data<double>();
    for (auto& v : ws) v = std_dev * rng.normal();
    model_.params.set(key, param + ".weight", w.cast(precision_));
    model_.params.set(key, param + ".bias", Tensor::zeros({out}, precision_));
  }

  Model& model_;
  std::uint64_t seed_;
  Precision precision_;
};

class ModuleLowerer {
 public:
  ModuleLowerer(Lowerer& lw, const BlockArch& arch, std::string section, int module, bool memoize,
                const std::vector<OperatorExpr>& monomials)
      : lw_(lw), arch_(arch), section_(std::move(section)), module_(module), memoize_(memoize) {
    for (std::size_t i = 0; i < monomials.size(); ++i) {
      PathKey key;
      for (const auto& b : monomials[i].monomial_blocks()) key.push_back(b.share_key);
      paths_[key] = static_cast<int>(i);
    }
  }

  std::int64_t block_apps() const { return apps_; }

  NodeId eval(const OperatorExpr& e, NodeId x, const Context& ctx) {
    using Kind = OperatorExpr::Kind;
    switch (e.kind()) {
      case Kind::Identity:
        return x;
      case Kind::Block: {
        const std::string& key = e.block_id().share_key;
        if (memoize_) {
          auto it = memo_.find({key, x});
          if (it != memo_.end()) return it->second;
        }
        const NodeId out = lw_.block(x, arch_, key, section_, module_, ++uses_[key]);
        ++apps_;
        if (memoize_) memo_[{key, x}] = out;
        return out;
      }
      case Kind::Scaled:
        return lw_.simple(OpKind::ScalarScale, {eval(e.inner(), x, ctx)}, label("scale"), section_,
                          module_, e.beta());
      case Kind::Compose: {
        NodeId v = x;
        Context c = ctx;
        auto factors = e.children();
        for (auto f = factors.rbegin(); f != factors.rend(); ++f) {
          v = eval(*f, v, c);
          c = extend(c, *f);
        }
        return v;
      }
      case Kind::Sum: {
        Node n;
        n.kind = OpKind::Add;
        n.label = label("add");
        bool gated = false;
        for (const auto& t : e.children()) {
          n.inputs.push_back(eval(t, x, ctx));
          n.gates.push_back(gate_for(ctx, t));
          gated = gated || !n.gates.back().paths.empty();
        }
        if (!gated) n.gates.clear();
        return lw_.add_node(std::move(n), section_, module_);
      }
    }
    return x;
  }

 private:
  TermGate gate_for(const Context& ctx, const OperatorExpr& term) const {
    std::set<int> covered;
    bool has_identity = false;
    for (const auto& key : extend(ctx, term)) {
      if (key.empty()) {
        has_identity = true;
        continue;
      }
      auto it = paths_.find(key);
      if (it == paths_.end()) throw ValidationError("lowered term does not map onto a module path");
      covered.insert(it->second);
    }
    TermGate g;
    g.paths.assign(covered.begin(), covered.end());
    if (g.paths.size() == 1 && !has_identity) g.scale_path = g.paths.front();
    return g;
  }

  std::string label(const char* what) {
    return section_ + "#" + std::to_string(module_) + "/" + what + std::to_string(counter_++);
  }

  Lowerer& lw_;
  BlockArch arch_;
  std::string section_;
  int module_;
  bool memoize_;
  std::map<PathKey, int> paths_;
  std::map<std::pair<std::string, NodeId>, NodeId> memo_;
  std::map<std::string, int> uses_;
  std::int64_t apps_ = 0;
  int counter_ = 0;
};

ModuleInfo lower_one_module(Lowerer& lw, Model& model, NodeId x, ModuleKind kind, const BlockArch& arch,
                            double beta, const std::string& stage, int stage_index, int index,
                            ModuleForm form) {
  ModuleInfo info;
  info.stage = stage;
  info.stage_index = stage_index;
  info.index = index;
  info.kind = kind;
  info.key_prefix = stage + "." + std::to_string(stage_index) + ".";
  const OperatorExpr naive = with_share_prefix(expand_module(kind, beta), info.key_prefix);
  info.expr = form == ModuleForm::Cascaded ? cascade(naive) : naive;
  const auto monomials = module_monomials(naive);
  info.path_count = static_cast<int>(monomials.size());
  info.input_node = x;
  ModuleLowerer ml(lw, arch, stage, index, form == ModuleForm::Cascaded, monomials);
  info.sum_node = ml.eval(info.expr, x, Context{PathKey{}});
  info.block_apps = ml.block_apps();
  info.output_node = lw.simple(OpKind::ReLU, {info.sum_node},
                               stage + "." + std::to_string(stage_index) + "/out", stage, index);
  (void)model;
  return info;
}

}  // namespace

Model lower(const NetworkConfig& config, const BlockArch& arch, double beta, std::uint64_t seed,
            const LowerOptions& options) {
  validate(config);
  if (!(beta > 0.0 && beta <= 1.0)) throw ValidationError("residual scale beta must lie in (0, 1]");
  const bool dense = arch.kind == BlockArch::Kind::Dense;
  Model model;
  model.graph = ComputationGraph({3, config.input_size, config.input_size});
  model.meta = ModelMeta{config, arch, beta, seed, 0, options.form, options.precision, false, options.spatial};
  Lowerer lw(model, seed, options.precision);

  const std::int64_t w0 = config.stages.front().width;
  NodeId x = lw.conv(model.graph.input(), "stem", "conv", 3, w0, 3, false, "stem", -1);
  x = lw.norm(x, "stem", "norm", "stem");
  x = lw.simple(OpKind::ReLU, {x}, "stem/relu", "stem", -1);
  x = lw.conv(x, "stem", "down", w0, w0, 3, true, "stem", -1);
  x = lw.norm(x, "stem", "down_norm", "stem");
  x = lw.simple(OpKind::ReLU, {x}, "stem/down_relu", "stem", -1);
  if (dense) x = lw.simple(OpKind::GlobalAvgPool, {x}, "stem/pool", "stem", -1);

  int index = 0;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const StageConfig& stage = config.stages[s];
    if (s > 0) {
      const StageConfig& prev = config.stages[s - 1];
      const std::string key = prev.name + "-" + stage.name;
      if (dense) {
        x = lw.dense(x, key, "fc", prev.width, stage.width, key, -1);
      } else {
        x = lw.conv(x, key, "down", prev.width, stage.width, 3, true, key, -1);
      }
      x = lw.norm(x, key, "norm", key);
      x = lw.simple(OpKind::ReLU, {x}, key + "/relu", key, -1);
    }
    const BlockArch block = arch.at_width(stage.width);
    for (std::size_t m = 0; m < stage.modules.size(); ++m) {
      ModuleInfo info = lower_one_module(lw, model, x, stage.modules[m], block, beta, stage.name,
                                         static_cast<int>(m), index++, options.form);
      x = info.output_node;
      model.modules.push_back(std::move(info));
    }
  }
  if (!dense) x = lw.simple(OpKind::GlobalAvgPool, {x}, "head/pool", "head", -1);
  x = lw.dense(x, "head", "fc", config.stages.back().width, config.classes, "head", -1);
  model.graph.set_output(x);
  return model;
}

Model lower_module(ModuleKind kind, const BlockArch& arch, double beta, std::uint64_t seed,
                   const LowerOptions& options) {
  if (!(beta > 0.0 && beta <= 1.0)) throw ValidationError("residual scale beta must lie in (0, 1]");
  Model model;
  if (arch.kind == BlockArch::Kind::Dense) {
    model.graph = ComputationGraph({arch.dim});
  } else {
    arch.at_width(arch.dim);
    if (options.spatial < 1) throw ValidationError("spatial extent must be positive");
    model.graph = ComputationGraph({arch.dim, options.spatial, options.spatial});
  }
  NetworkConfig config;
  config.stages.push_back(StageConfig{"M", {kind}, arch.dim, ""});
  model.meta = ModelMeta{config, arch, beta, seed, 0, options.form, options.precision, true, options.spatial};
  Lowerer lw(model, seed, options.precision);
  ModuleInfo info = lower_one_module(lw, model, model.graph.input(), kind, arch, beta, "M", 0, 0,
                                     options.form);
  model.graph.set_output(info.output_node);
  model.modules.push_back(std::move(info));
  return model;
}

}  // namespace polystack
