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

#include "polystack/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "polystack/error.hpp"
#include "polystack/evaluation.hpp"

namespace polystack {

void StochasticPathConfig::validate() const {
  if (!(max_prob >= 0.0 && max_prob < 1.0)) throw ValidationError("max drop probability must lie in [0, 1)");
  if (window < 1) throw ValidationError("overfitting window must be >= 1");
  if (min_gap < 0 || manual_start < 0) throw ValidationError("trigger iterations must be non-negative");
}

void TrainOptions::validate() const {
  if (iterations < 0) throw ValidationError("iterations must be non-negative");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (eval_every < 1) throw ValidationError("eval_every must be >= 1");
  hp.validate();
  paths.validate();
  augment.validate();
}

std::string TrainHistory::to_jsonl() const {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j = {{"iteration", r.iteration},   {"train_loss", r.train_loss},
                        {"val_loss", r.val_loss},     {"val_top1", r.val_top1},
                        {"val_top5", r.val_top5},     {"train_top1", r.train_top1},
                        {"lr", r.lr},                 {"gates_active", r.gates_active},
                        {"seed", seed}};
    out += j.dump() + "\n";
  }
  return out;
}

namespace {

// Validation loss rose `window` evaluations in a row while train loss fell.
bool overfitting(const std::vector<TrainRecord>& records, int window) {
  const auto n = records.size();
  if (n < static_cast<std::size_t>(window) + 1) return false;
  for (std::size_t i = n - static_cast<std::size_t>(window); i < n; ++i) {
    if (!(records[i].val_loss > records[i - 1].val_loss)) return false;
    if (!(records[i].train_loss < records[i - 1].train_loss)) return false;
  }
  return true;
}

std::string where(std::int64_t iteration, double lr) {
  std::ostringstream s;
  s << "iteration " << iteration << ", lr " << lr;
  return s.str();
}

}  // namespace

TrainResult train(Model model, const Dataset& data, const TrainOptions& options) {
  options.validate();
  const auto started = std::chrono::steady_clock::now();
  TrainResult result;
  result.history.seed = options.seed;
  if (options.iterations == 0) {
    result.model = std::move(model);
    return result;
  }
  const std::vector<std::size_t> train_idx = data.split(false);
  const std::vector<std::size_t> val_idx = data.split(true);
  if (train_idx.empty()) throw ValidationError("training split is empty");
  const std::int64_t side = model_input_size(model);
  const Precision precision = model.meta.precision;

  Rng order_rng(derive_seed(options.seed, "data"));
  Rng augment_rng(derive_seed(options.seed, "augment"));
  Rng gate_rng(derive_seed(options.seed, "gates"));

  std::vector<std::size_t> train_probe;
  {
    Rng probe_rng(derive_seed(options.seed, "train-probe"));
    std::vector<std::size_t> shuffled = train_idx;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[probe_rng.below(i)]);
    shuffled.resize(std::min(shuffled.size(), options.train_eval_samples));
    std::sort(shuffled.begin(), shuffled.end());
    train_probe = std::move(shuffled);
  }

  std::vector<std::size_t> order = train_idx;
  std::size_t cursor = order.size();
  auto next_index = [&]() {
    if (cursor == order.size()) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
      cursor = 0;
    }
    return order[cursor++];
  };

  AugmentConfig aug = options.augment;
  aug.out_size = side;
  const std::vector<double> probs = gate_probabilities(static_cast<int>(model.modules.size()),
                                                       options.paths.max_prob);
  const StochasticPathConfig& spc = options.paths;
  bool gates_active = spc.enabled && spc.trigger == StochasticPathConfig::Trigger::Off;
  std::int64_t last_change = 0;

  ParamStore rms_state;
  double loss_sum = 0.0;
  std::int64_t loss_count = 0;
  const std::int64_t start_iter = model.meta.iteration;
  namespace fs = std::filesystem;
  if (!options.checkpoint_dir.empty()) fs::create_directories(options.checkpoint_dir);
  std::ofstream history_out;
  if (!options.history_path.empty()) {
    history_out.open(options.history_path);
    if (!history_out) throw Error("cannot open '" + options.history_path + "' for writing");
  }

  for (std::int64_t it = 0; it < options.iterations; ++it) {
    const double lr = lr_at(it, options.hp);
    if (it > 0 && lr != lr_at(it - 1, options.hp) && !options.checkpoint_dir.empty()) {
      model.meta.iteration = start_iter + it;
      save_checkpoint((fs::path(options.checkpoint_dir) / ("iter-" + std::to_string(start_iter + it) + ".pnck")).string(),
                      model);
    }
    if (spc.enabled && spc.trigger == StochasticPathConfig::Trigger::Manual && !gates_active &&
        it >= spc.manual_start) {
      gates_active = true;
      last_change = it;
    }

    std::vector<Tensor> views;
    std::vector<int> labels;
    views.reserve(static_cast<std::size_t>(options.batch_size));
    for (int b = 0; b < options.batch_size; ++b) {
      const std::size_t idx = next_index();
      const Tensor& img = data.images[idx];
      Tensor v = options.augment_enabled ? augment(img, aug, augment_rng) : resize_bilinear(img, side, side);
      views.push_back(v.cast(precision));
      labels.push_back(data.labels[idx]);
    }
    const Tensor batch = Tensor::stack(views);

    ForwardOptions fwd;
    fwd.mode = Mode::Train;
    fwd.rescale = spc.rescale;
    fwd.path_probs = probs;
    GateState gates;
    if (gates_active) {
      gates = sample_gates(model, probs, gate_rng);
      fwd.gates = &gates;
    }
    ForwardResult r;
    try {
      r = forward(model.graph, model.params, batch, fwd);
    } catch (const NumericError& e) {
      throw NumericError(where(start_iter + it, lr) + ": " + e.what());
    }
    const LossResult loss = softmax_cross_entropy(r.output, labels);
    if (!std::isfinite(loss.loss)) {
      const auto node = first_nonfinite_node(r.tape);
      throw NumericError("non-finite loss at " + where(start_iter + it, lr) +
                         ", first non-finite node: " + node.value_or("logits"));
    }
    const Gradients grads = backward(r.tape, loss.grad_logits, false);
    rmsprop_step(model.params, grads.params, rms_state, options.hp, lr);
    apply_state_updates(model.params, r.tape);
    loss_sum += loss.loss;
    ++loss_count;

    const bool last = it + 1 == options.iterations;
    if ((it + 1) % options.eval_every == 0 || last) {
      TrainRecord rec;
      rec.iteration = start_iter + it + 1;
      rec.train_loss = loss_sum / static_cast<double>(loss_count);
      rec.lr = lr;
      rec.gates_active = gates_active;
      if (!val_idx.empty()) {
        const EvalReport v = evaluate(model, data, val_idx);
        rec.val_loss = v.loss;
        rec.val_top1 = v.top1;
        rec.val_top5 = v.top5;
      }
      rec.train_top1 = evaluate(model, data, train_probe).top1;
      loss_sum = 0.0;
      loss_count = 0;
      result.history.records.push_back(rec);
      if (options.on_record) options.on_record(rec);
      if (history_out.is_open()) {
        TrainHistory one;
        one.seed = options.seed;
        one.records = {rec};
        history_out << one.to_jsonl() << std::flush;
      }
      if (spc.enabled && spc.trigger == StochasticPathConfig::Trigger::Auto && !gates_active &&
          it + 1 - last_change >= spc.min_gap && overfitting(result.history.records, spc.window)) {
        gates_active = true;
        last_change = it + 1;
      }
    }
  }
  model.meta.iteration = start_iter + options.iterations;
  if (!options.checkpoint_dir.empty()) {
    save_checkpoint((fs::path(options.checkpoint_dir) / "final.pnck").string(), model);
  }
  result.model = std::move(model);
  result.history.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace polystack
