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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "polystack/data_pipeline.hpp"
#include "polystack/graph.hpp"
#include "polystack/network_builder.hpp"
#include "polystack/rng.hpp"

namespace polystack {

struct OptimizerHP {
  double decay = 0.9;
  double epsilon = 1.0;
  double base_lr = 0.045;
  double lr_factor = 0.1;
  std::int64_t lr_step = 1;
  std::int64_t total_iters = 0;

  // decay 0.9, eps 1.0, lr 0.45 scaled by 0.1 every 160K of 560K iterations.
  static OptimizerHP full();
  // lr 0.045 with lr_step = round(total / 3.5): three decays before the end.
  static OptimizerHP desk(std::int64_t total_iters);

  void validate() const;
};

// RMSProp without momentum, epsilon inside the root:
//   s <- decay*s + (1-decay)*g^2;  p <- p - lr*g/sqrt(s + eps)
// `state` holds s for every trainable parameter and is created on first use.
void rmsprop_step(ParamStore& params, const ParamStore& grads, ParamStore& state, const OptimizerHP& hp,
                  double lr);

// base_lr * lr_factor^floor(iter / lr_step). The product is formed on the
// shortest decimal forms of the two constants, so 0.45 * 0.1^2 is exactly the
// double nearest 0.0045.
double lr_at(std::int64_t iter, const OptimizerHP& hp);

// Number of decays over the full schedule: floor(total_iters / lr_step).
std::int64_t lr_decays(const OptimizerHP& hp);

// p_j = max_prob * j / (J - 1) for j = 0..J-1; J = 1 gives [0].
std::vector<double> gate_probabilities(int num_modules, double max_prob);

// Drops every non-identity path of module j independently with probs[j].
GateState sample_gates(const Model& model, std::span<const double> probs, Rng& rng);

struct StochasticPathConfig {
  enum class Trigger : std::uint8_t {
    Off,     // active for the whole run when enabled
    Manual,  // active from manual_start
    Auto,    // activated once validation loss rises `window` evals in a row while train loss falls
  };

  bool enabled = false;
  double max_prob = 0.25;
  Trigger trigger = Trigger::Off;
  std::int64_t manual_start = 0;
  int window = 3;
  std::int64_t min_gap = 0;  // iterations between the last state change and an auto activation
  PathRescale rescale = PathRescale::None;

  void validate() const;
};

struct TrainRecord {
  std::int64_t iteration = 0;  // iterations completed
  double train_loss = 0.0;     // mean minibatch loss since the previous record
  double val_loss = 0.0;
  double val_top1 = 0.0;
  double val_top5 = 0.0;
  double train_top1 = 0.0;     // eval-mode error on a fixed subset of the training split
  double lr = 0.0;
  bool gates_active = false;
};

struct TrainHistory {
  std::vector<TrainRecord> records;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;

  // One JSON object per record.
  std::string to_jsonl() const;
};

struct TrainOptions {
  std::int64_t iterations = 0;
  int batch_size = 32;
  int eval_every = 100;
  std::uint64_t seed = 0;
  OptimizerHP hp = OptimizerHP::desk(0);
  StochasticPathConfig paths;
  AugmentConfig augment = AugmentConfig::desk();
  bool augment_enabled = true;
  std::size_t train_eval_samples = 512;
  std::string history_path;    // JSONL, written after every record
  std::string checkpoint_dir;  // checkpoints at each lr decay and at the end
  std::function<void(const TrainRecord&)> on_record;

  void validate() const;
};

struct TrainResult {
  Model model;
  TrainHistory history;
};

// Minibatch loop: augment, sample gates (when active), forward, softmax
// cross-entropy, backward, RMSProp with lr_at. Evaluates every eval_every
// iterations and at the end. Data order, augmentation and gates draw from
// separate streams derived from `seed`. Throws NumericError on a non-finite
// loss, naming the iteration, learning rate and first non-finite node.
TrainResult train(Model model, const Dataset& data, const TrainOptions& options);

}  // namespace polystack
