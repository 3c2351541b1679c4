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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polystack/tensor.hpp"

namespace polystack {

using NodeId = std::int32_t;

enum class OpKind : std::uint8_t {
  Input,
  Dense,          // (B, in) -> (B, out); params <p>.weight (out, in), <p>.bias (out)
  Conv2D,         // k x k, stride 1, same padding; <p>.weight (out, in, k, k), <p>.bias
  Downsample,     // 3 x 3, stride 2, padding 1; same params as Conv2D
  ReLU,
  Add,            // n-ary sum with optional per-term path gates
  ScalarScale,    // y = scale * x
  ChannelNorm,    // per-channel standardize + affine; <p>.gamma/.beta/.running_mean/.running_var
  GlobalAvgPool,  // (B, C, H, W) -> (B, C)
};

std::string_view to_string(OpKind kind);

inline constexpr double kNormMomentum = 0.9;
inline constexpr double kNormEpsilon = 1e-5;

// Gate wiring for one Add term inside a residual module.
//
// `paths` lists the module paths (monomials) whose values flow through the
// term. The term is active while any of them survives; an empty list means
// the term is never gated (the identity path). `scale_path` marks the term
// that carries exactly one path and receives that path's rescaling factor.
struct TermGate {
  std::vector<int> paths;
  int scale_path = -1;
};

struct Node {
  OpKind kind = OpKind::Input;
  std::vector<NodeId> inputs;
  std::string label;    // diagnostics, e.g. "B.3.F/fc1"
  std::string section;  // cost attribution: "stem", "A", "A->B", "head", ...
  int module = -1;      // owning residual module (index in network), or -1

  // Parametric ops read tensors `param + ".weight"` etc. from group `share_key`.
  std::string share_key;
  std::string param;

  std::int64_t in_features = 0;
  std::int64_t out_features = 0;
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  double scale = 1.0;

  std::vector<TermGate> gates;  // Add only; empty or one per input

  Shape shape;  // per-sample output shape (without the batch axis)
};

// Acyclic dataflow graph; nodes are stored in a topological order because a
// node may only reference already-added nodes.
class ComputationGraph {
 public:
  explicit ComputationGraph(Shape input_shape = {});

  NodeId input() const noexcept { return 0; }
  const Shape& input_shape() const noexcept { return nodes_.front().shape; }

  NodeId output() const noexcept { return output_; }
  void set_output(NodeId id);

  // Appends a node after checking its inputs and inferring its shape.
  NodeId add(Node node);

  const Node& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::span<const Node> nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  NodeId output_ = 0;
};

struct ParamEntry {
  Tensor value;
  bool trainable = true;
};

// Ordered map share_key -> named tensors. Iteration order is deterministic
// (lexicographic by key, then name).
class ParamStore {
 public:
  using Group = std::map<std::string, ParamEntry>;

  void set(const std::string& share_key, const std::string& name, Tensor value,
           bool trainable = true);
  bool contains(const std::string& share_key, const std::string& name) const;
  bool contains_group(const std::string& share_key) const;
  const Tensor& get(const std::string& share_key, const std::string& name) const;
  Tensor& get_mut(const std::string& share_key, const std::string& name);
  const ParamEntry* find(const std::string& share_key, const std::string& name) const;

  const Group& group(const std::string& share_key) const;
  void set_group(const std::string& share_key, Group group);
  void erase_group(const std::string& share_key);

  const std::map<std::string, Group>& groups() const noexcept { return groups_; }

  // Calls fn(share_key, name, entry) in deterministic order.
  void for_each(const std::function<void(const std::string&, const std::string&, const ParamEntry&)>& fn) const;
  void for_each_mut(const std::function<void(const std::string&, const std::string&, ParamEntry&)>& fn);

  // Zero tensors with the same keys/shapes for every trainable entry.
  ParamStore zeros_like_trainable() const;

  std::int64_t trainable_count() const;
  std::int64_t trainable_count(const std::string& share_key) const;

  ParamStore cast(Precision precision) const;
  bool bitwise_equal(const ParamStore& other) const;
  bool group_bitwise_equal(const std::string& key, const ParamStore& other,
                           const std::string& other_key) const;

 private:
  std::map<std::string, Group> groups_;
};

enum class Mode : std::uint8_t { Train, Eval };

// How surviving paths are rescaled under stochastic path dropping.
enum class PathRescale : std::uint8_t {
  None,            // surviving paths unchanged, eval uses every path as is
  InverseSurvival, // training: surviving path / (1 - p)
  EvalExpectation, // eval: every path * (1 - p)
};

// Per-module gate bits: gates[module][path] == true keeps the path.
using GateState = std::vector<std::vector<bool>>;

struct ForwardOptions {
  Mode mode = Mode::Eval;
  const GateState* gates = nullptr;          // train mode only
  std::span<const double> path_probs;        // per module; needed for rescaling
  PathRescale rescale = PathRescale::None;
#ifdef NDEBUG
  bool check_finite = false;
#else
  bool check_finite = true;
#endif
};

// Everything backward() needs. Holds pointers to the graph and parameters
// given to forward(); both must outlive the tape.
struct Tape {
  Mode mode = Mode::Eval;
  const ComputationGraph* graph = nullptr;
  const ParamStore* params = nullptr;
  std::vector<Tensor> values;
  std::vector<std::vector<double>> term_scales;  // Add nodes: multiplier per input
  std::vector<std::vector<double>> norm_mean;    // ChannelNorm nodes: batch mean
  std::vector<std::vector<double>> norm_inv_std; // ChannelNorm nodes: 1/sqrt(var+eps)
  // Running-statistic updates produced in train mode; apply with
  // apply_state_updates() to advance the model.
  ParamStore state_updates;
};

struct ForwardResult {
  Tensor output;
  Tape tape;
};

// Evaluates the graph on a batch. Pure with respect to graph and params.
// Throws ShapeError naming the offending node, ValidationError for a missing
// parameter, NumericError for non-finite values when check_finite is set.
ForwardResult forward(const ComputationGraph& graph, const ParamStore& params, const Tensor& input,
                      const ForwardOptions& options = {});

struct Gradients {
  ParamStore params;  // one entry per trainable parameter; shared keys summed
  Tensor input;
};

// Reverse-mode sweep. Rejects eval-mode tapes. With input_grad false the
// gradient with respect to the graph input is left as zeros.
Gradients backward(const Tape& tape, const Tensor& upstream, bool input_grad = true);

// Copies running statistics recorded in the tape into `params`.
void apply_state_updates(ParamStore& params, const Tape& tape);

// Label of the first node whose value is non-finite, if any.
std::optional<std::string> first_nonfinite_node(const Tape& tape);

struct LossResult {
  double loss = 0.0;     // mean over the batch
  Tensor grad_logits;    // d loss / d logits
};

// Softmax cross-entropy over (B, classes) logits.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Row-wise softmax of (B, classes) logits, in double.
std::vector<std::vector<double>> softmax_rows(const Tensor& logits);

// Central differences (L(p+h) - L(p-h)) / 2h for every trainable scalar.
ParamStore finite_diff_grad(const std::function<double(const ParamStore&)>& loss_fn,
                            const ParamStore& params, double h = 1e-6);
Tensor finite_diff_input(const std::function<double(const Tensor&)>& loss_fn, const Tensor& input,
                         double h = 1e-6);

// Max |a - b| / max(|a|, |b|, floor) over matching trainable entries.
double max_relative_error(const ParamStore& a, const ParamStore& b, double floor);

}  // namespace polystack
