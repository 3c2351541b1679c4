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

#include "polystack/graph.hpp"

#include <algorithm>
#include <cmath>

#include "polystack/error.hpp"

namespace polystack {

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Dense: return "dense";
    case OpKind::Conv2D: return "conv2d";
    case OpKind::Downsample: return "downsample";
    case OpKind::ReLU: return "relu";
    case OpKind::Add: return "add";
    case OpKind::ScalarScale: return "scale";
    case OpKind::ChannelNorm: return "channel_norm";
    case OpKind::GlobalAvgPool: return "global_avg_pool";
  }
  return "?";
}

ComputationGraph::ComputationGraph(Shape input_shape) {
  Node in;
  in.kind = OpKind::Input;
  in.label = "input";
  in.shape = std::move(input_shape);
  nodes_.push_back(std::move(in));
}

void ComputationGraph::set_output(NodeId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw ValidationError("output node out of range");
  }
  output_ = id;
}

NodeId ComputationGraph::add(Node node) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  auto fail = [&](const std::string& what) -> ShapeError {
    return ShapeError("node '" + node.label + "' (" + std::string(to_string(node.kind)) + "): " + what);
  };
  if (node.kind == OpKind::Input) throw fail("only one input node is allowed");
  if (node.inputs.empty()) throw fail("missing inputs");
  for (NodeId in : node.inputs) {
    if (in < 0 || in >= id) throw fail("input refers to a later or unknown node");
  }
  const Shape& x = nodes_[static_cast<std::size_t>(node.inputs.front())].shape;
  auto expect_image = [&] {
    if (x.size() != 3) throw fail("expected (C, H, W) input, got " + shape_string(x));
  };
  switch (node.kind) {
    case OpKind::Dense:
      if (x.size() != 1 || x[0] != node.in_features) {
        throw fail("expected (" + std::to_string(node.in_features) + ") input, got " + shape_string(x));
      }
      node.shape = {node.out_features};
      break;
    case OpKind::Conv2D:
      expect_image();
      if (x[0] != node.in_features) throw fail("channel mismatch, got " + shape_string(x));
      if (node.kernel % 2 != 1) throw fail("kernel must be odd");
      node.stride = 1;
      node.shape = {node.out_features, x[1], x[2]};
      break;
    case OpKind::Downsample:
      expect_image();
      if (x[0] != node.in_features) throw fail("channel mismatch, got " + shape_string(x));
      node.kernel = 3;
      node.stride = 2;
      node.shape = {node.out_features, (x[1] + 1) / 2, (x[2] + 1) / 2};
      break;
    case OpKind::ReLU:
    case OpKind::ScalarScale:
      node.shape = x;
      break;
    case OpKind::ChannelNorm:
      if (x.empty()) throw fail("needs a channel axis");
      node.out_features = x[0];
      node.shape = x;
      break;
    case OpKind::Add:
      for (NodeId in : node.inputs) {
        if (nodes_[static_cast<std::size_t>(in)].shape != x) {
          throw fail("operand shapes differ: " + shape_string(x) + " vs " +
                     shape_string(nodes_[static_cast<std::size_t>(in)].shape));
        }
      }
      if (!node.gates.empty() && node.gates.size() != node.inputs.size()) {
        throw fail("gate list does not match operand count");
      }
      node.shape = x;
      break;
    case OpKind::GlobalAvgPool:
      expect_image();
      node.shape = {x[0]};
      break;
    case OpKind::Input: break;
  }
  nodes_.push_back(std::move(node));
  return id;
}

// ---------------------------------------------------------------------------
// ParamStore

void ParamStore::set(const std::string& share_key, const std::string& name, Tensor value,
                     bool trainable) {
  groups_[share_key][name] = ParamEntry{std::move(value), trainable};
}

bool ParamStore::contains(const std::string& share_key, const std::string& name) const {
  return find(share_key, name) != nullptr;
}

bool ParamStore::contains_group(const std::string& share_key) const {
  return groups_.contains(share_key);
}

const ParamEntry* ParamStore::find(const std::string& share_key, const std::string& name) const {
  auto g = groups_.find(share_key);
  if (g == groups_.end()) return nullptr;
  auto e = g->second.find(name);
  return e == g->second.end() ? nullptr : &e->second;
}

const Tensor& ParamStore::get(const std::string& share_key, const std::string& name) const {
  const ParamEntry* e = find(share_key, name);
  if (!e) throw ValidationError("missing parameter '" + share_key + ":" + name + "'");
  return e->value;
}

Tensor& ParamStore::get_mut(const std::string& share_key, const std::string& name) {
  auto g = groups_.find(share_key);
  if (g != groups_.end()) {
    auto e = g->second.find(name);
    if (e != g->second.end()) return e->second.value;
  }
  throw ValidationError("missing parameter '" + share_key + ":" + name + "'");
}

const ParamStore::Group& ParamStore::group(const std::string& share_key) const {
  auto g = groups_.find(share_key);
  if (g == groups_.end()) throw ValidationError("missing parameter group '" + share_key + "'");
  return g->second;
}

void ParamStore::set_group(const std::string& share_key, Group group) {
  groups_[share_key] = std::move(group);
}

void ParamStore::erase_group(const std::string& share_key) { groups_.erase(share_key); }

void ParamStore::for_each(
    const std::function<void(const std::string&, const std::string&, const ParamEntry&)>& fn) const {
  for (const auto& [key, group] : groups_) {
    for (const auto& [name, entry] : group) fn(key, name, entry);
  }
}

void ParamStore::for_each_mut(
    const std::function<void(const std::string&, const std::string&, ParamEntry&)>& fn) {
  for (auto& [key, group] : groups_) {
    for (auto& [name, entry] : group) fn(key, name, entry);
  }
}

ParamStore ParamStore::zeros_like_trainable() const {
  ParamStore out;
  for_each([&](const std::string& k, const std::string& n, const ParamEntry& e) {
    if (e.trainable) out.set(k, n, Tensor::zeros(e.value.shape(), e.value.precision()));
  });
  return out;
}

std::int64_t ParamStore::trainable_count() const {
  std::int64_t n = 0;
  for_each([&](const std::string&, const std::string&, const ParamEntry& e) {
    if (e.trainable) n += static_cast<std::int64_t>(e.value.size());
  });
  return n;
}

std::int64_t ParamStore::trainable_count(const std::string& share_key) const {
  std::int64_t n = 0;
  auto g = groups_.find(share_key);
  if (g == groups_.end()) return 0;
  for (const auto& [name, e] : g->second) {
    if (e.trainable) n += static_cast<std::int64_t>(e.value.size());
  }
  return n;
}

ParamStore ParamStore::cast(Precision precision) const {
  ParamStore out;
  for_each([&](const std::string& k, const std::string& n, const ParamEntry& e) {
    out.set(k, n, e.value.cast(precision), e.trainable);
  });
  return out;
}

bool ParamStore::bitwise_equal(const ParamStore& other) const {
  if (groups_.size() != other.groups_.size()) return false;
  for (const auto& [key, group] : groups_) {
    if (!other.groups_.contains(key) || !group_bitwise_equal(key, other, key)) return false;
  }
  return true;
}

bool ParamStore::group_bitwise_equal(const std::string& key, const ParamStore& other,
                                     const std::string& other_key) const {
  auto a = groups_.find(key);
  auto b = other.groups_.find(other_key);
  if (a == groups_.end() || b == other.groups_.end()) return false;
  if (a->second.size() != b->second.size()) return false;
  for (const auto& [name, e] : a->second) {
    auto it = b->second.find(name);
    if (it == b->second.end() || it->second.trainable != e.trainable ||
        !it->second.value.bitwise_equal(e.value)) {
      return false;
    }
  }
  return true;
}

double max_relative_error(const ParamStore& a, const ParamStore& b, double floor) {
  double worst = 0.0;
  a.for_each([&](const std::string& k, const std::string& n, const ParamEntry& e) {
    if (!e.trainable) return;
    const ParamEntry* other = b.find(k, n);
    if (!other) throw ValidationError("gradient stores disagree on '" + k + ":" + n + "'");
    worst = std::max(worst, max_relative_difference(e.value, other->value, floor));
  });
  return worst;
}

}  // namespace polystack
