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

#include <charconv>
#include <cmath>
#include <string>

#include "polystack/error.hpp"
#include "polystack/trainer.hpp"

namespace polystack {

OptimizerHP OptimizerHP::full() {
  OptimizerHP hp;
  hp.decay = 0.9;
  hp.epsilon = 1.0;
  hp.base_lr = 0.45;
  hp.lr_factor = 0.1;
  hp.lr_step = 160000;
  hp.total_iters = 560000;
  return hp;
}

OptimizerHP OptimizerHP::desk(std::int64_t total_iters) {
  OptimizerHP hp;
  hp.total_iters = total_iters;
  hp.lr_step = std::max<std::int64_t>(1, std::llround(static_cast<double>(total_iters) / 3.5));
  return hp;
}

void OptimizerHP::validate() const {
  if (!(decay > 0.0 && decay < 1.0)) throw ValidationError("RMSProp decay must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("RMSProp epsilon must be positive");
  if (!(base_lr > 0.0)) throw ValidationError("base learning rate must be positive");
  if (!(lr_factor > 0.0)) throw ValidationError("learning-rate factor must be positive");
  if (lr_step < 1) throw ValidationError("learning-rate step must be >= 1");
  if (total_iters < 0) throw ValidationError("total iterations must be non-negative");
}

namespace {

template <typename T>
void rmsprop_impl(Tensor& p, const Tensor& g, Tensor& s, const OptimizerHP& hp, double lr) {
  auto ps = p.data<T>();
  auto gs = g.data<T>();
  auto ss = s.data<T>();
  const T decay = static_cast<T>(hp.decay);
  const T keep = static_cast<T>(1.0 - hp.decay);
  const T eps = static_cast<T>(hp.epsilon);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ss[i] = decay * ss[i] + keep * gs[i] * gs[i];
    ps[i] -= rate * gs[i] / std::sqrt(ss[i] + eps);
  }
}

}  // namespace

void rmsprop_step(ParamStore& params, const ParamStore& grads, ParamStore& state, const OptimizerHP& hp,
                  double lr) {
  params.for_each_mut([&](const std::string& key, const std::string& name, ParamEntry& e) {
    if (!e.trainable) return;
    const ParamEntry* g = grads.find(key, name);
    if (!g) throw ValidationError("no gradient for '" + key + ":" + name + "'");
    if (g->value.shape() != e.value.shape() || g->value.precision() != e.value.precision()) {
      throw ShapeError("gradient for '" + key + ":" + name + "' has shape " + shape_string(g->value.shape()) +
                       ", parameter has " + shape_string(e.value.shape()));
    }
    if (!state.contains(key, name)) state.set(key, name, Tensor::zeros(e.value.shape(), e.value.precision()));
    Tensor& s = state.get_mut(key, name);
    if (e.value.precision() == Precision::F32) {
      rmsprop_impl<float>(e.value, g->value, s, hp, lr);
    } else {
      rmsprop_impl<double>(e.value, g->value, s, hp, lr);
    }
  });
}

namespace {

struct Decimal {
  std::uint64_t mantissa = 0;
  int exponent = 0;
};

// Shortest round-trip decimal of a positive finite double.
Decimal shortest_decimal(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  const std::string s(buf, end);
  const auto e = s.find('e');
  const std::string digits_part = s.substr(0, e);
  int exponent = e == std::string::npos ? 0 : std::stoi(s.substr(e + 1));
  std::string digits;
  const auto dot = digits_part.find('.');
  for (char c : digits_part) {
    if (c != '.') digits += c;
  }
  if (dot != std::string::npos) exponent -= static_cast<int>(digits_part.size() - dot - 1);
  return {std::stoull(digits), exponent};
}

}  // namespace

double lr_at(std::int64_t iter, const OptimizerHP& hp) {
  if (iter < 0) throw ValidationError("iteration must be non-negative");
  if (hp.lr_step < 1) throw ValidationError("learning-rate step must be >= 1");
  const std::int64_t n = iter / hp.lr_step;
  if (n == 0) return hp.base_lr;
  const Decimal b = shortest_decimal(hp.base_lr);
  const Decimal f = shortest_decimal(hp.lr_factor);
  std::uint64_t mantissa = b.mantissa;
  bool overflow = false;
  for (std::int64_t i = 0; i < n && !overflow; ++i) {
    overflow = __builtin_mul_overflow(mantissa, f.mantissa, &mantissa);
  }
  const std::int64_t exponent = b.exponent + n * static_cast<std::int64_t>(f.exponent);
  if (!overflow && exponent > -100000 && exponent < 100000) {
    const std::string text = std::to_string(mantissa) + "e" + std::to_string(exponent);
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec == std::errc()) return out;
  }
  return static_cast<double>(static_cast<long double>(hp.base_lr) *
                             std::pow(static_cast<long double>(hp.lr_factor), static_cast<long double>(n)));
}

std::int64_t lr_decays(const OptimizerHP& hp) { return hp.total_iters / hp.lr_step; }

std::vector<double> gate_probabilities(int num_modules, double max_prob) {
  if (num_modules < 1) throw ValidationError("need at least one module");
  if (!(max_prob >= 0.0 && max_prob < 1.0)) throw ValidationError("max drop probability must lie in [0, 1)");
  if (num_modules == 1) return {0.0};
  std::vector<double> p(static_cast<std::size_t>(num_modules));
  for (int j = 0; j < num_modules; ++j) p[static_cast<std::size_t>(j)] = max_prob * j / (num_modules - 1);
  return p;
}

GateState sample_gates(const Model& model, std::span<const double> probs, Rng& rng) {
  if (probs.size() != model.modules.size()) {
    throw ValidationError("need one drop probability per module (" + std::to_string(model.modules.size()) +
                          "), got " + std::to_string(probs.size()));
  }
  GateState gates(model.modules.size());
  for (std::size_t j = 0; j < model.modules.size(); ++j) {
    gates[j].resize(static_cast<std::size_t>(model.modules[j].path_count));
    for (std::size_t p = 0; p < gates[j].size(); ++p) gates[j][p] = !rng.bernoulli(probs[j]);
  }
  return gates;
}

}  // namespace polystack
