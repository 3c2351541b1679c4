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

#include <benchmark/benchmark.h>

#include "polystack/graph.hpp"
#include "polystack/network_builder.hpp"
#include "polystack/rng.hpp"

namespace {

using namespace polystack;

Tensor random_input(const Shape& per_sample, std::int64_t batch, Precision precision) {
  Shape s{batch};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  Tensor t = Tensor::zeros(s, precision);
  Rng rng(1);
  for (std::size_t i = 0; i < t.size(); ++i) t.set(i, rng.normal());
  return t;
}

void BM_ConvModuleForward(benchmark::State& state) {
  LowerOptions o;
  o.spatial = state.range(0);
  const auto m = lower_module(ModuleKind::ir(), BlockArch::conv(32, 4), 1.0, 1, o);
  const auto x = random_input(m.graph.input_shape(), 16, Precision::F32);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m.graph, m.params, x).output);
}
BENCHMARK(BM_ConvModuleForward)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);

void BM_ConvModuleBackward(benchmark::State& state) {
  LowerOptions o;
  o.spatial = state.range(0);
  const auto m = lower_module(ModuleKind::ir(), BlockArch::conv(32, 4), 1.0, 1, o);
  const auto x = random_input(m.graph.input_shape(), 16, Precision::F32);
  ForwardOptions fo;
  fo.mode = Mode::Train;
  const auto fwd = forward(m.graph, m.params, x, fo);
  const Tensor up = Tensor::full(fwd.output.shape(), 1.0, Precision::F32);
  for (auto _ : state) benchmark::DoNotOptimize(backward(fwd.tape, up).params);
}
BENCHMARK(BM_ConvModuleBackward)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);

// Naive and cascaded lowering of the same module: the cascaded graph runs
// k block applications instead of k(k+1)/2.
void BM_PolyModule(benchmark::State& state) {
  LowerOptions o;
  o.form = state.range(1) ? ModuleForm::Cascaded : ModuleForm::Naive;
  o.spatial = 8;
  const auto m = lower_module(ModuleKind::poly(static_cast<int>(state.range(0))), BlockArch::conv(32, 4), 0.3, 1, o);
  const auto x = random_input(m.graph.input_shape(), 16, Precision::F32);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m.graph, m.params, x).output);
  state.SetLabel(state.range(1) ? "cascaded" : "naive");
}
BENCHMARK(BM_PolyModule)->ArgsProduct({{2, 3, 4}, {0, 1}})->Unit(benchmark::kMicrosecond);

void BM_TrainStepToyNetwork(benchmark::State& state) {
  auto c = parse_network("IR 1-2-1");
  apply_stage_defaults(c);
  const auto m = lower(c, BlockArch::dense(16, 32), 1.0, 1);
  const auto x = random_input(m.graph.input_shape(), 32, Precision::F32);
  std::vector<int> labels(32);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
  ForwardOptions fo;
  fo.mode = Mode::Train;
  for (auto _ : state) {
    const auto fwd = forward(m.graph, m.params, x, fo);
    const auto loss = softmax_cross_entropy(fwd.output, labels);
    benchmark::DoNotOptimize(backward(fwd.tape, loss.grad_logits, false).params);
  }
}
BENCHMARK(BM_TrainStepToyNetwork)->Unit(benchmark::kMillisecond);

}  // namespace
