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

#include "polystack/data_pipeline.hpp"
#include "polystack/evaluation.hpp"
#include "polystack/trainer.hpp"

namespace {

using namespace polystack;

void BM_LrSchedule(benchmark::State& state) {
  const auto hp = OptimizerHP::full();
  std::int64_t it = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(lr_at(it, hp));
    it = (it + 7919) % 560000;
  }
}
BENCHMARK(BM_LrSchedule);

void BM_Augment(benchmark::State& state) {
  const auto data = synth_dataset(8, 4, state.range(0), 1);
  const auto cfg = AugmentConfig::full(32);
  Rng rng(2);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(augment(data.images[i++ % data.size()], cfg, rng));
}
BENCHMARK(BM_Augment)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_TopkPool(benchmark::State& state) {
  ScoreMatrix s(static_cast<std::size_t>(state.range(0)), std::vector<double>(100));
  Rng rng(3);
  for (auto& row : s) {
    for (auto& v : row) v = rng.uniform();
  }
  for (auto _ : state) benchmark::DoNotOptimize(topk_pool(s, 0.3));
}
BENCHMARK(BM_TopkPool)->Arg(36)->Arg(288);

}  // namespace
