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

#include "polystack/config_dsl.hpp"
#include "polystack/operator_algebra.hpp"

namespace {

using namespace polystack;

void BM_ExpandModule(benchmark::State& state) {
  const auto kind = ModuleKind::mpoly(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(expand_module(kind, 0.3));
}
BENCHMARK(BM_ExpandModule)->Arg(2)->Arg(4)->Arg(8);

void BM_Cascade(benchmark::State& state) {
  const auto e = expand_module(ModuleKind::poly(static_cast<int>(state.range(0))), 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(cascade(e));
}
BENCHMARK(BM_Cascade)->Arg(2)->Arg(4)->Arg(8);

void BM_ExpandSymbolic(benchmark::State& state) {
  const auto e = cascade(expand_module(ModuleKind::mpoly(static_cast<int>(state.range(0)))));
  for (auto _ : state) benchmark::DoNotOptimize(expand_symbolic(e));
}
BENCHMARK(BM_ExpandSymbolic)->Arg(2)->Arg(4)->Arg(8);

void BM_ParseRender(benchmark::State& state) {
  const std::string text = preset_text("very-deep-polynet");
  for (auto _ : state) benchmark::DoNotOptimize(render_network(parse_network(text)));
}
BENCHMARK(BM_ParseRender);

}  // namespace
