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

namespace polystack {

ParamStore finite_diff_grad(const std::function<double(const ParamStore&)>& loss_fn,
                            const ParamStore& params, double h) {
  ParamStore grads = params.zeros_like_trainable();
  ParamStore probe = params;
  params.for_each([&](const std::string& key, const std::string& name, const ParamEntry& e) {
    if (!e.trainable) return;
    Tensor& slot = probe.get_mut(key, name);
    Tensor& g = grads.get_mut(key, name);
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double p = e.value.at(i);
      slot.set(i, p + h);
      const double up = loss_fn(probe);
      slot.set(i, p - h);
      const double down = loss_fn(probe);
      slot.set(i, p);
      g.set(i, (up - down) / (2.0 * h));
    }
  });
  return grads;
}

Tensor finite_diff_input(const std::function<double(const Tensor&)>& loss_fn, const Tensor& input,
                         double h) {
  Tensor grad = Tensor::zeros(input.shape(), input.precision());
  Tensor probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double x = input.at(i);
    probe.set(i, x + h);
    const double up = loss_fn(probe);
    probe.set(i, x - h);
    const double down = loss_fn(probe);
    probe.set(i, x);
    grad.set(i, (up - down) / (2.0 * h));
  }
  return grad;
}

}  // namespace polystack
