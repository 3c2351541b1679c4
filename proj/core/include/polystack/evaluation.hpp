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
#include <string>
#include <vector>

#include "polystack/data_pipeline.hpp"
#include "polystack/network_builder.hpp"

namespace polystack {

using ScoreMatrix = std::vector<std::vector<double>>;  // rows x classes

// Number of crops pooled per class: max(1, ceil(fraction * crops)). Products
// within 1e-9 of an integer count as that integer.
std::int64_t pool_count(std::int64_t crops, double fraction);

// Per class, the mean of the k highest crop scores (k from pool_count).
// Throws ValidationError for an empty matrix or fraction outside (0, 1].
std::vector<double> topk_pool(const ScoreMatrix& scores, double fraction);

// Fraction of rows whose label is not among the k highest scores. Ties rank
// the lower class index first.
double topk_error(const ScoreMatrix& scores, const std::vector<int>& labels, int k);
double topk_error(const Tensor& logits, const std::vector<int>& labels, int k);

struct PoolingConfig {
  std::vector<double> scales{1.0, 1.25, 1.5};
  int crops_per_scale = 8;
  double top_fraction = 0.3;

  void validate() const;
};

struct CropPosition {
  std::int64_t y = 0, x = 0;
  bool mirrored = false;
};

// ceil(count/2) distinct positions, ordered centre, four corners, then the
// points of successively finer evenly spaced grids; mirrored copies of those
// positions fill the remaining slots.
std::vector<CropPosition> crop_grid(std::int64_t height, std::int64_t width, std::int64_t crop, int count);

struct EvalReport {
  double top1 = 0.0;
  double top5 = 0.0;
  double loss = 0.0;  // plain evaluation only
  std::size_t n_images = 0;
  std::vector<std::string> warnings;
};

// Single centre view per image (resized to the model input), eval mode.
EvalReport evaluate(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices,
                    int batch_size = 64);

// Per image and scale: resize to round(scale * input) pixels, score the
// crop grid, pool with topk_pool; pooled vectors are averaged over scales.
// Scales whose image is smaller than the crop are skipped with a warning.
EvalReport multicrop_eval(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices,
                          const PoolingConfig& cfg);

// Model input side length (images are square).
std::int64_t model_input_size(const Model& model);

}  // namespace polystack
