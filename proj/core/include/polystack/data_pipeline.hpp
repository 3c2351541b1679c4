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

#include "polystack/rng.hpp"
#include "polystack/tensor.hpp"

namespace polystack {

// Labelled images (C, H, W) with a train/validation tag per sample.
struct Dataset {
  std::vector<Tensor> images;
  std::vector<int> labels;
  std::vector<bool> is_val;
  int classes = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return images.size(); }
  // Indices of the validation (val = true) or training split, ascending.
  std::vector<std::size_t> split(bool val) const;
};

// Validation membership: about 10% of indices, chosen by a hash of the index.
bool in_validation_split(std::size_t index);

// Procedural 3-channel stripes. Class c has its own orientation, frequency,
// phase and channel gains; each sample adds phase/amplitude jitter and pixel
// noise. Labels cycle through the classes, so counts are balanced within 1.
// Requires classes >= 2 and size >= 8.
Dataset synth_dataset(std::size_t n, int classes, std::int64_t size, std::uint64_t seed);

struct AugmentConfig {
  double area_min = 0.08;
  double area_max = 1.0;
  double aspect_min = 3.0 / 4.0;
  double aspect_max = 4.0 / 3.0;
  std::int64_t out_size = 32;
  double flip_prob = 0.5;
  int max_attempts = 10;

  // Crop area 8%..100%, aspect 3/4..4/3, flips with probability 1/2.
  static AugmentConfig full(std::int64_t out_size = 32);
  // Milder crops (50%..100%) for the small synthetic images.
  static AugmentConfig desk(std::int64_t out_size = 32);
  // Output size only: full image, no flips.
  static AugmentConfig none(std::int64_t out_size = 32);

  void validate() const;
};

struct CropBox {
  std::int64_t x = 0, y = 0, width = 0, height = 0;
  bool fallback = false;  // rejection sampling gave up; centre square
};

// Rejection-samples a crop: area fraction ~ U[area_min, area_max], aspect
// (width/height) ~ U[aspect_min, aspect_max], W = round(sqrt(a*A*r)),
// H = round(sqrt(a*A/r)). A candidate is accepted when it fits and its
// rounded extents still satisfy both ranges. After max_attempts failures the
// centre crop of the largest square is returned.
CropBox sample_crop(std::int64_t height, std::int64_t width, const AugmentConfig& cfg, Rng& rng);

Tensor crop(const Tensor& image, const CropBox& box);
// Bilinear with half-pixel centres; same-size resize is an exact copy.
Tensor resize_bilinear(const Tensor& image, std::int64_t out_h, std::int64_t out_w);
Tensor flip_horizontal(const Tensor& image);

// sample_crop, resize to out_size x out_size, then flip with flip_prob.
Tensor augment(const Tensor& image, const AugmentConfig& cfg, Rng& rng, CropBox* box = nullptr);

// Directory of "<label>_<index>.tns" tensor files.
void export_dataset(const Dataset& data, const std::string& dir);
Dataset import_dataset(const std::string& dir, int classes);

}  // namespace polystack
