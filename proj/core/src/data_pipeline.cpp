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

#include "polystack/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>

#include "polystack/error.hpp"

namespace polystack {

namespace fs = std::filesystem;

std::vector<std::size_t> Dataset::split(bool val) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (is_val[i] == val) out.push_back(i);
  }
  return out;
}

bool in_validation_split(std::size_t index) {
  return derive_seed(0x5eed, "split/" + std::to_string(index)) % 10 == 0;
}

namespace {

double frac(double x) { return x - std::floor(x); }

struct ClassPattern {
  double cos_t, sin_t, freq, phase;
  double gain[3];
};

ClassPattern class_pattern(int c, int classes) {
  ClassPattern p{};
  const double theta = 0.5 * std::numbers::pi * c / (classes - 1);
  p.cos_t = std::cos(theta);
  p.sin_t = std::sin(theta);
  p.freq = 2.0 + (c % 3);
  p.phase = 2.0 * std::numbers::pi * frac(0.618034 * (c + 1));
  for (int k = 0; k < 3; ++k) p.gain[k] = 0.6 + 0.4 * frac(0.37 * (c + 1) * (k + 1));
  return p;
}

}  // namespace

Dataset synth_dataset(std::size_t n, int classes, std::int64_t size, std::uint64_t seed) {
  if (classes < 2) throw ValidationError("synthetic data needs at least two classes");
  if (size < 8) throw ValidationError("synthetic images must be at least 8 pixels wide");
  constexpr double kPhaseJitter = 0.35;
  constexpr double kNoise = 0.8;
  Dataset data;
  data.classes = classes;
  data.seed = seed;
  std::vector<ClassPattern> patterns;
  for (int c = 0; c < classes; ++c) patterns.push_back(class_pattern(c, classes));
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
    const ClassPattern& p = patterns[static_cast<std::size_t>(label)];
    Rng rng(derive_seed(seed, "sample/" + std::to_string(i)));
    const double phase = p.phase + kPhaseJitter * rng.normal();
    const double amp = rng.uniform(0.8, 1.2);
    Tensor img({3, size, size}, Precision::F32);
    auto px = img.data<float>();
    for (std::int64_t y = 0; y < size; ++y) {
      for (std::int64_t x = 0; x < size; ++x) {
        const double u = (p.cos_t * static_cast<double>(x) + p.sin_t * static_cast<double>(y)) /
                         static_cast<double>(size);
        const double wave = amp * std::sin(2.0 * std::numbers::pi * p.freq * u + phase);
        for (int k = 0; k < 3; ++k) {
          px[static_cast<std::size_t>((k * size + y) * size + x)] =
              static_cast<float>(p.gain[k] * wave + kNoise * rng.normal());
        }
      }
    }
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
    data.is_val.push_back(in_validation_split(i));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Augmentation

AugmentConfig AugmentConfig::full(std::int64_t out_size) {
  AugmentConfig c;
  c.out_size = out_size;
  return c;
}

AugmentConfig AugmentConfig::desk(std::int64_t out_size) {
  AugmentConfig c;
  c.area_min = 0.5;
  c.out_size = out_size;
  return c;
}

AugmentConfig AugmentConfig::none(std::int64_t out_size) {
  AugmentConfig c;
  c.area_min = 1.0;
  c.aspect_min = 1.0;
  c.aspect_max = 1.0;
  c.flip_prob = 0.0;
  c.out_size = out_size;
  return c;
}

void AugmentConfig::validate() const {
  if (!(area_min > 0.0 && area_min <= area_max && area_max <= 1.0)) {
    throw ValidationError("augmentation needs 0 < area_min <= area_max <= 1");
  }
  if (!(aspect_min > 0.0 && aspect_min <= aspect_max)) {
    throw ValidationError("augmentation needs 0 < aspect_min <= aspect_max");
  }
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ValidationError("flip probability must lie in [0, 1]");
  if (out_size < 1) throw ValidationError("output size must be positive");
  if (max_attempts < 0) throw ValidationError("max_attempts must be non-negative");
}

CropBox sample_crop(std::int64_t height, std::int64_t width, const AugmentConfig& cfg, Rng& rng) {
  if (height < 1 || width < 1) throw ShapeError("cannot crop an empty image");
  const double area = static_cast<double>(height * width);
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const double a = rng.uniform(cfg.area_min, cfg.area_max);
    const double r = rng.uniform(cfg.aspect_min, cfg.aspect_max);
    const auto w = std::max<std::int64_t>(1, std::llround(std::sqrt(a * area * r)));
    const auto h = std::max<std::int64_t>(1, std::llround(std::sqrt(a * area / r)));
    if (w > width || h > height) continue;
    const double got_area = static_cast<double>(w * h) / area;
    const double got_aspect = static_cast<double>(w) / static_cast<double>(h);
    if (got_area < cfg.area_min || got_area > cfg.area_max || got_aspect < cfg.aspect_min ||
        got_aspect > cfg.aspect_max) {
      continue;
    }
    CropBox box;
    box.width = w;
    box.height = h;
    box.x = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(width - w + 1)));
    box.y = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(height - h + 1)));
    return box;
  }
  CropBox box;
  box.width = box.height = std::min(height, width);
  box.x = (width - box.width) / 2;
  box.y = (height - box.height) / 2;
  box.fallback = true;
  return box;
}

namespace {

void expect_image(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("expected a (C, H, W) image, got " + shape_string(image.shape()));
}

template <typename T>
void resize_impl(const Tensor& in, Tensor& out) {
  const auto C = in.dim(0), H = in.dim(1), W = in.dim(2);
  const auto OH = out.dim(1), OW = out.dim(2);
  auto src = in.data<T>();
  auto dst = out.data<T>();
  struct Tap {
    std::int64_t i0, i1;
    double t;
  };
  auto taps = [](std::int64_t n_in, std::int64_t n_out) {
    std::vector<Tap> v(static_cast<std::size_t>(n_out));
    const double scale = static_cast<double>(n_in) / static_cast<double>(n_out);
    for (std::int64_t o = 0; o < n_out; ++o) {
      double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
      const auto i0 = static_cast<std::int64_t>(std::floor(s));
      const auto i1 = std::min(i0 + 1, n_in - 1);
      v[static_cast<std::size_t>(o)] = {i0, i1, s - static_cast<double>(i0)};
    }
    return v;
  };
  const auto ty = taps(H, OH);
  const auto tx = taps(W, OW);
  for (std::int64_t c = 0; c < C; ++c) {
    const T* plane = src.data() + c * H * W;
    for (std::int64_t oy = 0; oy < OH; ++oy) {
      const Tap& a = ty[static_cast<std::size_t>(oy)];
      for (std::int64_t ox = 0; ox < OW; ++ox) {
        const Tap& b = tx[static_cast<std::size_t>(ox)];
        const double v00 = plane[a.i0 * W + b.i0], v01 = plane[a.i0 * W + b.i1];
        const double v10 = plane[a.i1 * W + b.i0], v11 = plane[a.i1 * W + b.i1];
        const double top = v00 + b.t * (v01 - v00);
        const double bottom = v10 + b.t * (v11 - v10);
        dst[static_cast<std::size_t>((c * OH + oy) * OW + ox)] = static_cast<T>(top + a.t * (bottom - top));
      }
    }
  }
}

template <typename T>
void crop_impl(const Tensor& in, const CropBox& box, Tensor& out) {
  const auto C = in.dim(0), H = in.dim(1), W = in.dim(2);
  auto src = in.data<T>();
  auto dst = out.data<T>();
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t y = 0; y < box.height; ++y) {
      const T* row = src.data() + (c * H + box.y + y) * W + box.x;
      std::copy(row, row + box.width, dst.data() + (c * box.height + y) * box.width);
    }
  }
}

}  // namespace

Tensor crop(const Tensor& image, const CropBox& box) {
  expect_image(image);
  if (box.x < 0 || box.y < 0 || box.width < 1 || box.height < 1 || box.x + box.width > image.dim(2) ||
      box.y + box.height > image.dim(1)) {
    throw ShapeError("crop box outside the image");
  }
  Tensor out({image.dim(0), box.height, box.width}, image.precision());
  if (image.precision() == Precision::F32) {
    crop_impl<float>(image, box, out);
  } else {
    crop_impl<double>(image, box, out);
  }
  return out;
}

Tensor resize_bilinear(const Tensor& image, std::int64_t out_h, std::int64_t out_w) {
  expect_image(image);
  if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be positive");
  if (image.dim(1) == out_h && image.dim(2) == out_w) return image;
  Tensor out({image.dim(0), out_h, out_w}, image.precision());
  if (image.precision() == Precision::F32) {
    resize_impl<float>(image, out);
  } else {
    resize_impl<double>(image, out);
  }
  return out;
}

Tensor flip_horizontal(const Tensor& image) {
  expect_image(image);
  Tensor out = image;
  const auto W = image.dim(2);
  const auto rows = image.dim(0) * image.dim(1);
  auto flip = [&](auto span) {
    for (std::int64_t r = 0; r < rows; ++r) std::reverse(span.begin() + r * W, span.begin() + (r + 1) * W);
  };
  if (out.precision() == Precision::F32) {
    flip(out.data<float>());
  } else {
    flip(out.data<double>());
  }
  return out;
}

Tensor augment(const Tensor& image, const AugmentConfig& cfg, Rng& rng, CropBox* box_out) {
  expect_image(image);
  const CropBox box = sample_crop(image.dim(1), image.dim(2), cfg, rng);
  if (box_out) *box_out = box;
  Tensor out = resize_bilinear(crop(image, box), cfg.out_size, cfg.out_size);
  if (cfg.flip_prob > 0.0 && rng.bernoulli(cfg.flip_prob)) out = flip_horizontal(out);
  return out;
}

// ---------------------------------------------------------------------------
// Files

void export_dataset(const Dataset& data, const std::string& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < data.size(); ++i) {
    save_tensor((fs::path(dir) / (std::to_string(data.labels[i]) + "_" + std::to_string(i) + ".tns")).string(),
                data.images[i]);
  }
}

Dataset import_dataset(const std::string& dir, int classes) {
  if (!fs::is_directory(dir)) throw ValidationError("'" + dir + "' is not a directory");
  std::map<std::size_t, std::pair<int, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".tns") continue;
    const std::string stem = entry.path().stem().string();
    const auto us = stem.find('_');
    if (us == std::string::npos) throw ValidationError("bad dataset file name '" + stem + "'");
    try {
      const int label = std::stoi(stem.substr(0, us));
      const auto index = static_cast<std::size_t>(std::stoull(stem.substr(us + 1)));
      if (label < 0 || label >= classes) throw ValidationError("label out of range in '" + stem + "'");
      files[index] = {label, entry.path()};
    } catch (const std::logic_error&) {
      throw ValidationError("bad dataset file name '" + stem + "'");
    }
  }
  Dataset data;
  data.classes = classes;
  for (const auto& [index, item] : files) {
    data.images.push_back(load_tensor(item.second.string()));
    data.labels.push_back(item.first);
    data.is_val.push_back(in_validation_split(index));
  }
  return data;
}

}  // namespace polystack
