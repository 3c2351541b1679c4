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

#include "polystack/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "polystack/error.hpp"

namespace polystack {

std::int64_t pool_count(std::int64_t crops, double fraction) {
  const double x = fraction * static_cast<double>(crops);
  const double nearest = std::round(x);
  const double k = std::abs(x - nearest) < 1e-9 ? nearest : std::ceil(x);
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(k), 1, std::max<std::int64_t>(1, crops));
}

std::vector<double> topk_pool(const ScoreMatrix& scores, double fraction) {
  if (scores.empty() || scores.front().empty()) throw ValidationError("cannot pool an empty score matrix");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("pooling fraction must lie in (0, 1]");
  const std::size_t classes = scores.front().size();
  for (const auto& row : scores) {
    if (row.size() != classes) throw ShapeError("ragged score matrix");
  }
  const auto k = static_cast<std::size_t>(pool_count(static_cast<std::int64_t>(scores.size()), fraction));
  std::vector<double> out(classes);
  std::vector<double> column(scores.size());
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < scores.size(); ++i) column[i] = scores[i][c];
    std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(k - 1), column.end(),
                     std::greater<>());
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += column[i];
    out[c] = sum / static_cast<double>(k);
  }
  return out;
}

namespace {

bool label_in_topk(const std::vector<double>& s, int label, int k) {
  const double v = s[static_cast<std::size_t>(label)];
  int rank = 0;
  for (std::size_t c = 0; c < s.size(); ++c) {
    if (s[c] > v || (s[c] == v && static_cast<int>(c) < label)) ++rank;
  }
  return rank < k;
}

}  // namespace

double topk_error(const ScoreMatrix& scores, const std::vector<int>& labels, int k) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  if (scores.empty()) return 0.0;
  if (k < 1 || static_cast<std::size_t>(k) > scores.front().size()) {
    throw ValidationError("top-k needs 1 <= k <= classes");
  }
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= scores[i].size()) {
      throw ValidationError("label out of range");
    }
    if (!label_in_topk(scores[i], labels[i], k)) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(scores.size());
}

double topk_error(const Tensor& logits, const std::vector<int>& labels, int k) {
  if (logits.rank() != 2) throw ShapeError("expected (batch, classes) logits");
  const auto B = logits.dim(0), K = logits.dim(1);
  const auto v = logits.to_vector();
  ScoreMatrix rows(static_cast<std::size_t>(B));
  for (std::int64_t b = 0; b < B; ++b) rows[static_cast<std::size_t>(b)].assign(v.begin() + b * K, v.begin() + (b + 1) * K);
  return topk_error(rows, labels, k);
}

void PoolingConfig::validate() const {
  if (scales.empty()) throw ValidationError("need at least one evaluation scale");
  for (double s : scales) {
    if (!(s > 0.0)) throw ValidationError("evaluation scales must be positive");
  }
  if (crops_per_scale < 1) throw ValidationError("crops_per_scale must be >= 1");
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw ValidationError("top fraction must lie in (0, 1]");
}

std::vector<CropPosition> crop_grid(std::int64_t height, std::int64_t width, std::int64_t crop, int count) {
  if (crop > height || crop > width) throw ShapeError("crop larger than the image");
  if (count < 1) return {};
  const std::int64_t my = height - crop, mx = width - crop;
  const auto unique = static_cast<std::size_t>((count + 1) / 2);
  std::vector<CropPosition> pos;
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  auto take = [&](std::int64_t y, std::int64_t x) {
    if (pos.size() < unique && seen.insert({y, x}).second) pos.push_back({y, x, false});
  };
  take(my / 2, mx / 2);
  take(0, 0);
  take(0, mx);
  take(my, 0);
  take(my, mx);
  const std::int64_t finest = std::max(my, mx) + 1;
  for (std::int64_t g = 3; pos.size() < unique && g <= std::max<std::int64_t>(finest, 3); ++g) {
    for (std::int64_t i = 0; i < g; ++i) {
      for (std::int64_t j = 0; j < g; ++j) {
        take(static_cast<std::int64_t>(std::llround(static_cast<double>(i * my) / static_cast<double>(g - 1))),
             static_cast<std::int64_t>(std::llround(static_cast<double>(j * mx) / static_cast<double>(g - 1))));
      }
    }
  }
  // Tiny images have fewer distinct positions than requested; repeat them.
  for (std::size_t i = 0; pos.size() < unique; ++i) pos.push_back(pos[i]);
  const std::size_t distinct = pos.size();
  for (std::size_t i = 0; pos.size() < static_cast<std::size_t>(count); ++i) {
    CropPosition m = pos[i % distinct];
    m.mirrored = true;
    pos.push_back(m);
  }
  return pos;
}

std::int64_t model_input_size(const Model& model) {
  const Shape& s = model.graph.input_shape();
  if (s.size() != 3 || s[1] != s[2]) throw ValidationError("model does not take square images");
  return s[1];
}

EvalReport evaluate(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices,
                    int batch_size) {
  const std::int64_t side = model_input_size(model);
  const Precision precision = model.meta.precision;
  EvalReport report;
  report.n_images = indices.size();
  if (indices.empty()) return report;
  ForwardOptions opts;
  opts.mode = Mode::Eval;
  ScoreMatrix probs;
  std::vector<int> labels;
  double loss = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<Tensor> views;
    std::vector<int> batch_labels;
    for (std::size_t i = start; i < end; ++i) {
      views.push_back(resize_bilinear(data.images[indices[i]], side, side).cast(precision));
      batch_labels.push_back(data.labels[indices[i]]);
    }
    const ForwardResult r = forward(model.graph, model.params, Tensor::stack(views), opts);
    loss += softmax_cross_entropy(r.output, batch_labels).loss * static_cast<double>(end - start);
    for (auto& row : softmax_rows(r.output)) probs.push_back(std::move(row));
    labels.insert(labels.end(), batch_labels.begin(), batch_labels.end());
  }
  const int classes = static_cast<int>(probs.front().size());
  report.top1 = topk_error(probs, labels, 1);
  report.top5 = topk_error(probs, labels, std::min(5, classes));
  report.loss = loss / static_cast<double>(indices.size());
  return report;
}

EvalReport multicrop_eval(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices,
                          const PoolingConfig& cfg) {
  cfg.validate();
  const std::int64_t side = model_input_size(model);
  const Precision precision = model.meta.precision;
  EvalReport report;
  report.n_images = indices.size();
  std::vector<double> usable;
  for (double s : cfg.scales) {
    const auto scaled = static_cast<std::int64_t>(std::llround(s * static_cast<double>(side)));
    if (scaled < side) {
      report.warnings.push_back("scale " + std::to_string(s) + " gives " + std::to_string(scaled) +
                                " px, smaller than the " + std::to_string(side) + " px crop; skipped");
    } else {
      usable.push_back(s);
    }
  }
  if (usable.empty()) throw ValidationError("every evaluation scale was skipped");
  if (indices.empty()) return report;
  ForwardOptions opts;
  opts.mode = Mode::Eval;
  ScoreMatrix pooled;
  std::vector<int> labels;
  for (std::size_t idx : indices) {
    const Tensor& image = data.images[idx];
    std::vector<Tensor> views;
    for (double s : usable) {
      const auto scaled = static_cast<std::int64_t>(std::llround(s * static_cast<double>(side)));
      const Tensor resized = resize_bilinear(image, scaled, scaled).cast(precision);
      for (const auto& p : crop_grid(scaled, scaled, side, cfg.crops_per_scale)) {
        Tensor v = crop(resized, CropBox{p.x, p.y, side, side, false});
        views.push_back(p.mirrored ? flip_horizontal(v) : std::move(v));
      }
    }
    const ForwardResult r = forward(model.graph, model.params, Tensor::stack(views), opts);
    const ScoreMatrix probs = softmax_rows(r.output);
    std::vector<double> mean(probs.front().size(), 0.0);
    const auto per_scale = static_cast<std::size_t>(cfg.crops_per_scale);
    for (std::size_t s = 0; s < usable.size(); ++s) {
      const ScoreMatrix block(probs.begin() + static_cast<std::ptrdiff_t>(s * per_scale),
                              probs.begin() + static_cast<std::ptrdiff_t>((s + 1) * per_scale));
      const auto p = topk_pool(block, cfg.top_fraction);
      for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p[c];
    }
    for (auto& m : mean) m /= static_cast<double>(usable.size());
    pooled.push_back(std::move(mean));
    labels.push_back(data.labels[idx]);
  }
  const int classes = static_cast<int>(pooled.front().size());
  report.top1 = topk_error(pooled, labels, 1);
  report.top5 = topk_error(pooled, labels, std::min(5, classes));
  return report;
}

}  // namespace polystack
