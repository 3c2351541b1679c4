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

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "polystack/error.hpp"
#include "polystack/graph.hpp"

namespace polystack {

namespace {

struct ImageDims {
  std::int64_t batch, channels, height, width;
};

ImageDims image_dims(const Tensor& t) {
  return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  std::int64_t channels, height, width, kernel, stride, pad, out_h, out_w;

  std::int64_t rows() const { return channels * kernel * kernel; }
  std::int64_t cols() const { return out_h * out_w; }
  // 1x1, stride 1: the input plane already is the column matrix.
  bool direct() const { return kernel == 1 && stride == 1; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& y, std::int64_t kernel, std::int64_t stride) {
  return {x.dim(1), x.dim(2), x.dim(3), kernel, stride, (kernel - 1) / 2, y.dim(2), y.dim(3)};
}

// Output columns [lo, hi) whose input column ox*stride - pad + kx is inside
// the image.
std::pair<std::int64_t, std::int64_t> valid_columns(const ConvGeometry& g, std::int64_t kx) {
  std::int64_t lo = 0;
  while (lo < g.out_w && lo * g.stride - g.pad + kx < 0) ++lo;
  std::int64_t hi = g.out_w;
  while (hi > lo && (hi - 1) * g.stride - g.pad + kx >= g.width) --hi;
  return {lo, hi};
}

// Unfolds one sample into a (C*k*k, Ho*Wo) matrix, zero outside the image.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
        T* dst = cols + ((c * g.kernel + ky) * g.kernel + kx) * g.cols();
        const auto [lo, hi] = valid_columns(g, kx);
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          T* row = dst + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(row, row + g.out_w, T(0));
            continue;
          }
          const T* src = x + (c * g.height + iy) * g.width - g.pad + kx;
          std::fill(row, row + lo, T(0));
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, row + lo);
          } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) row[ox] = src[ox * g.stride];
          }
          std::fill(row + hi, row + g.out_w, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the image.
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* dx) {
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
        const T* src = cols + ((c * g.kernel + ky) * g.kernel + kx) * g.cols();
        const auto [lo, hi] = valid_columns(g, kx);
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          const T* row = src + oy * g.out_w;
          T* dst = dx + (c * g.height + iy) * g.width - g.pad + kx;
          if (g.stride == 1) {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox] += row[ox];
          } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox * g.stride] += row[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_forward(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride, Tensor& y) {
  const ConvGeometry g = conv_geometry(x, y, w.dim(2), stride);
  const std::int64_t B = x.dim(0), O = y.dim(1);
  const ConstMatMap<T> W(w.data<T>().data(), O, g.rows());
  const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(b.data<T>().data(), O);
  std::vector<T> buffer(g.direct() ? 0 : static_cast<std::size_t>(g.rows() * g.cols()));
  const T* xs = x.data<T>().data();
  T* ys = y.data<T>().data();
  for (std::int64_t n = 0; n < B; ++n) {
    const T* sample = xs + n * g.channels * g.height * g.width;
    if (!g.direct()) im2col(sample, g, buffer.data());
    const ConstMatMap<T> cols(g.direct() ? sample : buffer.data(), g.rows(), g.cols());
    MatMap<T> Y(ys + n * O * g.cols(), O, g.cols());
    Y.noalias() = W * cols;
    Y.colwise() += bias;
  }
}

template <typename T>
void conv_backward(const Tensor& x, const Tensor& w, std::int64_t stride, const Tensor& dy, Tensor* dx,
                   Tensor& dw, Tensor& db) {
  const ConvGeometry g = conv_geometry(x, dy, w.dim(2), stride);
  const std::int64_t B = x.dim(0), O = dy.dim(1);
  const ConstMatMap<T> W(w.data<T>().data(), O, g.rows());
  MatMap<T> dW(dw.data<T>().data(), O, g.rows());
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dB(db.data<T>().data(), O);
  const std::size_t plane = static_cast<std::size_t>(g.rows() * g.cols());
  std::vector<T> buffer(g.direct() ? 0 : plane);
  std::vector<T> dcols(dx && !g.direct() ? plane : 0);
  const T* xs = x.data<T>().data();
  const T* gys = dy.data<T>().data();
  for (std::int64_t n = 0; n < B; ++n) {
    const T* sample = xs + n * g.channels * g.height * g.width;
    if (!g.direct()) im2col(sample, g, buffer.data());
    const ConstMatMap<T> cols(g.direct() ? sample : buffer.data(), g.rows(), g.cols());
    const ConstMatMap<T> dY(gys + n * O * g.cols(), O, g.cols());
    dW.noalias() += dY * cols.transpose();
    dB += dY.rowwise().sum();
    if (!dx) continue;
    T* dsample = dx->data<T>().data() + n * g.channels * g.height * g.width;
    if (g.direct()) {
      MatMap<T> dX(dsample, g.rows(), g.cols());
      dX.noalias() += W.transpose() * dY;
    } else {
      MatMap<T> dC(dcols.data(), g.rows(), g.cols());
      dC.noalias() = W.transpose() * dY;
      col2im(dcols.data(), g, dsample);
    }
  }
}

template <typename T>
void dense_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  const auto B = x.dim(0), in = x.dim(1), out = y.dim(1);
  const ConstMatMap<T> X(x.data<T>().data(), B, in);
  const ConstMatMap<T> W(w.data<T>().data(), out, in);
  const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(b.data<T>().data(), out);
  MatMap<T> Y(y.data<T>().data(), B, out);
  Y.noalias() = X * W.transpose();
  Y.rowwise() += bias;
}

template <typename T>
void dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor& dw,
                    Tensor& db) {
  const auto B = x.dim(0), in = x.dim(1), out = dy.dim(1);
  const ConstMatMap<T> X(x.data<T>().data(), B, in);
  const ConstMatMap<T> W(w.data<T>().data(), out, in);
  const ConstMatMap<T> dY(dy.data<T>().data(), B, out);
  MatMap<T> dW(dw.data<T>().data(), out, in);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> dB(db.data<T>().data(), out);
  dW.noalias() += dY.transpose() * X;
  dB += dY.colwise().sum();
  if (dx) {
    MatMap<T> dX(dx->data<T>().data(), B, in);
    dX.noalias() += dY * W;
  }
}

// Views (B, C, ...) as (B, C, S).
struct NormDims {
  std::int64_t batch, channels, spatial;
};

NormDims norm_dims(const Tensor& t) {
  NormDims d{t.dim(0), t.dim(1), 1};
  for (std::size_t i = 2; i < t.rank(); ++i) d.spatial *= t.dim(i);
  return d;
}

template <typename T>
void norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& run_mean,
                  const Tensor& run_var, bool train, Tensor& y, std::vector<double>& mean,
                  std::vector<double>& inv_std, std::vector<double>& batch_var) {
  const auto [B, C, S] = norm_dims(x);
  auto xs = x.data<T>();
  auto ys = y.data<T>();
  auto gs = gamma.data<T>();
  auto bs = beta.data<T>();
  mean.assign(static_cast<std::size_t>(C), 0.0);
  inv_std.assign(static_cast<std::size_t>(C), 0.0);
  batch_var.assign(static_cast<std::size_t>(C), 0.0);
  const double count = static_cast<double>(B * S);
  for (std::int64_t c = 0; c < C; ++c) {
    double m = 0.0, v = 0.0;
    if (train) {
      for (std::int64_t n = 0; n < B; ++n) {
        const T* p = xs.data() + (n * C + c) * S;
        for (std::int64_t s = 0; s < S; ++s) m += p[s];
      }
      m /= count;
      for (std::int64_t n = 0; n < B; ++n) {
        const T* p = xs.data() + (n * C + c) * S;
        for (std::int64_t s = 0; s < S; ++s) v += (p[s] - m) * (p[s] - m);
      }
      v /= count;
    } else {
      m = run_mean.at(static_cast<std::size_t>(c));
      v = run_var.at(static_cast<std::size_t>(c));
    }
    const double is = 1.0 / std::sqrt(v + kNormEpsilon);
    mean[static_cast<std::size_t>(c)] = m;
    inv_std[static_cast<std::size_t>(c)] = is;
    batch_var[static_cast<std::size_t>(c)] = v;
    const double g = gs[c], b = bs[c];
    for (std::int64_t n = 0; n < B; ++n) {
      const T* p = xs.data() + (n * C + c) * S;
      T* q = ys.data() + (n * C + c) * S;
      for (std::int64_t s = 0; s < S; ++s) q[s] = static_cast<T>(g * (p[s] - m) * is + b);
    }
  }
}

template <typename T>
void norm_backward(const Tensor& x, const Tensor& gamma, const std::vector<double>& mean,
                   const std::vector<double>& inv_std, const Tensor& dy, Tensor& dx, Tensor& dgamma,
                   Tensor& dbeta) {
  const auto [B, C, S] = norm_dims(x);
  auto xs = x.data<T>();
  auto gys = dy.data<T>();
  auto gxs = dx.data<T>();
  auto gs = gamma.data<T>();
  auto dgs = dgamma.data<T>();
  auto dbs = dbeta.data<T>();
  const double count = static_cast<double>(B * S);
  for (std::int64_t c = 0; c < C; ++c) {
    const double m = mean[static_cast<std::size_t>(c)];
    const double is = inv_std[static_cast<std::size_t>(c)];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::int64_t n = 0; n < B; ++n) {
      const T* p = xs.data() + (n * C + c) * S;
      const T* g = gys.data() + (n * C + c) * S;
      for (std::int64_t s = 0; s < S; ++s) {
        sum_dy += g[s];
        sum_dy_xhat += g[s] * (p[s] - m) * is;
      }
    }
    dgs[c] += static_cast<T>(sum_dy_xhat);
    dbs[c] += static_cast<T>(sum_dy);
    const double gm = gs[c];
    for (std::int64_t n = 0; n < B; ++n) {
      const T* p = xs.data() + (n * C + c) * S;
      const T* g = gys.data() + (n * C + c) * S;
      T* q = gxs.data() + (n * C + c) * S;
      for (std::int64_t s = 0; s < S; ++s) {
        const double xhat = (p[s] - m) * is;
        q[s] += static_cast<T>(gm * is * (g[s] - sum_dy / count - xhat * sum_dy_xhat / count));
      }
    }
  }
}

Shape batched(std::int64_t batch, const Shape& per_sample) {
  Shape s{batch};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

template <typename T>
class Executor {
 public:
  Executor(const ComputationGraph& graph, const ParamStore& params, const ForwardOptions& options)
      : graph_(graph), params_(params), options_(options) {}

  ForwardResult run(const Tensor& input) {
    const Precision precision = input.precision();
    if (input.rank() != graph_.input_shape().size() + 1 ||
        !std::equal(graph_.input_shape().begin(), graph_.input_shape().end(), input.shape().begin() + 1)) {
      throw ShapeError("node 'input': expected batch of " + shape_string(graph_.input_shape()) +
                       ", got " + shape_string(input.shape()));
    }
    const std::int64_t batch = input.dim(0);
    Tape tape;
    tape.mode = options_.mode;
    tape.graph = &graph_;
    tape.params = &params_;
    const std::size_t n = graph_.size();
    tape.values.resize(n);
    tape.term_scales.resize(n);
    tape.norm_mean.resize(n);
    tape.norm_inv_std.resize(n);
    tape.values[0] = input;
    const bool train = options_.mode == Mode::Train;

    for (std::size_t id = 1; id < n; ++id) {
      const Node& node = graph_.nodes()[id];
      const Tensor& x = tape.values[static_cast<std::size_t>(node.inputs.front())];
      Tensor y(batched(batch, node.shape), precision);
      switch (node.kind) {
        case OpKind::Dense:
          dense_forward<T>(x, param(node, ".weight", precision), param(node, ".bias", precision), y);
          break;
        case OpKind::Conv2D:
        case OpKind::Downsample:
          conv_forward<T>(x, param(node, ".weight", precision), param(node, ".bias", precision),
                          node.stride, y);
          break;
        case OpKind::ReLU: {
          auto xs = x.data<T>();
          auto ys = y.data<T>();
          for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = xs[i] > T(0) ? xs[i] : T(0);
          break;
        }
        case OpKind::ScalarScale: {
          auto xs = x.data<T>();
          auto ys = y.data<T>();
          const T s = static_cast<T>(node.scale);
          for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = s * xs[i];
          break;
        }
        case OpKind::Add: {
          auto& scales = tape.term_scales[id];
          scales = term_scales(node);
          auto ys = y.data<T>();
          for (std::size_t t = 0; t < node.inputs.size(); ++t) {
            if (scales[t] == 0.0) continue;
            auto xs = tape.values[static_cast<std::size_t>(node.inputs[t])].template data<T>();
            if (scales[t] == 1.0) {
              for (std::size_t i = 0; i < xs.size(); ++i) ys[i] += xs[i];
            } else {
              const T s = static_cast<T>(scales[t]);
              for (std::size_t i = 0; i < xs.size(); ++i) ys[i] += s * xs[i];
            }
          }
          break;
        }
        case OpKind::ChannelNorm: {
          std::vector<double> batch_var;
          norm_forward<T>(x, param(node, ".gamma", precision), param(node, ".beta", precision),
                          param(node, ".running_mean", precision), param(node, ".running_var", precision),
                          train, y, tape.norm_mean[id], tape.norm_inv_std[id], batch_var);
          if (train) record_running_stats(node, tape, id, batch_var, precision);
          break;
        }
        case OpKind::GlobalAvgPool: {
          const auto [B, C, H, W] = image_dims(x);
          auto xs = x.data<T>();
          auto ys = y.data<T>();
          const T inv = T(1) / static_cast<T>(H * W);
          for (std::int64_t i = 0; i < B * C; ++i) {
            T acc = 0;
            const T* p = xs.data() + i * H * W;
            for (std::int64_t s = 0; s < H * W; ++s) acc += p[s];
            ys[i] = acc * inv;
          }
          break;
        }
        case OpKind::Input: break;
      }
      if (options_.check_finite && !y.all_finite()) {
        throw NumericError("non-finite value produced at node '" + node.label + "'");
      }
      tape.values[id] = std::move(y);
    }
    ForwardResult result;
    result.output = tape.values[static_cast<std::size_t>(graph_.output())];
    result.tape = std::move(tape);
    return result;
  }

 private:
  const Tensor& param(const Node& node, const char* suffix, Precision precision) const {
    const Tensor& t = params_.get(node.share_key, node.param + suffix);
    if (t.precision() != precision) {
      throw ValidationError("parameter '" + node.share_key + ":" + node.param + suffix +
                            "' precision differs from the input");
    }
    return t;
  }

  std::vector<double> term_scales(const Node& node) const {
    std::vector<double> scales(node.inputs.size(), 1.0);
    if (node.gates.empty()) return scales;
    const bool train = options_.mode == Mode::Train;
    const GateState* gates = train ? options_.gates : nullptr;
    for (std::size_t t = 0; t < node.gates.size(); ++t) {
      const TermGate& g = node.gates[t];
      if (g.paths.empty()) continue;
      if (gates) {
        const auto& bits = module_bits(*gates, node.module);
        const bool active = std::any_of(g.paths.begin(), g.paths.end(), [&](int p) {
          if (p < 0 || static_cast<std::size_t>(p) >= bits.size()) {
            throw ValidationError("gate vector for module " + std::to_string(node.module) +
                                  " is too short");
          }
          return bits[static_cast<std::size_t>(p)];
        });
        if (!active) {
          scales[t] = 0.0;
          continue;
        }
      }
      if (g.scale_path < 0) continue;
      if (gates && options_.rescale == PathRescale::InverseSurvival) {
        const double p = module_prob(node.module);
        if (p < 1.0) scales[t] = 1.0 / (1.0 - p);
      } else if (!train && options_.rescale == PathRescale::EvalExpectation) {
        scales[t] = 1.0 - module_prob(node.module);
      }
    }
    return scales;
  }

  static const std::vector<bool>& module_bits(const GateState& gates, int module) {
    if (module < 0 || static_cast<std::size_t>(module) >= gates.size()) {
      throw ValidationError("no gate vector for module " + std::to_string(module));
    }
    return gates[static_cast<std::size_t>(module)];
  }

  double module_prob(int module) const {
    if (module < 0 || static_cast<std::size_t>(module) >= options_.path_probs.size()) {
      throw ValidationError("path rescaling needs a drop probability for module " +
                            std::to_string(module));
    }
    return options_.path_probs[static_cast<std::size_t>(module)];
  }

  void record_running_stats(const Node& node, Tape& tape, std::size_t id,
                            const std::vector<double>& batch_var, Precision precision) const {
    const Tensor& rm = param(node, ".running_mean", precision);
    const Tensor& rv = param(node, ".running_var", precision);
    Tensor new_mean(rm.shape(), precision);
    Tensor new_var(rv.shape(), precision);
    for (std::size_t c = 0; c < rm.size(); ++c) {
      new_mean.set(c, kNormMomentum * rm.at(c) + (1.0 - kNormMomentum) * tape.norm_mean[id][c]);
      new_var.set(c, kNormMomentum * rv.at(c) + (1.0 - kNormMomentum) * batch_var[c]);
    }
    tape.state_updates.set(node.share_key, node.param + ".running_mean", std::move(new_mean), false);
    tape.state_updates.set(node.share_key, node.param + ".running_var", std::move(new_var), false);
  }

  const ComputationGraph& graph_;
  const ParamStore& params_;
  const ForwardOptions& options_;
};

template <typename T>
Gradients run_backward(const Tape& tape, const Tensor& upstream, bool want_input) {
  const ComputationGraph& graph = *tape.graph;
  const ParamStore& params = *tape.params;
  Gradients out;
  out.params = params.zeros_like_trainable();
  std::vector<Tensor> grads(graph.size());
  grads[static_cast<std::size_t>(graph.output())] = upstream;

  auto grad_param = [&](const Node& n, const char* suffix) -> Tensor& {
    return out.params.get_mut(n.share_key, n.param + suffix);
  };
  auto input_grad = [&](NodeId in) -> Tensor& {
    Tensor& g = grads[static_cast<std::size_t>(in)];
    if (g.shape().empty()) {
      const Tensor& v = tape.values[static_cast<std::size_t>(in)];
      g = Tensor::zeros(v.shape(), v.precision());
    }
    return g;
  };

  auto maybe_grad = [&](NodeId in) -> Tensor* {
    return in == graph.input() && !want_input ? nullptr : &input_grad(in);
  };

  for (std::size_t id = graph.size(); id-- > 1;) {
    const Tensor& dy = grads[id];
    if (dy.shape().empty()) continue;
    const Node& node = graph.nodes()[id];
    const NodeId in0 = node.inputs.front();
    const Tensor& x = tape.values[static_cast<std::size_t>(in0)];
    switch (node.kind) {
      case OpKind::Dense:
        dense_backward<T>(x, params.get(node.share_key, node.param + ".weight"), dy, maybe_grad(in0),
                          grad_param(node, ".weight"), grad_param(node, ".bias"));
        break;
      case OpKind::Conv2D:
      case OpKind::Downsample:
        conv_backward<T>(x, params.get(node.share_key, node.param + ".weight"), node.stride, dy,
                         maybe_grad(in0), grad_param(node, ".weight"), grad_param(node, ".bias"));
        break;
      case OpKind::ReLU: {
        auto xs = x.data<T>();
        auto gs = dy.data<T>();
        auto gx = input_grad(in0).template data<T>();
        for (std::size_t i = 0; i < xs.size(); ++i) {
          if (xs[i] > T(0)) gx[i] += gs[i];
        }
        break;
      }
      case OpKind::ScalarScale:
        input_grad(in0).add_scaled(dy, node.scale);
        break;
      case OpKind::Add: {
        const auto& scales = tape.term_scales[id];
        for (std::size_t t = 0; t < node.inputs.size(); ++t) {
          if (scales[t] == 0.0) continue;
          input_grad(node.inputs[t]).add_scaled(dy, scales[t]);
        }
        break;
      }
      case OpKind::ChannelNorm:
        norm_backward<T>(x, params.get(node.share_key, node.param + ".gamma"), tape.norm_mean[id],
                         tape.norm_inv_std[id], dy, input_grad(in0), grad_param(node, ".gamma"),
                         grad_param(node, ".beta"));
        break;
      case OpKind::GlobalAvgPool: {
        const auto [B, C, H, W] = image_dims(x);
        auto gs = dy.data<T>();
        auto gx = input_grad(in0).template data<T>();
        const T inv = T(1) / static_cast<T>(H * W);
        for (std::int64_t i = 0; i < B * C; ++i) {
          const T g = gs[i] * inv;
          T* p = gx.data() + i * H * W;
          for (std::int64_t s = 0; s < H * W; ++s) p[s] += g;
        }
        break;
      }
      case OpKind::Input: break;
    }
    grads[id] = Tensor();
  }
  out.input = grads[0].shape().empty()
                  ? Tensor::zeros(tape.values[0].shape(), tape.values[0].precision())
                  : std::move(grads[0]);
  return out;
}

}  // namespace

ForwardResult forward(const ComputationGraph& graph, const ParamStore& params, const Tensor& input,
                      const ForwardOptions& options) {
  if (input.precision() == Precision::F32) return Executor<float>(graph, params, options).run(input);
  return Executor<double>(graph, params, options).run(input);
}

Gradients backward(const Tape& tape, const Tensor& upstream, bool input_grad) {
  if (tape.mode != Mode::Train) throw ValidationError("backward needs a train-mode tape");
  if (!tape.graph || !tape.params) throw ValidationError("tape is not attached to a graph");
  const Tensor& out = tape.values.at(static_cast<std::size_t>(tape.graph->output()));
  if (upstream.shape() != out.shape()) {
    throw ShapeError("upstream gradient " + shape_string(upstream.shape()) + " does not match output " +
                     shape_string(out.shape()));
  }
  const Tensor up = upstream.cast(out.precision());
  if (out.precision() == Precision::F32) return run_backward<float>(tape, up, input_grad);
  return run_backward<double>(tape, up, input_grad);
}

void apply_state_updates(ParamStore& params, const Tape& tape) {
  tape.state_updates.for_each([&](const std::string& k, const std::string& n, const ParamEntry& e) {
    params.set(k, n, e.value, false);
  });
}

std::optional<std::string> first_nonfinite_node(const Tape& tape) {
  if (!tape.graph) return std::nullopt;
  for (std::size_t i = 0; i < tape.values.size(); ++i) {
    if (!tape.values[i].all_finite()) return tape.graph->nodes()[i].label;
  }
  return std::nullopt;
}

std::vector<std::vector<double>> softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects (batch, classes) logits");
  const auto B = logits.dim(0), K = logits.dim(1);
  const std::vector<double> z = logits.to_vector();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(B), std::vector<double>(static_cast<std::size_t>(K)));
  for (std::int64_t b = 0; b < B; ++b) {
    const double* row = z.data() + b * K;
    const double mx = *std::max_element(row, row + K);
    double total = 0.0;
    for (std::int64_t k = 0; k < K; ++k) {
      out[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)] = std::exp(row[k] - mx);
      total += out[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
    }
    for (auto& v : out[static_cast<std::size_t>(b)]) v /= total;
  }
  return out;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || static_cast<std::size_t>(logits.dim(0)) != labels.size()) {
    throw ShapeError("cross entropy: logits " + shape_string(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const auto B = logits.dim(0), K = logits.dim(1);
  const auto probs = softmax_rows(logits);
  LossResult r;
  r.grad_logits = Tensor::zeros(logits.shape(), logits.precision());
  for (std::int64_t b = 0; b < B; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= K) throw ValidationError("label " + std::to_string(y) + " out of range");
    const auto& p = probs[static_cast<std::size_t>(b)];
    r.loss -= std::log(std::max(p[static_cast<std::size_t>(y)], std::numeric_limits<double>::min()));
    for (std::int64_t k = 0; k < K; ++k) {
      const double g = (p[static_cast<std::size_t>(k)] - (k == y ? 1.0 : 0.0)) / static_cast<double>(B);
      r.grad_logits.set(static_cast<std::size_t>(b * K + k), g);
    }
  }
  r.loss /= static_cast<double>(B);
  return r;
}

}  // namespace polystack
