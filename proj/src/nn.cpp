// Copyright 2026 The MPDL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mpdl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mpdl::nn {

void Mlp::validate() const {
  if (layers.empty()) throw DomainError("Mlp: needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.out()) {
      throw DimensionError("Mlp: bias length differs from layer output width");
    }
    if (layer.activation == Activation::kSoftmax && l + 1 != layers.size()) {
      throw DomainError("Mlp: softmax is only allowed on the output layer");
    }
    if (l > 0 && layers[l - 1].out() != layer.in()) {
      throw DimensionError("Mlp: layer " + std::to_string(l) +
                           " input width does not chain");
    }
  }
}

DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseLayer layer{Tensor2(out, in), std::vector<double>(out, 0.0), act};
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : layer.weights.data) w = (2.0 * uniform01(rng) - 1.0) * limit;
  return layer;
}

Mlp make_mlp(std::span<const std::size_t> widths, Activation hidden_act,
             Activation output_act, Rng& rng) {
  if (widths.size() < 2) throw DomainError("make_mlp: need at least two widths");
  Mlp model;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const bool last = l + 2 == widths.size();
    model.layers.push_back(
        make_dense(widths[l], widths[l + 1], last ? output_act : hidden_act, rng));
  }
  return model;
}

Tensor2 preactivation(const DenseLayer& layer, const Tensor2& x) {
  if (x.cols != layer.in()) {
    throw DimensionError("preactivation: input has " + std::to_string(x.cols) +
                         " columns, layer expects " + std::to_string(layer.in()));
  }
  Tensor2 z(x.rows, layer.out());
  for (std::size_t r = 0; r < x.rows; ++r) {
    const auto xr = x.row(r);
    for (std::size_t j = 0; j < layer.out(); ++j) {
      const auto w = layer.weights.row(j);
      double s = layer.bias[j];
      for (std::size_t k = 0; k < xr.size(); ++k) s += w[k] * xr[k];
      z(r, j) = s;
    }
  }
  return z;
}

Tensor2 softmax_rows(const Tensor2& logits) {
  Tensor2 out(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto in = logits.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out(r, j) = std::exp(in[j] - mx);
      total += out(r, j);
    }
    for (std::size_t j = 0; j < in.size(); ++j) out(r, j) /= total;
  }
  return out;
}

Tensor2 activate(Activation act, const Tensor2& z) {
  if (act == Activation::kSoftmax) return softmax_rows(z);
  Tensor2 out = z;
  switch (act) {
    case Activation::kIdentity:
      break;
    case Activation::kRelu:
      for (double& v : out.data) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::kSigmoid:
      for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
      break;
    case Activation::kSoftmax:
      break;
  }
  return out;
}

Tensor2 activation_derivative(Activation act, const Tensor2& z) {
  Tensor2 out(z.rows, z.cols, 1.0);
  switch (act) {
    case Activation::kIdentity:
      break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < z.data.size(); ++i) {
        out.data[i] = z.data[i] > 0.0 ? 1.0 : 0.0;
      }
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < z.data.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-z.data[i]));
        out.data[i] = s * (1.0 - s);
      }
      break;
    case Activation::kSoftmax:
      throw DomainError("activation_derivative: softmax has no elementwise derivative");
  }
  return out;
}

std::pair<Tensor2, ForwardCache> mlp_forward(const Mlp& model, const Tensor2& batch) {
  model.validate();
  if (batch.cols != model.input_width()) {
    throw DimensionError("mlp_forward: batch width " + std::to_string(batch.cols) +
                         " != model input width " +
                         std::to_string(model.input_width()));
  }
  ForwardCache cache;
  cache.input = batch;
  const Tensor2* x = &cache.input;
  for (const auto& layer : model.layers) {
    cache.z.push_back(preactivation(layer, *x));
    cache.a.push_back(activate(layer.activation, cache.z.back()));
    x = &cache.a.back();
  }
  return {cache.a.back(), std::move(cache)};
}

Backprop backprop_from_output_grad(const Mlp& model, const ForwardCache& cache,
                                   const Tensor2& out_grad) {
  const std::size_t depth = model.layers.size();
  if (cache.z.size() != depth || cache.a.size() != depth) {
    throw DimensionError("backprop: cache does not match model depth");
  }
  if (!out_grad.same_shape(cache.a.back())) {
    throw DimensionError("backprop: output gradient shape differs from output");
  }

  Backprop result;
  result.layers.resize(depth);

  // delta for the output layer
  Tensor2 delta = out_grad;
  const auto out_act = model.layers.back().activation;
  if (out_act != Activation::kSoftmax && out_act != Activation::kIdentity) {
    const Tensor2 d = activation_derivative(out_act, cache.z.back());
    for (std::size_t i = 0; i < delta.data.size(); ++i) delta.data[i] *= d.data[i];
  }

  for (std::size_t l = depth; l-- > 0;) {
    const auto& layer = model.layers[l];
    const Tensor2& prev = l == 0 ? cache.input : cache.a[l - 1];
    auto& g = result.layers[l];
    g.weights = Tensor2(layer.out(), layer.in());
    g.bias.assign(layer.out(), 0.0);
    for (std::size_t r = 0; r < delta.rows; ++r) {
      const auto dr = delta.row(r);
      const auto pr = prev.row(r);
      for (std::size_t j = 0; j < layer.out(); ++j) {
        g.bias[j] += dr[j];
        auto gw = g.weights.row(j);
        for (std::size_t k = 0; k < layer.in(); ++k) gw[k] += dr[j] * pr[k];
      }
    }

    // propagate: (delta W) elementwise act'(z^{l-1})
    Tensor2 back(delta.rows, layer.in());
    for (std::size_t r = 0; r < delta.rows; ++r) {
      const auto dr = delta.row(r);
      auto br = back.row(r);
      for (std::size_t j = 0; j < layer.out(); ++j) {
        const auto w = layer.weights.row(j);
        for (std::size_t k = 0; k < layer.in(); ++k) br[k] += dr[j] * w[k];
      }
    }
    if (l == 0) {
      result.input_grad = std::move(back);
    } else {
      const Tensor2 d =
          activation_derivative(model.layers[l - 1].activation, cache.z[l - 1]);
      for (std::size_t i = 0; i < back.data.size(); ++i) back.data[i] *= d.data[i];
      delta = std::move(back);
    }
  }
  return result;
}

namespace {

void check_finite(const LayerGradient& g) {
  for (double v : g.weights.data) {
    if (!std::isfinite(v)) throw NumericError("sgd_step: non-finite weight gradient");
  }
  for (double v : g.bias) {
    if (!std::isfinite(v)) throw NumericError("sgd_step: non-finite bias gradient");
  }
}

void check_shape(const DenseLayer& layer, const LayerGradient& g) {
  if (!g.weights.same_shape(layer.weights) || g.bias.size() != layer.bias.size()) {
    throw DimensionError("sgd_step: gradient shape differs from layer");
  }
}

void apply(DenseLayer& layer, const LayerGradient& g, double lr) {
  for (std::size_t i = 0; i < layer.weights.data.size(); ++i) {
    layer.weights.data[i] -= lr * g.weights.data[i];
  }
  for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] -= lr * g.bias[i];
}

}  // namespace

void sgd_step(Mlp& model, const Gradients& grads, double lr) {
  if (grads.size() != model.layers.size()) {
    throw DimensionError("sgd_step: gradient count differs from layer count");
  }
  for (std::size_t l = 0; l < grads.size(); ++l) {
    check_shape(model.layers[l], grads[l]);
    check_finite(grads[l]);
  }
  for (std::size_t l = 0; l < grads.size(); ++l) apply(model.layers[l], grads[l], lr);
}

double clip_to_norm(std::span<LayerGradient> grads, double max_norm) {
  if (max_norm < 0.0) throw DomainError("clip_to_norm: negative bound");
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g.weights.data) sq += v * v;
    for (double v : g.bias) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads) {
      for (double& v : g.weights.data) v *= f;
      for (double& v : g.bias) v *= f;
    }
  }
  return norm;
}

void sgd_step(DenseLayer& layer, const LayerGradient& grad, double lr) {
  check_shape(layer, grad);
  check_finite(grad);
  apply(layer, grad, lr);
}

LossResult loss_eval(LossKind kind, const Tensor2& prediction, const Tensor2& target) {
  if (!prediction.same_shape(target)) {
    throw DimensionError("loss_eval: prediction and target shapes differ");
  }
  LossResult res;
  res.grad = Tensor2(prediction.rows, prediction.cols);
  if (prediction.empty()) return res;

  if (kind == LossKind::kMse) {
    const double n = static_cast<double>(prediction.data.size());
    for (std::size_t i = 0; i < prediction.data.size(); ++i) {
      const double diff = prediction.data[i] - target.data[i];
      res.value += diff * diff;
      res.grad.data[i] = 2.0 * diff / n;
    }
    res.value /= n;
    return res;
  }

  const double m = static_cast<double>(prediction.rows);
  for (std::size_t r = 0; r < prediction.rows; ++r) {
    int hot = -1;
    for (std::size_t j = 0; j < prediction.cols; ++j) {
      const double t = target(r, j);
      if (t == 1.0) {
        if (hot >= 0) throw DomainError("loss_eval: target row has several hot entries");
        hot = static_cast<int>(j);
      } else if (t != 0.0) {
        throw DomainError("loss_eval: cross-entropy target is not one-hot");
      }
    }
    if (hot < 0) throw DomainError("loss_eval: cross-entropy target row has no hot entry");
    const double p = prediction(r, static_cast<std::size_t>(hot));
    res.value -= std::log(std::max(p, 1e-300));
    for (std::size_t j = 0; j < prediction.cols; ++j) {
      res.grad(r, j) = (prediction(r, j) - target(r, j)) / m;
    }
  }
  res.value /= m;
  return res;
}

Tensor2 one_hot(std::span<const int> labels, std::size_t classes) {
  Tensor2 out(labels.size(), classes);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw DomainError("one_hot: label outside [0, classes)");
    }
    out(r, static_cast<std::size_t>(labels[r])) = 1.0;
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor2& m) {
  std::vector<int> out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto row = m.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace mpdl::nn
