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

// Dense feed-forward networks: forward pass, backpropagation from an
// externally supplied output gradient, and plain SGD.
//
// Gradient convention: every loss in this library is a batch mean, so the
// output gradients handed to backprop already carry the 1/batch factor and
// backprop sums over rows. For a softmax output layer the supplied gradient is
// taken with respect to the logits (p - y for cross entropy).

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "mpdl/rng.hpp"
#include "mpdl/tensor.hpp"

namespace mpdl::nn {

enum class Activation { kIdentity, kRelu, kSigmoid, kSoftmax };

struct DenseLayer {
  Tensor2 weights;            // out x in
  std::vector<double> bias;   // out
  Activation activation = Activation::kIdentity;

  std::size_t in() const { return weights.cols; }
  std::size_t out() const { return weights.rows; }
};

struct Mlp {
  std::vector<DenseLayer> layers;

  std::size_t input_width() const { return layers.front().in(); }
  std::size_t output_width() const { return layers.back().out(); }
  /// Throws DimensionError/DomainError if the layer chain is malformed.
  void validate() const;
};

struct ForwardCache {
  Tensor2 input;
  std::vector<Tensor2> z;  // weighted inputs per layer
  std::vector<Tensor2> a;  // activations per layer
};

struct LayerGradient {
  Tensor2 weights;
  std::vector<double> bias;
};

using Gradients = std::vector<LayerGradient>;

struct Backprop {
  Gradients layers;
  Tensor2 input_grad;  // dL/d(input batch)
};

/// Glorot-uniform weights, zero bias.
DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng);

/// widths = {in, h1, ..., out}; hidden layers use hidden_act.
Mlp make_mlp(std::span<const std::size_t> widths, Activation hidden_act,
             Activation output_act, Rng& rng);

/// ceil((n_in + n_out) / 2), the hidden width used for dual and central nets.
constexpr std::size_t hidden_width(std::size_t n_in, std::size_t n_out) {
  return (n_in + n_out + 1) / 2;
}

/// x W^T + b
Tensor2 preactivation(const DenseLayer& layer, const Tensor2& x);
Tensor2 activate(Activation act, const Tensor2& z);
/// Elementwise activation derivative at z; not defined for softmax.
Tensor2 activation_derivative(Activation act, const Tensor2& z);

std::pair<Tensor2, ForwardCache> mlp_forward(const Mlp& model, const Tensor2& batch);

/// Delta recursion delta^l = act'(z^l) * (delta^{l+1} W^{l+1}); returns the
/// per-layer weight and bias gradients summed over the batch. The model is not
/// touched.
Backprop backprop_from_output_grad(const Mlp& model, const ForwardCache& cache,
                                   const Tensor2& out_grad);

/// w <- w - lr * g. Throws NumericError on non-finite gradients before
/// modifying anything.
void sgd_step(Mlp& model, const Gradients& grads, double lr);
void sgd_step(DenseLayer& layer, const LayerGradient& grad, double lr);

/// Rescales the gradients so their joint L2 norm is at most max_norm (0
/// disables). Returns the norm before clipping.
double clip_to_norm(std::span<LayerGradient> grads, double max_norm);

enum class LossKind { kMse, kCrossEntropy };

struct LossResult {
  double value = 0.0;
  Tensor2 grad;
};

/// mse: mean over all entries of (p - t)^2.
/// cross_entropy: mean over rows of -sum_j t_j log p_j; targets one-hot,
/// predictions softmax outputs, grad w.r.t. logits.
LossResult loss_eval(LossKind kind, const Tensor2& prediction, const Tensor2& target);

/// Row-wise softmax with max subtraction.
Tensor2 softmax_rows(const Tensor2& logits);

/// One-hot matrix for class indices in [0, classes).
Tensor2 one_hot(std::span<const int> labels, std::size_t classes);

/// Index of the largest entry in each row.
std::vector<int> argmax_rows(const Tensor2& m);

}  // namespace mpdl::nn
