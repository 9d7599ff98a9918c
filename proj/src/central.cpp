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

#include "mpdl/central.hpp"

#include <cmath>

#include "mpdl/errors.hpp"

namespace mpdl::central {

void SplitCentralModel::validate() const {
  head.upper.validate();
  if (local_a.out() != head.hidden() || local_b.out() != head.hidden() ||
      head.upper.input_width() != head.hidden()) {
    throw DimensionError("split model: local slices and head disagree on hidden width");
  }
  if (head.upper.layers.back().activation != nn::Activation::kSoftmax) {
    throw DomainError("split model: head must end in softmax");
  }
}

std::size_t central_hidden_width(std::size_t input_width, std::size_t classes) {
  return nn::hidden_width(input_width, classes);
}

nn::DenseLayer make_local_layer(std::size_t width, std::size_t total_width, std::size_t hidden,
                                Rng& rng) {
  nn::DenseLayer layer;
  layer.weights = Tensor2(hidden, width);
  layer.bias.assign(hidden, 0.0);
  layer.activation = nn::Activation::kIdentity;
  const double limit = std::sqrt(6.0 / static_cast<double>(total_width + hidden));
  for (double& w : layer.weights.data) w = (2.0 * uniform01(rng) - 1.0) * limit;
  return layer;
}

CentralHead make_head(std::size_t hidden, std::size_t classes, Rng& rng) {
  if (classes < 2) throw DomainError("central head needs at least two classes");
  CentralHead head;
  head.bias.assign(hidden, 0.0);
  const std::size_t widths[] = {hidden, classes};
  head.upper = nn::make_mlp(widths, nn::Activation::kRelu, nn::Activation::kSoftmax, rng);
  return head;
}

SplitCentralModel make_split_model(std::size_t width_a, std::size_t width_b,
                                   std::size_t classes, Rng& rng) {
  const std::size_t hidden = central_hidden_width(width_a + width_b, classes);
  SplitCentralModel m;
  m.local_a = make_local_layer(width_a, width_a + width_b, hidden, rng);
  m.local_b = make_local_layer(width_b, width_a + width_b, hidden, rng);
  m.head = make_head(hidden, classes, rng);
  return m;
}

Tensor2 party_forward(const nn::DenseLayer& local, const Tensor2& x_perturbed) {
  if (x_perturbed.cols != local.in()) throw DimensionError("party_forward: width mismatch");
  return nn::preactivation(local, x_perturbed);
}

namespace {

Tensor2 joint_preactivation(const CentralHead& head, const Tensor2& z_a, const Tensor2& z_b) {
  if (!z_a.same_shape(z_b) || z_a.cols != head.hidden()) {
    throw DimensionError("partial sums disagree in shape");
  }
  Tensor2 z(z_a.rows, z_a.cols);
  for (std::size_t r = 0; r < z.rows; ++r) {
    for (std::size_t c = 0; c < z.cols; ++c) z(r, c) = z_a(r, c) + z_b(r, c) + head.bias[c];
  }
  return z;
}

}  // namespace

CentralStep central_forward_backward(const CentralHead& head, const CentralBatch& batch) {
  if (batch.labels.size() != batch.z_a.rows) throw DomainError("labels missing for batch rows");
  if (batch.z_a.rows == 0) throw DomainError("empty central batch");
  const Tensor2 z = joint_preactivation(head, batch.z_a, batch.z_b);
  const Tensor2 h = nn::activate(nn::Activation::kRelu, z);
  auto [probs, cache] = nn::mlp_forward(head.upper, h);
  const auto loss =
      nn::loss_eval(nn::LossKind::kCrossEntropy, probs, nn::one_hot(batch.labels, head.classes()));
  auto bp = nn::backprop_from_output_grad(head.upper, cache, loss.grad);

  CentralStep step;
  step.loss = loss.value;
  step.delta = nn::activation_derivative(nn::Activation::kRelu, z);
  for (std::size_t i = 0; i < step.delta.data.size(); ++i) {
    step.delta.data[i] *= bp.input_grad.data[i];
  }
  step.grads.upper = std::move(bp.layers);
  step.grads.bias.assign(head.hidden(), 0.0);
  for (std::size_t r = 0; r < step.delta.rows; ++r) {
    for (std::size_t c = 0; c < step.delta.cols; ++c) step.grads.bias[c] += step.delta(r, c);
  }
  return step;
}

void apply_head(CentralHead& head, HeadGradients grads, double lr, double clip) {
  if (grads.bias.size() != head.bias.size()) throw DimensionError("bias gradient shape");
  for (double g : grads.bias) {
    if (!std::isfinite(g)) throw NumericError("non-finite bias gradient");
  }
  if (clip > 0.0) {
    // the bias rides along as an extra bias-only block
    grads.upper.push_back({Tensor2(0, 0), grads.bias});
    nn::clip_to_norm(grads.upper, clip);
    grads.bias = std::move(grads.upper.back().bias);
    grads.upper.pop_back();
  }
  nn::sgd_step(head.upper, grads.upper, lr);
  for (std::size_t i = 0; i < head.bias.size(); ++i) head.bias[i] -= lr * grads.bias[i];
}

nn::LayerGradient local_gradient(const nn::DenseLayer& local, const Tensor2& delta,
                                 const Tensor2& x_perturbed) {
  if (delta.rows != x_perturbed.rows || delta.cols != local.out() ||
      x_perturbed.cols != local.in()) {
    throw DimensionError("party_backward: delta does not match the forward batch");
  }
  nn::LayerGradient g{Tensor2(local.out(), local.in()), std::vector<double>(local.out(), 0.0)};
  for (std::size_t r = 0; r < delta.rows; ++r) {
    for (std::size_t j = 0; j < delta.cols; ++j) {
      const double d = delta(r, j);
      if (d == 0.0) continue;
      for (std::size_t k = 0; k < x_perturbed.cols; ++k) g.weights(j, k) += d * x_perturbed(r, k);
    }
  }
  return g;  // bias lives at C
}

void party_backward(nn::DenseLayer& local, const Tensor2& delta, const Tensor2& x_perturbed,
                    double lr, double clip) {
  auto g = local_gradient(local, delta, x_perturbed);
  nn::clip_to_norm(std::span<nn::LayerGradient>(&g, 1), clip);
  nn::sgd_step(local, g, lr);
}

void party_backward(nn::DenseLayer& local, const Tensor2& delta, std::uint64_t delta_tag,
                    const Tensor2& x_perturbed, std::uint64_t batch_tag, double lr,
                    double clip) {
  if (delta_tag != batch_tag) {
    throw ProtocolError("stale delta: tag " + std::to_string(delta_tag) + " for batch " +
                        std::to_string(batch_tag));
  }
  party_backward(local, delta, x_perturbed, lr, clip);
}

Tensor2 head_probabilities(const CentralHead& head, const Tensor2& z_a, const Tensor2& z_b) {
  const Tensor2 h = nn::activate(nn::Activation::kRelu, joint_preactivation(head, z_a, z_b));
  return nn::mlp_forward(head.upper, h).first;
}

std::vector<int> head_predict(const CentralHead& head, const Tensor2& z_a, const Tensor2& z_b) {
  return nn::argmax_rows(head_probabilities(head, z_a, z_b));
}

std::vector<int> predict(const SplitCentralModel& model, const Tensor2& x_a, const Tensor2& x_b) {
  return head_predict(model.head, party_forward(model.local_a, x_a),
                      party_forward(model.local_b, x_b));
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw DimensionError("accuracy: length mismatch");
  if (truth.empty()) throw DomainError("accuracy of an empty batch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double evaluate(const SplitCentralModel& model, const Tensor2& x_a, const Tensor2& x_b,
                std::span<const int> labels) {
  return accuracy(predict(model, x_a, x_b), labels);
}

}  // namespace mpdl::central
