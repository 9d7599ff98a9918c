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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mpdl/nn.hpp"

namespace mpdl::central {

// Split classifier. Each party holds an affine slice of the first layer; C
// holds that layer's bias, the relu, and the upper layers ending in softmax.
//   z = x_A W_A^T + x_B W_B^T + b,   h = relu(z),   p = upper(h)
struct CentralHead {
  std::vector<double> bias;  // first hidden layer bias
  nn::Mlp upper;             // hidden -> ... -> classes (softmax)

  std::size_t hidden() const { return bias.size(); }
  std::size_t classes() const { return upper.output_width(); }
};

struct SplitCentralModel {
  nn::DenseLayer local_a;  // hidden x width_a, identity, bias fixed at zero
  nn::DenseLayer local_b;
  CentralHead head;

  void validate() const;
};

std::size_t central_hidden_width(std::size_t input_width, std::size_t classes);

/// Glorot init of one party's slice; the limit uses the full first-layer fan-in
/// so the split model draws from the same distribution as the joint network.
nn::DenseLayer make_local_layer(std::size_t width, std::size_t total_width,
                                std::size_t hidden, Rng& rng);

CentralHead make_head(std::size_t hidden, std::size_t classes, Rng& rng);

SplitCentralModel make_split_model(std::size_t width_a, std::size_t width_b,
                                   std::size_t classes, Rng& rng);

Tensor2 party_forward(const nn::DenseLayer& local, const Tensor2& x_perturbed);

struct CentralBatch {
  std::vector<std::uint64_t> ids;
  Tensor2 z_a;
  Tensor2 z_b;
  std::vector<int> labels;  // held at C
};

struct HeadGradients {
  std::vector<double> bias;
  nn::Gradients upper;
};

struct CentralStep {
  double loss = 0.0;
  HeadGradients grads;
  Tensor2 delta;  // first hidden layer error, sent identically to A and B
};

CentralStep central_forward_backward(const CentralHead& head, const CentralBatch& batch);

/// clip > 0 bounds the joint norm of the head's gradient (bias and upper layers).
void apply_head(CentralHead& head, HeadGradients grads, double lr, double clip = 0.0);

/// Weight gradient of a party slice: delta^T x (delta already carries 1/m).
nn::LayerGradient local_gradient(const nn::DenseLayer& local, const Tensor2& delta,
                                 const Tensor2& x_perturbed);

/// clip > 0 bounds the norm of the local weight gradient.
void party_backward(nn::DenseLayer& local, const Tensor2& delta, const Tensor2& x_perturbed,
                    double lr, double clip = 0.0);
/// As above; throws ProtocolError when delta belongs to another batch.
void party_backward(nn::DenseLayer& local, const Tensor2& delta, std::uint64_t delta_tag,
                    const Tensor2& x_perturbed, std::uint64_t batch_tag, double lr,
                    double clip = 0.0);

Tensor2 head_probabilities(const CentralHead& head, const Tensor2& z_a, const Tensor2& z_b);
std::vector<int> head_predict(const CentralHead& head, const Tensor2& z_a, const Tensor2& z_b);

std::vector<int> predict(const SplitCentralModel& model, const Tensor2& x_a, const Tensor2& x_b);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

double evaluate(const SplitCentralModel& model, const Tensor2& x_a, const Tensor2& x_b,
                std::span<const int> labels);

}  // namespace mpdl::central
