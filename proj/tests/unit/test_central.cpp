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

#include <gtest/gtest.h>

#include <cmath>

#include <numeric>

#include "mpdl/central.hpp"
#include "oracles.hpp"

using namespace mpdl;
using namespace mpdl::central;

namespace {

// joint network on concatenated features with block-concatenated weights
nn::Mlp monolithic(const SplitCentralModel& m) {
  nn::DenseLayer first;
  first.weights = Tensor2(m.head.hidden(), m.local_a.in() + m.local_b.in());
  for (std::size_t j = 0; j < m.head.hidden(); ++j) {
    for (std::size_t k = 0; k < m.local_a.in(); ++k) first.weights(j, k) = m.local_a.weights(j, k);
    for (std::size_t k = 0; k < m.local_b.in(); ++k)
      first.weights(j, m.local_a.in() + k) = m.local_b.weights(j, k);
  }
  first.bias = m.head.bias;
  first.activation = nn::Activation::kRelu;
  nn::Mlp out;
  out.layers.push_back(first);
  for (const auto& l : m.head.upper.layers) out.layers.push_back(l);
  return out;
}

// delta of the first hidden layer, written out by hand
Tensor2 hand_delta(const nn::Mlp& mono, const Tensor2& x, const std::vector<int>& y) {
  const auto& l0 = mono.layers[0];
  const auto& l1 = mono.layers[1];
  const std::size_t m = x.rows, h = l0.out(), c = l1.out();
  Tensor2 delta(m, h);
  for (std::size_t r = 0; r < m; ++r) {
    std::vector<double> z(h), a(h), logits(c);
    for (std::size_t j = 0; j < h; ++j) {
      z[j] = l0.bias[j];
      for (std::size_t k = 0; k < x.cols; ++k) z[j] += l0.weights(j, k) * x(r, k);
      a[j] = z[j] > 0 ? z[j] : 0;
    }
    double mx = -1e300;
    for (std::size_t o = 0; o < c; ++o) {
      logits[o] = l1.bias[o];
      for (std::size_t j = 0; j < h; ++j) logits[o] += l1.weights(o, j) * a[j];
      mx = std::max(mx, logits[o]);
    }
    double tot = 0;
    for (std::size_t o = 0; o < c; ++o) tot += std::exp(logits[o] - mx);
    for (std::size_t j = 0; j < h; ++j) {
      double s = 0;
      for (std::size_t o = 0; o < c; ++o) {
        const double p = std::exp(logits[o] - mx) / tot;
        s += ((p - (static_cast<int>(o) == y[r] ? 1.0 : 0.0)) / static_cast<double>(m)) * l1.weights(o, j);
      }
      delta(r, j) = z[j] > 0 ? s : 0.0;
    }
  }
  return delta;
}

struct Instance {
  SplitCentralModel model;
  Tensor2 xa, xb;
  std::vector<int> y;
};

Instance random_instance(Rng& rng, std::size_t m = 7) {
  Instance in;
  const std::size_t wa = 1 + uniform_below(rng, 5), wb = 1 + uniform_below(rng, 5);
  const std::size_t classes = 2 + uniform_below(rng, 3);
  in.model = make_split_model(wa, wb, classes, rng);
  for (double& b : in.model.head.bias) b = 0.2 * (uniform01(rng) - 0.3);
  in.xa = oracle::random_matrix(m, wa, rng, 0, 1);
  in.xb = oracle::random_matrix(m, wb, rng, 0, 1);
  for (std::size_t r = 0; r < m; ++r) in.y.push_back(static_cast<int>(uniform_below(rng, classes)));
  return in;
}

CentralBatch batch_of(const Instance& in) {
  return {{}, party_forward(in.model.local_a, in.xa), party_forward(in.model.local_b, in.xb), in.y};
}

}  // namespace

TEST(CentralForward, ZeroWeightsGiveZeroPartialSums) {
  nn::DenseLayer l{Tensor2(3, 2), std::vector<double>(3, 0.0), nn::Activation::kIdentity};
  auto rng = make_rng(101, "t");
  const Tensor2 z = party_forward(l, oracle::random_matrix(4, 2, rng, 0, 1));
  for (double v : z.data) EXPECT_EQ(v, 0.0);
}

TEST(CentralForward, SingleFeatureUnitWeight) {
  nn::DenseLayer l{Tensor2(1, 1, 1.0), {0.0}, nn::Activation::kIdentity};
  const Tensor2 x(3, 1, {0.1, 0.5, 0.9});
  EXPECT_EQ(party_forward(l, x), x);
}

TEST(CentralForward, PartialSumsAddUpToMonolithicPreactivation) {
  auto rng = make_rng(102, "t");
  for (int t = 0; t < 20; ++t) {
    auto in = random_instance(rng);
    const auto mono = monolithic(in.model);
    const Tensor2 x = hconcat(in.xa, in.xb);
    nn::DenseLayer no_bias = mono.layers[0];
    std::fill(no_bias.bias.begin(), no_bias.bias.end(), 0.0);
    const Tensor2 za = party_forward(in.model.local_a, in.xa);
    const Tensor2 zb = party_forward(in.model.local_b, in.xb);
    for (std::size_t r = 0; r < x.rows; ++r)
      for (std::size_t j = 0; j < in.model.head.hidden(); ++j) {
        double full = 0.0;
        for (std::size_t k = 0; k < x.cols; ++k) full += no_bias.weights(j, k) * x(r, k);
        EXPECT_NEAR(za(r, j) + zb(r, j), full, 1e-14);
      }
    EXPECT_EQ(predict(in.model, in.xa, in.xb), nn::argmax_rows(nn::mlp_forward(mono, x).first));
  }
}

TEST(CentralBackward, UntrainedLossNearLogTwo) {
  auto rng = make_rng(103, "t");
  auto model = make_split_model(3, 3, 2, rng);
  for (auto& l : model.head.upper.layers) std::fill(l.weights.data.begin(), l.weights.data.end(), 0.0);
  const Tensor2 xa = oracle::random_matrix(8, 3, rng, 0, 1), xb = oracle::random_matrix(8, 3, rng, 0, 1);
  CentralBatch b{{}, party_forward(model.local_a, xa), party_forward(model.local_b, xb),
                 {0, 1, 0, 1, 0, 1, 0, 1}};
  EXPECT_NEAR(central_forward_backward(model.head, b).loss, std::log(2.0), 0.1);
}

TEST(CentralBackward, DeltaMatchesHandOracle) {
  auto rng = make_rng(104, "t");
  for (int t = 0; t < 20; ++t) {
    auto in = random_instance(rng);
    const auto step = central_forward_backward(in.model.head, batch_of(in));
    const Tensor2 want = hand_delta(monolithic(in.model), hconcat(in.xa, in.xb), in.y);
    EXPECT_LE(oracle::max_abs_diff(step.delta, want), 1e-12);
  }
}

TEST(CentralBackward, PerfectPredictionGivesZeroDelta) {
  // saturated logits: softmax equals the one-hot target exactly in double
  SplitCentralModel m;
  m.local_a = {Tensor2(2, 1, {1.0, 0.0}), {0.0, 0.0}, nn::Activation::kIdentity};
  m.local_b = {Tensor2(2, 1, {0.0, 1.0}), {0.0, 0.0}, nn::Activation::kIdentity};
  m.head.bias = {0.0, 0.0};
  m.head.upper.layers.push_back(
      {Tensor2(2, 2, {1000.0, -1000.0, -1000.0, 1000.0}), {0.0, 0.0}, nn::Activation::kSoftmax});
  const Tensor2 xa(2, 1, {1.0, 0.0}), xb(2, 1, {0.0, 1.0});
  CentralBatch b{{}, party_forward(m.local_a, xa), party_forward(m.local_b, xb), {0, 1}};
  const auto step = central_forward_backward(m.head, b);
  for (double v : step.delta.data) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(step.loss, 0.0, 1e-12);
}

TEST(CentralBackward, UpdatesEqualMonolithicBlocks) {
  auto rng = make_rng(105, "t");
  for (int t = 0; t < 20; ++t) {
    auto in = random_instance(rng);
    auto mono = monolithic(in.model);
    const Tensor2 x = hconcat(in.xa, in.xb);
    auto [out, cache] = nn::mlp_forward(mono, x);
    const auto bp = nn::backprop_from_output_grad(
        mono, cache, nn::loss_eval(nn::LossKind::kCrossEntropy, out, nn::one_hot(in.y, out.cols)).grad);
    const auto step = central_forward_backward(in.model.head, batch_of(in));
    const auto ga = local_gradient(in.model.local_a, step.delta, in.xa);
    const auto gb = local_gradient(in.model.local_b, step.delta, in.xb);
    const std::size_t wa = in.xa.cols;
    for (std::size_t j = 0; j < in.model.head.hidden(); ++j) {
      for (std::size_t k = 0; k < wa; ++k) EXPECT_NEAR(ga.weights(j, k), bp.layers[0].weights(j, k), 1e-15);
      for (std::size_t k = 0; k < in.xb.cols; ++k)
        EXPECT_NEAR(gb.weights(j, k), bp.layers[0].weights(j, wa + k), 1e-15);
      EXPECT_NEAR(step.grads.bias[j], bp.layers[0].bias[j], 1e-15);
      EXPECT_EQ(ga.bias[j], 0.0);
    }
  }
}

TEST(CentralBackward, ZeroDeltaNoUpdate) {
  auto rng = make_rng(106, "t");
  auto in = random_instance(rng);
  const auto before = in.model.local_a;
  party_backward(in.model.local_a, Tensor2(in.xa.rows, in.model.head.hidden()), in.xa, 0.1);
  EXPECT_EQ(in.model.local_a.weights, before.weights);
}

TEST(CentralBackward, ClippedStepHasBoundedNorm) {
  auto rng = make_rng(107, "t");
  auto in = random_instance(rng);
  const auto step = central_forward_backward(in.model.head, batch_of(in));
  const auto g = local_gradient(in.model.local_a, step.delta, in.xa);
  double norm = 0.0;
  for (double v : g.weights.data) norm += v * v;
  norm = std::sqrt(norm);
  ASSERT_GT(norm, 0.0);
  const double bound = norm / 4.0;
  const auto before = in.model.local_a;
  party_backward(in.model.local_a, step.delta, in.xa, 1.0, bound);
  for (std::size_t i = 0; i < g.weights.data.size(); ++i) {
    EXPECT_NEAR(before.weights.data[i] - in.model.local_a.weights.data[i], g.weights.data[i] / 4.0, 1e-14);
  }
}

TEST(CentralBackward, BlockIndependence) {
  auto rng = make_rng(107, "t");
  auto in = random_instance(rng);
  const auto step = central_forward_backward(in.model.head, batch_of(in));
  const auto ga = local_gradient(in.model.local_a, step.delta, in.xa);
  // permuting B's columns (with its weights) leaves A's update for this delta alone
  Tensor2 xb_perm = in.xb;
  for (std::size_t r = 0; r < xb_perm.rows; ++r) std::reverse(xb_perm.row(r).begin(), xb_perm.row(r).end());
  (void)local_gradient(in.model.local_b, step.delta, xb_perm);
  EXPECT_EQ(local_gradient(in.model.local_a, step.delta, in.xa).weights, ga.weights);
}

TEST(CentralBackward, StaleDeltaRejected) {
  auto rng = make_rng(108, "t");
  auto in = random_instance(rng);
  const auto step = central_forward_backward(in.model.head, batch_of(in));
  EXPECT_THROW(party_backward(in.model.local_a, step.delta, 4, in.xa, 5, 0.1), ProtocolError);
  EXPECT_NO_THROW(party_backward(in.model.local_a, step.delta, 5, in.xa, 5, 0.1));
}

TEST(CentralEvaluate, SeparableToyReachesPerfectAccuracy) {
  auto rng = make_rng(109, "t");
  const std::size_t n = 40;
  Tensor2 xa(n, 1), xb(n, 1);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    xa(i, 0) = y[i] ? 0.9 : 0.1;
    xb(i, 0) = y[i] ? 0.8 : 0.2;
  }
  auto m = make_split_model(1, 1, 2, rng);
  for (int e = 0; e < 500; ++e) {
    CentralBatch b{{}, party_forward(m.local_a, xa), party_forward(m.local_b, xb), y};
    const auto step = central_forward_backward(m.head, b);
    apply_head(m.head, step.grads, 0.5);
    party_backward(m.local_a, step.delta, xa, 0.5);
    party_backward(m.local_b, step.delta, xb, 0.5);
  }
  EXPECT_EQ(evaluate(m, xa, xb, y), 1.0);
}

TEST(CentralEvaluate, RandomLabelsNearChance) {
  auto rng = make_rng(110, "t");
  const std::size_t n = 2000, classes = 4;
  auto m = make_split_model(3, 3, classes, rng);
  const Tensor2 xa = oracle::random_matrix(n, 3, rng, 0, 1), xb = oracle::random_matrix(n, 3, rng, 0, 1);
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(uniform_below(rng, classes));
  const double p = 1.0 / classes;
  const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
  EXPECT_NEAR(evaluate(m, xa, xb, y), p, 3 * sigma);
}

TEST(CentralEvaluate, InvariantUnderRowPermutation) {
  auto rng = make_rng(111, "t");
  auto in = random_instance(rng, 30);
  const double acc = evaluate(in.model, in.xa, in.xb, in.y);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  shuffle(perm, rng);
  std::vector<int> yp;
  for (auto i : perm) yp.push_back(in.y[i]);
  EXPECT_EQ(evaluate(in.model, gather_rows(in.xa, perm), gather_rows(in.xb, perm), yp), acc);
}

TEST(CentralModel, HiddenWidthAndValidation) {
  EXPECT_EQ(central_hidden_width(30, 2), 16u);
  auto rng = make_rng(112, "t");
  auto m = make_split_model(2, 3, 2, rng);
  EXPECT_NO_THROW(m.validate());
  m.head.bias.push_back(0.0);
  EXPECT_THROW(m.validate(), DimensionError);
}
