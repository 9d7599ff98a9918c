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

#include "dual_fixture.hpp"
#include "mpdl/dual.hpp"
#include "oracles.hpp"

using namespace mpdl;
using namespace mpdl::dual;
using transport::ActorId;
using transport::MessageKind;

TEST(DualModel, ZeroWeightsOutputBiases) {
  auto rng = make_rng(81, "t");
  auto m = make_dual_model(3, 4, rng);
  for (auto& l : m.layers) {
    for (double& w : l.weights.data) w = 0.0;
    for (std::size_t j = 0; j < l.bias.size(); ++j) l.bias[j] = 0.1 * static_cast<double>(j + 1);
  }
  const Tensor2 out = dual_infer(m, oracle::random_matrix(5, 3, rng));
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(out(r, j), 0.1 * static_cast<double>(j + 1));
}

TEST(DualModel, OutputWidthIsPartnerWidth) {
  auto rng = make_rng(82, "t");
  for (auto [wa, wb] : {std::pair{15, 15}, std::pair{504, 280}, std::pair{3, 9}}) {
    const auto pair = make_dual_pair(wa, wb, 0.01, 0.01, rng);
    EXPECT_EQ(pair.theta_ab.output_width(), static_cast<std::size_t>(wb));
    EXPECT_EQ(pair.theta_ba.output_width(), static_cast<std::size_t>(wa));
    EXPECT_NO_THROW(pair.validate(wa, wb));
    EXPECT_THROW(pair.validate(wb + 1, wa), DimensionError);
  }
}

TEST(DualModel, LearnsExactLinearMap) {
  const auto task = synthetic::make_linear_task(400, 4, 3, 0.0, 83);
  const auto part = partition_features(task.full.features, task.assignment);
  auto rng = make_rng(83, "t");
  auto f = make_dual_model(4, 3, rng);
  std::vector<std::size_t> idx(400);
  for (std::size_t i = 0; i < 400; ++i) idx[i] = i;
  for (int epoch = 0; epoch < 400; ++epoch) {
    shuffle(idx, rng);
    for (std::size_t s = 0; s < 400; s += 32) {
      std::vector<std::size_t> b(idx.begin() + s, idx.begin() + std::min<std::size_t>(400, s + 32));
      regression_step(f, gather_rows(part.a, b), gather_rows(part.b, b), 0.1);
    }
  }
  const auto mse = nn::loss_eval(nn::LossKind::kMse, dual_infer(f, part.a), part.b).value;
  EXPECT_LT(mse, 1e-3);
}

TEST(DualLoss, Examples) {
  const std::vector<double> a{0.3, -1.2}, b{2.0, 0.5};
  EXPECT_EQ(dual_loss(a, a, b, b), 0.0);
  const std::vector<double> z{0.0}, one{1.0};
  EXPECT_EQ(dual_loss(z, z, one, z), 1.0);
}

TEST(DualLoss, SwapSymmetry) {
  auto rng = make_rng(84, "t");
  for (int t = 0; t < 20; ++t) {
    std::vector<double> p(6), q(6), r(6), s(6);
    for (std::size_t i = 0; i < 6; ++i) {
      p[i] = uniform01(rng) * 4 - 2;
      q[i] = uniform01(rng) * 4 - 2;
      r[i] = uniform01(rng) * 4 - 2;
      s[i] = uniform01(rng) * 4 - 2;
    }
    // swapping the roles of A and B flips the residual's sign only
    EXPECT_NEAR(dual_loss(p, q, r, s), dual_loss(s, r, q, p), 1e-12 * (1 + dual_loss(p, q, r, s)));
  }
}

TEST(DualLoss, Errors) {
  const std::vector<double> a{1.0}, b{1.0, 2.0}, inf{std::numeric_limits<double>::infinity()};
  EXPECT_THROW(dual_loss(a, a, a, b), DimensionError);
  EXPECT_THROW(dual_loss(inf, a, a, a), NumericError);
}

TEST(DualGrad, ZeroLambdaReturnsAlignGradExactly) {
  auto rng = make_rng(85, "t");
  const Tensor2 g = oracle::random_matrix(4, 3, rng), al = oracle::random_matrix(4, 3, rng);
  const std::vector<double> lh{1, 2, 3, 4}, lx{0, 0, 0, 0}, cr{0.5, 0.5, 0.5, 0.5};
  EXPECT_EQ(dual_output_grad(g, lh, lx, cr, al, 0.0), al);
  EXPECT_EQ(dual_output_grad(g, lh, lx, cr, al, 0.0, true), al);
}

TEST(DualGrad, ZeroResidualReturnsAlignGradExactly) {
  auto rng = make_rng(86, "t");
  const Tensor2 g = oracle::random_matrix(3, 2, rng), al = oracle::random_matrix(3, 2, rng);
  const std::vector<double> lh{1, 2, 3}, lx{1, 2, 3}, cr{0, 0, 0};
  EXPECT_EQ(dual_output_grad(g, lh, lx, cr, al, 0.3), al);
}

TEST(DualGrad, ExactFormMatchesCompositeLossFiniteDifferences) {
  auto rng = make_rng(87, "t");
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + uniform_below(rng, 6), d = 1 + uniform_below(rng, 4);
    const density::KdeModel kde(oracle::random_matrix(15, d, rng, 0, 1));
    const Tensor2 x = oracle::random_matrix(m, d, rng, 0, 1);
    const Tensor2 xhat = oracle::random_matrix(m, d, rng, 0, 1);
    std::vector<double> lpa_x(m), lpa_hat(m);
    for (std::size_t i = 0; i < m; ++i) {
      lpa_x[i] = uniform01(rng) * 2 - 1;
      lpa_hat[i] = uniform01(rng) * 2 - 1;
    }
    const double lambda = 0.05 + uniform01(rng);
    auto composite = [&](const Tensor2& xh) {
      return nn::loss_eval(nn::LossKind::kMse, xh, x).value +
             lambda * dual_loss(lpa_x, lpa_hat, density::log_density_rows(kde, xh),
                                density::log_density_rows(kde, x));
    };
    std::vector<double> cross(m);
    for (std::size_t i = 0; i < m; ++i) cross[i] = lpa_x[i] - lpa_hat[i];
    const Tensor2 grad = dual_output_grad(
        density::grad_log_density_rows(kde, xhat), density::log_density_rows(kde, xhat),
        density::log_density_rows(kde, x), cross,
        nn::loss_eval(nn::LossKind::kMse, xhat, x).grad, lambda, true);
    for (std::size_t k = 0; k < xhat.data.size(); ++k) {
      auto f = [&](double v) {
        Tensor2 y = xhat;
        y.data[k] = v;
        return composite(y);
      };
      EXPECT_LT(oracle::rel_err(oracle::central_difference(f, xhat.data[k], 1e-6), grad.data[k], 1e-7),
                1e-4);
    }
  }
}

TEST(DualRound, EightMessagesInAlgorithmOrder) {
  fixture::DualSetup s(40, 3, 2, 88, 0.01, true);
  transport::Transport t;
  const std::vector<EntityId> batch(s.ids.begin(), s.ids.begin() + 8);
  const auto r = run_dual_round(s.a, s.b, batch, t, {}, 17);
  ASSERT_EQ(r.messages.size(), kMessagesPerRound);
  ASSERT_EQ(t.transcript().size(), kMessagesPerRound);
  const std::vector<std::tuple<ActorId, ActorId, MessageKind>> want{
      {ActorId::kA, ActorId::kB, MessageKind::kInferredBatch},
      {ActorId::kB, ActorId::kA, MessageKind::kInferredBatch},
      {ActorId::kB, ActorId::kA, MessageKind::kGradTerm},
      {ActorId::kB, ActorId::kA, MessageKind::kCipherBlock},
      {ActorId::kA, ActorId::kB, MessageKind::kGradTerm},
      {ActorId::kA, ActorId::kB, MessageKind::kCipherBlock},
      {ActorId::kA, ActorId::kB, MessageKind::kCipherBlock},
      {ActorId::kB, ActorId::kA, MessageKind::kCipherBlock},
  };
  for (std::size_t i = 0; i < want.size(); ++i) {
    const auto& m = t.transcript().messages()[i];
    EXPECT_EQ(m.sender, std::get<0>(want[i])) << i;
    EXPECT_EQ(m.receiver, std::get<1>(want[i])) << i;
    EXPECT_EQ(m.kind, std::get<2>(want[i])) << i;
    EXPECT_EQ(m.batch_tag, std::optional<std::uint64_t>(17));
  }
}

TEST(DualRound, EncryptedMatchesShadow) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    fixture::DualSetup enc(48, 4, 3, 90 + seed, 0.5, true);
    fixture::DualSetup plain(48, 4, 3, 90 + seed, 0.5, false);
    transport::Transport t1, t2;
    const std::vector<EntityId> batch(enc.ids.begin(), enc.ids.begin() + 16);
    DualConfig c;
    run_dual_round(enc.a, enc.b, batch, t1, c, 0);
    c.encrypt = false;
    run_dual_round(plain.a, plain.b, batch, t2, c, 0);
    EXPECT_LE(fixture::max_param_diff(enc.a.model, plain.a.model), 0x1p-35);
    EXPECT_LE(fixture::max_param_diff(enc.b.model, plain.b.model), 0x1p-35);
  }
}

TEST(DualRound, ZeroLambdaIsTwoIndependentRegressions) {
  fixture::DualSetup s(64, 5, 4, 95, 0.0, true);
  nn::Mlp f = s.a.model, g = s.b.model;
  transport::Transport t;
  DualConfig c;
  c.grad_clip = 0.0;
  c.param_clip = 0.0;
  std::uint64_t tag = 0;
  run_dual_training(s.a, s.b, s.ids, 3, 95, t, c, tag);
  for (std::size_t e = 0; e < 3; ++e) {
    const auto order = epoch_order(s.ids, 95, e);
    for (std::size_t st = 0; st < order.size(); st += c.batch_size) {
      const std::span<const EntityId> b(order.data() + st, std::min(c.batch_size, order.size() - st));
      const Tensor2 xa = s.data_a->rows_for(b), xb = s.data_b->rows_for(b);
      regression_step(f, xa, xb, c.lr);
      regression_step(g, xb, xa, c.lr);
    }
  }
  EXPECT_EQ(fixture::max_param_diff(f, s.a.model), 0.0);
  EXPECT_EQ(fixture::max_param_diff(g, s.b.model), 0.0);
}

TEST(DualRound, BoundaryPredicatesHold) {
  fixture::DualSetup s(60, 3, 3, 96, 0.1, true, 2.0);
  transport::Transport t;
  std::uint64_t tag = 0;
  run_dual_training(s.a, s.b, s.ids, 2, 96, t, {}, tag);
  const auto key_a = s.a.keys->pub.key_id, key_b = s.b.keys->pub.key_id;
  transport::Predicate keys{"ciphertexts only under the two party keys", [&](const auto& m) {
                              std::optional<std::string> why;
                              if (m.kind == MessageKind::kCipherBlock) {
                                const auto k = transport::decode_cipher_block(m.payload).key_id;
                                if (k != key_a && k != key_b) why = "unknown key";
                              }
                              return why;
                            }};
  const std::vector<transport::Predicate> preds{
      transport::forbid_rows("B rows never reach A", ActorId::kA, s.data_b->features()),
      transport::forbid_rows("A rows never reach B", ActorId::kB, s.data_a->features()),
      transport::forbid_values("B values never reach A", ActorId::kA, s.data_b->features().data),
      transport::forbid_values("A values never reach B", ActorId::kB, s.data_a->features().data),
      transport::allowed_kinds("nothing reaches C", ActorId::kC, {}),
      keys,
  };
  const auto rep = transport::transcript_assert(t.transcript(), preds);
  EXPECT_TRUE(rep.passed()) << (rep.passed() ? "" : rep.violations[0].predicate);
  EXPECT_EQ(rep.messages_checked, 2 * 2 * kMessagesPerRound);
}

TEST(DualRound, HeavyNoiseStaysInEncodingBand) {
  // Laplace scale 100 on [0,1] features
  fixture::DualSetup s(64, 4, 4, 98, 0.5, true, 0.02);
  transport::Transport t;
  std::uint64_t tag = 0;
  DualConfig c;
  const nn::Mlp before = s.a.model;
  EXPECT_NO_THROW(run_dual_training(s.a, s.b, s.ids, 10, 98, t, c, tag));
  // each step moves the parameters by at most lr * param_clip
  const double steps = 10.0 * 2.0;
  double sq = 0.0;
  for (std::size_t l = 0; l < before.layers.size(); ++l) {
    for (std::size_t k = 0; k < before.layers[l].weights.data.size(); ++k) {
      const double d = before.layers[l].weights.data[k] - s.a.model.layers[l].weights.data[k];
      sq += d * d;
    }
    for (std::size_t k = 0; k < before.layers[l].bias.size(); ++k) {
      const double d = before.layers[l].bias[k] - s.a.model.layers[l].bias[k];
      sq += d * d;
    }
  }
  EXPECT_LE(std::sqrt(sq), steps * c.lr * c.param_clip * (1 + 1e-12));
}

TEST(DualRound, RejectsMisconfiguredParties) {
  fixture::DualSetup s(20, 2, 2, 97, 0.01, false);
  transport::Transport t;
  const std::vector<EntityId> batch(s.ids.begin(), s.ids.begin() + 4);
  EXPECT_THROW(run_dual_round(s.a, s.b, batch, t, {}, 0), CryptoError);  // no keys
  EXPECT_THROW(run_dual_round(s.b, s.a, batch, t, {.encrypt = false}, 0), ProtocolError);
  EXPECT_THROW(run_dual_round(s.a, s.b, {}, t, {.encrypt = false}, 0), DomainError);
}
