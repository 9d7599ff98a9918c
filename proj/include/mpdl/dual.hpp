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
#include <optional>
#include <span>
#include <vector>

#include "mpdl/density.hpp"
#include "mpdl/dp.hpp"
#include "mpdl/nn.hpp"
#include "mpdl/paillier.hpp"
#include "mpdl/transport.hpp"

namespace mpdl::dual {

struct DualModelPair {
  nn::Mlp theta_ab;  // f: A features -> B features
  nn::Mlp theta_ba;  // g: B features -> A features
  double lambda_a = 0.01;
  double lambda_b = 0.01;

  void validate(std::size_t width_a, std::size_t width_b) const;
};

/// One relu hidden layer of ceil((in+out)/2) units, identity output.
nn::Mlp make_dual_model(std::size_t in, std::size_t out, Rng& rng);

DualModelPair make_dual_pair(std::size_t width_a, std::size_t width_b, double lambda_a,
                             double lambda_b, Rng& rng);

Tensor2 dual_infer(const nn::Mlp& model, const Tensor2& x);

/// Batch mean of (logp_xA - logp_xhatA + logp_xhatB - logp_xB)^2.
double dual_loss(std::span<const double> logp_xA, std::span<const double> logp_xhatA,
                 std::span<const double> logp_xhatB, std::span<const double> logp_xB);

/// Output-layer gradient of the weighted loss w.r.t. an inferred batch x_hat
/// scored by the partner's density P:
///   align_grad + c*lambda/m * grad_logp_xhat_i * ((logp_xhat_i - logp_x_i) + cross_i)
/// cross_i is the other direction's residual, e.g. logP_A(x^A) - logP_A(xhat^A)
/// for f. c = 1 follows the published gradient, c = 2 (exact) is the true
/// derivative of the squared residual.
Tensor2 dual_output_grad(const Tensor2& grad_logp_xhat, std::span<const double> logp_xhat,
                         std::span<const double> logp_x, std::span<const double> cross,
                         const Tensor2& align_grad, double lambda, bool exact = false);

struct DualConfig {
  double lr = 0.1;
  std::size_t batch_size = 32;
  bool encrypt = true;  // false runs the plaintext shadow (test/audit only)
  bool exact_duality_grad = false;
  int scale_bits = he::kDefaultScaleBits;
  /// Each row of a model's total output gradient is clipped to norm
  /// grad_clip / m after the cross terms are combined; 0 disables.
  double grad_clip = 1.0;
  /// Joint L2 bound on each model's parameter gradient, applied by its owner
  /// before the step; 0 disables.
  double param_clip = 5.0;
};

// State owned by one party. A owns theta_AB, B owns theta_BA.
struct DualParty {
  transport::ActorId self = transport::ActorId::kA;
  nn::Mlp model;
  double lambda = 0.01;
  const dp::PerturbedDataset* data = nullptr;  // own perturbed features
  const density::KdeModel* kde = nullptr;      // fitted on own perturbed partition
  std::optional<he::KeyPair> keys;
  std::optional<he::PublicKey> peer_key;
  Rng rng{0};  // encryption randomness
};

// Plaintext values of one round, kept for audits and tests.
struct DualShadow {
  Tensor2 xhat_b, xhat_a;
  std::vector<double> logp_b_xhat, logp_b_x, logp_a_xhat, logp_a_x;
  Tensor2 out_grad_f, out_grad_g;  // total output gradients applied
};

struct DualRoundTranscript {
  std::vector<transport::ProtocolMessage> messages;  // delivery order
  double align_loss_ab = 0.0;  // MSE of f, measured at B
  double align_loss_ba = 0.0;  // MSE of g, measured at A
  std::optional<DualShadow> shadow;
};

inline constexpr std::size_t kMessagesPerRound = 8;

DualRoundTranscript run_dual_round(DualParty& a, DualParty& b, std::span<const EntityId> batch,
                                   transport::Transport& transport, const DualConfig& config,
                                   std::uint64_t batch_tag, bool keep_shadow = false);

/// Same permutation on both sides: derived from the shared seed and the epoch.
std::vector<EntityId> epoch_order(std::span<const EntityId> ids, std::uint64_t seed,
                                  std::size_t epoch);

struct DualEpochStats {
  double align_loss_ab = 0.0;
  double align_loss_ba = 0.0;
};

std::vector<DualEpochStats> run_dual_training(DualParty& a, DualParty& b,
                                              std::span<const EntityId> co_ids,
                                              std::size_t epochs, std::uint64_t seed,
                                              transport::Transport& transport,
                                              const DualConfig& config,
                                              std::uint64_t& batch_counter);

/// One plain supervised MSE step; reference for the lambda = 0 case.
double regression_step(nn::Mlp& model, const Tensor2& x, const Tensor2& target, double lr);

}  // namespace mpdl::dual
