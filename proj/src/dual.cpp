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

#include "mpdl/dual.hpp"

#include <cmath>
#include <string>

#include "mpdl/errors.hpp"

namespace mpdl::dual {

using transport::ActorId;
using transport::MessageKind;

namespace {

// Plaintext multipliers get extra fractional bits so the product's rounding
// error stays well below the ciphertext's own quantization.
constexpr int kMultiplierExtraBits = 24;

std::vector<double> subtract(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

// -c*lambda/m * grad_logp rows, the plaintext factor of the cross term.
Tensor2 cross_multiplier(const Tensor2& grad_logp, double lambda, bool exact) {
  const double k = -(exact ? 2.0 : 1.0) * lambda / static_cast<double>(grad_logp.rows);
  Tensor2 out = grad_logp;
  for (double& v : out.data) v *= k;
  return out;
}

transport::Bytes encrypt_column(const DualParty& p, std::span<const double> values,
                                const DualConfig& cfg, Rng& rng) {
  transport::CipherBlock block;
  const auto& pk = p.keys->pub;
  block.key_id = pk.key_id;
  block.scale_bits = cfg.scale_bits;
  block.rows = static_cast<std::uint32_t>(values.size());
  block.cols = 1;
  for (double v : values) {
    block.values.push_back(he::encrypt(pk, he::encode(v, cfg.scale_bits, pk.n), rng).value);
  }
  return transport::encode_cipher_block(block);
}

// Elementwise [[d_i]] * k_ij under the peer's key.
transport::Bytes scale_ciphertexts(const he::PublicKey& pk, const transport::CipherBlock& diff,
                                   const Tensor2& k, int scale_bits) {
  if (diff.key_id != pk.key_id) throw CryptoError("ciphertext is not under the peer key");
  if (diff.rows != k.rows || diff.cols != 1) throw DimensionError("cipher block shape mismatch");
  transport::CipherBlock out;
  out.key_id = pk.key_id;
  out.scale_bits = diff.scale_bits + scale_bits;
  out.rows = static_cast<std::uint32_t>(k.rows);
  out.cols = static_cast<std::uint32_t>(k.cols);
  for (std::size_t i = 0; i < k.rows; ++i) {
    const he::Ciphertext c{diff.values[i]};
    for (std::size_t j = 0; j < k.cols; ++j) {
      out.values.push_back(he::mul_plain(pk, c, he::encode(k(i, j), scale_bits, pk.n)).value);
    }
  }
  return transport::encode_cipher_block(out);
}

Tensor2 decrypt_block(const he::KeyPair& kp, const transport::CipherBlock& block) {
  if (block.key_id != kp.pub.key_id) throw CryptoError("cipher block under a foreign key");
  Tensor2 out(block.rows, block.cols);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = he::decode(he::decrypt(kp, he::Ciphertext{block.values[i]}),
                             block.scale_bits, kp.pub.n);
  }
  return out;
}

Tensor2 elementwise_scale(const Tensor2& k, std::span<const double> d) {
  Tensor2 out = k;
  for (std::size_t i = 0; i < k.rows; ++i) {
    for (double& v : out.row(i)) v *= d[i];
  }
  return out;
}

void add_into(Tensor2& acc, const Tensor2& x) {
  if (!acc.same_shape(x)) throw DimensionError("gradient term shape mismatch");
  for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += x.data[i];
}

// Rows of the output gradient are rescaled to norm <= limit. The density
// term grows without bound away from the support, so a single outlying
// inference can otherwise blow up both models.
void clip_rows(Tensor2& g, double limit) {
  if (!(limit > 0.0)) return;
  for (std::size_t i = 0; i < g.rows; ++i) {
    auto r = g.row(i);
    double sq = 0.0;
    for (double v : r) sq += v * v;
    if (sq <= limit * limit) continue;
    const double k = limit / std::sqrt(sq);
    for (double& v : r) v *= k;
  }
}

void check_party(const DualParty& p, const DualConfig& cfg) {
  if (!p.data || !p.kde) throw DomainError("dual party lacks data or density model");
  if (cfg.encrypt && (!p.keys || !p.peer_key)) {
    throw CryptoError("encrypted dual round needs both key pairs exchanged");
  }
}

}  // namespace

void DualModelPair::validate(std::size_t width_a, std::size_t width_b) const {
  theta_ab.validate();
  theta_ba.validate();
  if (theta_ab.input_width() != width_a || theta_ab.output_width() != width_b ||
      theta_ba.input_width() != width_b || theta_ba.output_width() != width_a) {
    throw DimensionError("dual pair widths do not match the party feature widths");
  }
  if (!(lambda_a >= 0.0) || !(lambda_b >= 0.0)) throw DomainError("lambda must be >= 0");
}

nn::Mlp make_dual_model(std::size_t in, std::size_t out, Rng& rng) {
  const std::size_t widths[] = {in, nn::hidden_width(in, out), out};
  return nn::make_mlp(widths, nn::Activation::kRelu, nn::Activation::kIdentity, rng);
}

DualModelPair make_dual_pair(std::size_t width_a, std::size_t width_b, double lambda_a,
                             double lambda_b, Rng& rng) {
  DualModelPair pair;
  pair.theta_ab = make_dual_model(width_a, width_b, rng);
  pair.theta_ba = make_dual_model(width_b, width_a, rng);
  pair.lambda_a = lambda_a;
  pair.lambda_b = lambda_b;
  pair.validate(width_a, width_b);
  return pair;
}

Tensor2 dual_infer(const nn::Mlp& model, const Tensor2& x) {
  return nn::mlp_forward(model, x).first;
}

double dual_loss(std::span<const double> logp_xA, std::span<const double> logp_xhatA,
                 std::span<const double> logp_xhatB, std::span<const double> logp_xB) {
  const std::size_t m = logp_xA.size();
  if (logp_xhatA.size() != m || logp_xhatB.size() != m || logp_xB.size() != m) {
    throw DimensionError("dual_loss: batch lengths differ");
  }
  if (m == 0) throw DimensionError("dual_loss: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = logp_xA[i] - logp_xhatA[i] + logp_xhatB[i] - logp_xB[i];
    if (!std::isfinite(r)) throw NumericError("dual_loss: non-finite log density");
    acc += r * r;
  }
  return acc / static_cast<double>(m);
}

Tensor2 dual_output_grad(const Tensor2& grad_logp_xhat, std::span<const double> logp_xhat,
                         std::span<const double> logp_x, std::span<const double> cross,
                         const Tensor2& align_grad, double lambda, bool exact) {
  const std::size_t m = grad_logp_xhat.rows;
  if (!grad_logp_xhat.same_shape(align_grad) || logp_xhat.size() != m || logp_x.size() != m ||
      cross.size() != m) {
    throw DimensionError("dual_output_grad: shapes disagree with the inferred batch");
  }
  Tensor2 out = align_grad;
  if (lambda == 0.0) return out;
  const double k = (exact ? 2.0 : 1.0) * lambda / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double r = (logp_xhat[i] - logp_x[i]) + cross[i];
    if (r == 0.0) continue;
    auto g = grad_logp_xhat.row(i);
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += k * g[j] * r;
  }
  return out;
}

DualRoundTranscript run_dual_round(DualParty& a, DualParty& b, std::span<const EntityId> batch,
                                   transport::Transport& transport, const DualConfig& config,
                                   std::uint64_t batch_tag, bool keep_shadow) {
  if (a.self != ActorId::kA || b.self != ActorId::kB) {
    throw ProtocolError("dual round needs party A then party B");
  }
  if (batch.empty()) throw DomainError("empty dual minibatch");
  check_party(a, config);
  check_party(b, config);
  transport::Endpoint ea(transport, ActorId::kA), eb(transport, ActorId::kB);
  DualRoundTranscript out;
  const std::uint64_t tag = batch_tag;
  const std::vector<double> no_cross(batch.size(), 0.0);
  const int mult_bits = config.scale_bits + kMultiplierExtraBits;
  auto take = [&](transport::Endpoint& e, ActorId from, MessageKind kind) {
    out.messages.push_back(e.expect(from, kind, tag));
    return out.messages.back().payload;
  };
  const MessageKind secret_kind =
      config.encrypt ? MessageKind::kCipherBlock : MessageKind::kMatrixBlock;

  // A: infer B's side
  const Tensor2 xa = a.data->rows_for(batch);
  auto [xhat_b, cache_f] = nn::mlp_forward(a.model, xa);
  ea.send(ActorId::kB, MessageKind::kInferredBatch, transport::encode_matrix(xhat_b), tag);

  // B: infer A's side
  const Tensor2 xb = b.data->rows_for(batch);
  auto [xhat_a, cache_g] = nn::mlp_forward(b.model, xb);
  eb.send(ActorId::kA, MessageKind::kInferredBatch, transport::encode_matrix(xhat_a), tag);

  // B: local gradient term for f and its encrypted density residual
  Tensor2 b_grad_logp;
  Tensor2 b_mult;
  {
    const Tensor2 xhat = transport::decode_matrix(take(eb, ActorId::kA, MessageKind::kInferredBatch));
    const auto align = nn::loss_eval(nn::LossKind::kMse, xhat, xb);
    out.align_loss_ab = align.value;
    const auto lp_hat = density::log_density_rows(*b.kde, xhat);
    const auto lp_x = density::log_density_rows(*b.kde, xb);
    b_grad_logp = density::grad_log_density_rows(*b.kde, xhat);
    const Tensor2 g_b = dual_output_grad(b_grad_logp, lp_hat, lp_x, no_cross, align.grad,
                                         b.lambda, config.exact_duality_grad);
    const auto diff_b = subtract(lp_hat, lp_x);
    eb.send(ActorId::kA, MessageKind::kGradTerm, transport::encode_matrix(g_b), tag);
    eb.send(ActorId::kA, secret_kind,
            config.encrypt ? encrypt_column(b, diff_b, config, b.rng)
                           : transport::encode_matrix(Tensor2(diff_b.size(), 1, diff_b)),
            tag);
    b_mult = cross_multiplier(b_grad_logp, b.lambda, config.exact_duality_grad);
    if (keep_shadow) {
      out.shadow.emplace();
      out.shadow->xhat_b = xhat;
      out.shadow->logp_b_xhat = lp_hat;
      out.shadow->logp_b_x = lp_x;
    }
  }

  // A: receives x_hat^A, B's term for f, B's residual; computes its own
  Tensor2 f_grad;
  {
    const Tensor2 xhat = transport::decode_matrix(take(ea, ActorId::kB, MessageKind::kInferredBatch));
    f_grad = transport::decode_matrix(take(ea, ActorId::kB, MessageKind::kGradTerm));
    const auto secret_b = take(ea, ActorId::kB, secret_kind);

    const auto align = nn::loss_eval(nn::LossKind::kMse, xhat, xa);
    out.align_loss_ba = align.value;
    const auto lp_hat = density::log_density_rows(*a.kde, xhat);
    const auto lp_x = density::log_density_rows(*a.kde, xa);
    const Tensor2 grad_logp = density::grad_log_density_rows(*a.kde, xhat);
    const Tensor2 g_a = dual_output_grad(grad_logp, lp_hat, lp_x, no_cross, align.grad,
                                         a.lambda, config.exact_duality_grad);
    const auto diff_a = subtract(lp_hat, lp_x);
    ea.send(ActorId::kB, MessageKind::kGradTerm, transport::encode_matrix(g_a), tag);
    ea.send(ActorId::kB, secret_kind,
            config.encrypt ? encrypt_column(a, diff_a, config, a.rng)
                           : transport::encode_matrix(Tensor2(diff_a.size(), 1, diff_a)),
            tag);

    const Tensor2 a_mult = cross_multiplier(grad_logp, a.lambda, config.exact_duality_grad);
    if (config.encrypt) {
      ea.send(ActorId::kB, MessageKind::kCipherBlock,
              scale_ciphertexts(*a.peer_key, transport::decode_cipher_block(secret_b), a_mult,
                                mult_bits),
              tag);
    } else {
      const Tensor2 d = transport::decode_matrix(secret_b);
      ea.send(ActorId::kB, MessageKind::kMatrixBlock,
              transport::encode_matrix(elementwise_scale(a_mult, d.data)), tag);
    }
    if (keep_shadow) {
      out.shadow->xhat_a = xhat;
      out.shadow->logp_a_xhat = lp_hat;
      out.shadow->logp_a_x = lp_x;
    }
  }

  // B: finishes g's output gradient and returns the cross term for f
  Tensor2 g_grad;
  {
    g_grad = transport::decode_matrix(take(eb, ActorId::kA, MessageKind::kGradTerm));
    const auto secret_a = take(eb, ActorId::kA, secret_kind);
    const auto cross_for_g = take(eb, ActorId::kA, secret_kind);
    if (config.encrypt) {
      add_into(g_grad, decrypt_block(*b.keys, transport::decode_cipher_block(cross_for_g)));
      eb.send(ActorId::kA, MessageKind::kCipherBlock,
              scale_ciphertexts(*b.peer_key, transport::decode_cipher_block(secret_a), b_mult,
                                mult_bits),
              tag);
    } else {
      add_into(g_grad, transport::decode_matrix(cross_for_g));
      const Tensor2 d = transport::decode_matrix(secret_a);
      eb.send(ActorId::kA, MessageKind::kMatrixBlock,
              transport::encode_matrix(elementwise_scale(b_mult, d.data)), tag);
    }
  }

  // A: finishes f's output gradient
  {
    const auto cross_for_f = take(ea, ActorId::kB, secret_kind);
    if (config.encrypt) {
      add_into(f_grad, decrypt_block(*a.keys, transport::decode_cipher_block(cross_for_f)));
    } else {
      add_into(f_grad, transport::decode_matrix(cross_for_f));
    }
  }

  const double limit = config.grad_clip / static_cast<double>(batch.size());
  clip_rows(f_grad, limit);
  clip_rows(g_grad, limit);
  if (!f_grad.all_finite() || !g_grad.all_finite()) {
    throw NumericError("dual round produced a non-finite output gradient");
  }
  // each party updates only its own model
  auto grads_f = nn::backprop_from_output_grad(a.model, cache_f, f_grad).layers;
  auto grads_g = nn::backprop_from_output_grad(b.model, cache_g, g_grad).layers;
  nn::clip_to_norm(grads_f, config.param_clip);
  nn::clip_to_norm(grads_g, config.param_clip);
  nn::sgd_step(a.model, grads_f, config.lr);
  nn::sgd_step(b.model, grads_g, config.lr);
  if (keep_shadow) {
    out.shadow->out_grad_f = std::move(f_grad);
    out.shadow->out_grad_g = std::move(g_grad);
  }
  return out;
}

std::vector<EntityId> epoch_order(std::span<const EntityId> ids, std::uint64_t seed,
                                  std::size_t epoch) {
  std::vector<EntityId> order(ids.begin(), ids.end());
  Rng rng(derive_seed(derive_seed(seed, "dual-epoch"), epoch));
  shuffle(order, rng);
  return order;
}

std::vector<DualEpochStats> run_dual_training(DualParty& a, DualParty& b,
                                              std::span<const EntityId> co_ids,
                                              std::size_t epochs, std::uint64_t seed,
                                              transport::Transport& transport,
                                              const DualConfig& config,
                                              std::uint64_t& batch_counter) {
  if (co_ids.empty()) throw DomainError("dual training needs co-occurrence samples");
  if (config.batch_size == 0) throw DomainError("batch size must be positive");
  std::vector<DualEpochStats> stats;
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto order = epoch_order(co_ids, seed, e);
    DualEpochStats s;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      const std::span<const EntityId> batch(order.data() + start, len);
      const auto r = run_dual_round(a, b, batch, transport, config, batch_counter++);
      s.align_loss_ab += r.align_loss_ab * static_cast<double>(len);
      s.align_loss_ba += r.align_loss_ba * static_cast<double>(len);
    }
    s.align_loss_ab /= static_cast<double>(order.size());
    s.align_loss_ba /= static_cast<double>(order.size());
    stats.push_back(s);
  }
  return stats;
}

double regression_step(nn::Mlp& model, const Tensor2& x, const Tensor2& target, double lr) {
  auto [pred, cache] = nn::mlp_forward(model, x);
  const auto loss = nn::loss_eval(nn::LossKind::kMse, pred, target);
  nn::sgd_step(model, nn::backprop_from_output_grad(model, cache, loss.grad).layers, lr);
  return loss.value;
}

}  // namespace mpdl::dual
