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

#include "mpdl/orchestrator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>
#include <unordered_map>

#include "mpdl/density.hpp"
#include "mpdl/errors.hpp"
#include "mpdl/paillier.hpp"
#include "mpdl/psi.hpp"

namespace mpdl {

using transport::ActorId;
using transport::Bytes;
using transport::Endpoint;
using transport::MessageKind;

void MpdlConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive (inf disables noise)");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be >= 0");
  if (folds < 2) throw DomainError("K must be at least 2");
  if (max_iters < 1) throw DomainError("m must be at least 1");
  if (folds < max_iters) throw DomainError("K must be no less than m");
  if (!std::isfinite(threshold)) throw DomainError("T must be finite");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw DomainError("lr must be positive");
  if (batch_size == 0) throw DomainError("batch size must be positive");
  if (!(central_grad_clip >= 0.0) || !std::isfinite(central_grad_clip)) {
    throw DomainError("central gradient clip must be finite and >= 0");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DomainError("test fraction must lie in (0, 1)");
  }
  if (encrypt && he_bits != 512 && he_bits != 1024 && he_bits != 2048) {
    throw DomainError("he_bits must be 512, 1024 or 2048");
  }
  if (psi_bits < 256) throw DomainError("psi_bits must be at least 256");
}

nlohmann::json MpdlConfig::to_json() const {
  nlohmann::json j;
  j["gamma"] = gamma;
  j["epsilon"] = std::isinf(epsilon) ? nlohmann::json("inf") : nlohmann::json(epsilon);
  j["sensitivity_mode"] =
      sensitivity_mode == dp::SensitivityMode::kPerLayer ? "per_layer" : "per_neuron";
  j["lambda"] = lambda;
  j["folds"] = folds;
  j["threshold"] = threshold;
  j["max_iters"] = max_iters;
  j["dual_epochs"] = dual_epochs;
  j["central_epochs"] = central_epochs;
  j["lr"] = lr;
  j["central_grad_clip"] = central_grad_clip;
  j["batch_size"] = batch_size;
  j["test_fraction"] = test_fraction;
  j["seed"] = seed;
  j["encrypt"] = encrypt;
  j["he_bits"] = he_bits;
  j["psi_bits"] = psi_bits;
  j["exact_duality_grad"] = exact_duality_grad;
  return j;
}

namespace {

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["config"] = config.to_json();
  j["sizes"] = {{"co", n_co}, {"b_only", n_b_only}, {"a_only", n_a_only}, {"test", n_test},
                {"width_a", width_a}, {"width_b", width_b}};
  j["iterations"] = nlohmann::json::array();
  for (const auto& it : iterations) {
    j["iterations"].push_back({{"iteration", it.iteration},
                               {"fold", it.fold},
                               {"V_C", it.v_c},
                               {"V_D", it.v_d},
                               {"supplement_rows", it.supplement_rows}});
  }
  j["converged"] = converged;
  j["joint_T"] = number_or_null(joint_t);
  j["dual_T"] = number_or_null(dual_t);
  j["MPDL_A"] = number_or_null(mpdl_a);
  j["inference_MAE"] = number_or_null(inference_mae);
  j["messages"] = messages;
  return j;
}

void RunReport::write_csv(std::ostream& out) const {
  out << "record,iteration,fold,metric,value\n";
  for (const auto& it : iterations) {
    out << "iteration," << it.iteration << ',' << it.fold << ",V_C," << fmt(it.v_c) << '\n';
    out << "iteration," << it.iteration << ',' << it.fold << ",V_D," << fmt(it.v_d) << '\n';
  }
  out << "final,,,joint_T," << fmt(joint_t) << '\n';
  out << "final,,,dual_T," << fmt(dual_t) << '\n';
  out << "final,,,MPDL_A," << fmt(mpdl_a) << '\n';
  out << "final,,,inference_MAE," << fmt(inference_mae) << '\n';
  out << "final,,,converged," << (converged ? 1 : 0) << '\n';
}

double inference_mae(const Tensor2& raw, const Tensor2& inferred) {
  if (!raw.same_shape(inferred)) throw DimensionError("inference_mae: shapes differ");
  if (raw.empty()) throw DomainError("inference_mae of an empty matrix");
  double acc = 0.0;
  for (std::size_t i = 0; i < raw.data.size(); ++i) acc += std::abs(raw.data[i] - inferred.data[i]);
  return acc / static_cast<double>(raw.data.size());
}

namespace {

constexpr std::size_t kSlotC = 0;  // M_C: co-occurrence rows only
constexpr std::size_t kSlotD = 1;  // M_D: plus dual-supplemented rows

Rng stream(std::uint64_t seed, std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(derive_seed(derive_seed(seed, tag), a), b));
}

double squared_norm(const nn::Mlp& m) {
  double s = 0.0;
  for (const auto& l : m.layers) {
    for (double w : l.weights.data) s += w * w;
    for (double w : l.bias) s += w * w;
  }
  return s;
}

// A training or evaluation row as both parties and C address it: an aligned
// entity id, or the index of a dual-supplemented row in B's published order.
struct RowRef {
  bool supplement = false;
  std::uint64_t key = 0;
};

struct Party {
  explicit Party(ActorId id) : self(id) {}
  ActorId self;
  std::vector<EntityId> train_ids;  // local training partition, sorted
  std::vector<EntityId> test_ids;
  std::optional<dp::PerturbedDataset> perturbed;  // train then test rows
  std::optional<density::KdeModel> kde;
  dual::DualParty dual;
  Tensor2 supplement;  // A: inferred x_hat^A rows; B: own perturbed rows of D_B
  std::array<nn::DenseLayer, 2> local;
  // alignment state
  std::vector<EntityId> common;
  std::unordered_map<EntityId, Bytes> tokens;  // A only
  psi::TokenIndex ids_by_token;                // B only
  std::vector<EntityId> b_only_order;          // B only

  Tensor2 rows(std::span<const RowRef> refs) const {
    Tensor2 out(refs.size(), perturbed->width());
    for (std::size_t i = 0; i < refs.size(); ++i) {
      std::span<const double> src;
      Tensor2 tmp;
      if (refs[i].supplement) {
        src = supplement.row(refs[i].key);
      } else {
        const EntityId id = refs[i].key;
        tmp = perturbed->rows_for(std::span<const EntityId>(&id, 1));
        src = tmp.row(0);
      }
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
  }
};

struct Collaborator {
  std::unordered_map<EntityId, int> labels;
  std::vector<int> supplement_labels;
  std::array<central::CentralHead, 2> head;

  int label(const RowRef& r) const {
    if (r.supplement) return supplement_labels.at(r.key);
    auto it = labels.find(r.key);
    if (it == labels.end()) throw ProtocolError("collaborator has no label for a training row");
    return it->second;
  }
};

struct Session {
  transport::Transport& t;
  const MpdlConfig& cfg;
  Party& a;
  Party& b;
  Collaborator& c;
  std::uint64_t tag = 0;
};

std::vector<RowRef> refs_of(std::span<const EntityId> ids) {
  std::vector<RowRef> out;
  for (EntityId id : ids) out.push_back({false, id});
  return out;
}

void train_central(Session& s, std::size_t slot, std::vector<RowRef> rows, std::size_t iteration) {
  Endpoint ea(s.t, ActorId::kA), eb(s.t, ActorId::kB), ec(s.t, ActorId::kC);
  const std::size_t bs = s.cfg.batch_size;
  for (std::size_t epoch = 0; epoch < s.cfg.central_epochs; ++epoch) {
    auto order_rng = stream(s.cfg.seed, slot == kSlotD ? "order-D" : "order-C", iteration, epoch);
    shuffle(rows, order_rng);
    for (std::size_t start = 0; start < rows.size(); start += bs) {
      const std::span<const RowRef> batch(rows.data() + start, std::min(bs, rows.size() - start));
      const std::uint64_t tag = s.tag++;

      const Tensor2 xa = s.a.rows(batch);
      ea.send(ActorId::kC, MessageKind::kPartialSum,
              transport::encode_matrix(central::party_forward(s.a.local[slot], xa)), tag);
      const Tensor2 xb = s.b.rows(batch);
      eb.send(ActorId::kC, MessageKind::kPartialSum,
              transport::encode_matrix(central::party_forward(s.b.local[slot], xb)), tag);

      central::CentralBatch cb;
      cb.z_a = transport::decode_matrix(ec.expect(ActorId::kA, MessageKind::kPartialSum, tag).payload);
      cb.z_b = transport::decode_matrix(ec.expect(ActorId::kB, MessageKind::kPartialSum, tag).payload);
      for (const auto& r : batch) cb.labels.push_back(s.c.label(r));
      const auto step = central::central_forward_backward(s.c.head[slot], cb);
      if (!std::isfinite(step.loss)) throw NumericError("central training loss is not finite");
      central::apply_head(s.c.head[slot], step.grads, s.cfg.lr, s.cfg.central_grad_clip);
      const auto delta = transport::encode_matrix(step.delta);
      ec.send(ActorId::kA, MessageKind::kDeltaError, delta, tag);
      ec.send(ActorId::kB, MessageKind::kDeltaError, delta, tag);

      for (auto* p : {&s.a, &s.b}) {
        Endpoint e(s.t, p->self);
        const auto msg = e.expect(ActorId::kC, MessageKind::kDeltaError, tag);
        central::party_backward(p->local[slot], transport::decode_matrix(msg.payload),
                                *msg.batch_tag, p == &s.a ? xa : xb, tag, s.cfg.lr,
                                s.cfg.central_grad_clip);
      }
    }
  }
}

// Predictions made at C from both parties' partial sums.
std::vector<int> central_predict(Session& s, std::size_t slot, std::span<const RowRef> rows) {
  Endpoint ea(s.t, ActorId::kA), eb(s.t, ActorId::kB), ec(s.t, ActorId::kC);
  const std::uint64_t tag = s.tag++;
  ea.send(ActorId::kC, MessageKind::kPartialSum,
          transport::encode_matrix(central::party_forward(s.a.local[slot], s.a.rows(rows))), tag);
  eb.send(ActorId::kC, MessageKind::kPartialSum,
          transport::encode_matrix(central::party_forward(s.b.local[slot], s.b.rows(rows))), tag);
  const Tensor2 za = transport::decode_matrix(ec.expect(ActorId::kA, MessageKind::kPartialSum, tag).payload);
  const Tensor2 zb = transport::decode_matrix(ec.expect(ActorId::kB, MessageKind::kPartialSum, tag).payload);
  return central::head_predict(s.c.head[slot], za, zb);
}

double fold_accuracy(Session& s, std::size_t slot, std::span<const RowRef> rows) {
  const auto pred = central_predict(s, slot, rows);
  std::vector<int> truth;
  for (const auto& r : rows) truth.push_back(s.c.label(r));
  return central::accuracy(pred, truth);
}

// B infers A's side for its B-only rows and hands them to A.
void supplement_rows(Session& s) {
  if (s.b.supplement.rows == 0) return;
  Endpoint ea(s.t, ActorId::kA), eb(s.t, ActorId::kB);
  const std::uint64_t tag = s.tag++;
  eb.send(ActorId::kA, MessageKind::kInferredBatch,
          transport::encode_matrix(dual::dual_infer(s.b.dual.model, s.b.supplement)), tag);
  s.a.supplement =
      transport::decode_matrix(ea.expect(ActorId::kB, MessageKind::kInferredBatch, tag).payload);
}

// One-sided rows held by A: A sends id tokens and its inference of B's side;
// B answers with its partial sums on its own rows when the token is known and
// on the inferred rows otherwise; C returns labels to A.
std::vector<int> predict_unlabeled(Session& s, std::span<const EntityId> ids_at_a) {
  Endpoint ea(s.t, ActorId::kA), eb(s.t, ActorId::kB), ec(s.t, ActorId::kC);
  const std::uint64_t tag = s.tag++;
  {
    std::vector<Bytes> tokens;
    for (EntityId id : ids_at_a) {
      auto it = s.a.tokens.find(id);
      if (it == s.a.tokens.end()) throw ProtocolError("A has no alignment token for a query id");
      tokens.push_back(it->second);
    }
    const Tensor2 xa = s.a.perturbed->rows_for(ids_at_a);
    ea.send(ActorId::kB, MessageKind::kBlindedIds, transport::encode_byte_strings(tokens), tag);
    ea.send(ActorId::kB, MessageKind::kInferredBatch,
            transport::encode_matrix(dual::dual_infer(s.a.dual.model, xa)), tag);
    ea.send(ActorId::kC, MessageKind::kPartialSum,
            transport::encode_matrix(central::party_forward(s.a.local[kSlotD], xa)), tag);
  }
  {
    const auto tokens =
        transport::decode_byte_strings(eb.expect(ActorId::kA, MessageKind::kBlindedIds, tag).payload);
    Tensor2 xb = transport::decode_matrix(eb.expect(ActorId::kA, MessageKind::kInferredBatch, tag).payload);
    if (xb.rows != tokens.size()) throw ProtocolError("query tokens and rows disagree");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      auto it = s.b.ids_by_token.find(tokens[i]);
      if (it == s.b.ids_by_token.end()) continue;  // not held by B: keep the inferred row
      const EntityId id = it->second;
      const Tensor2 own = s.b.perturbed->rows_for(std::span<const EntityId>(&id, 1));
      std::copy(own.data.begin(), own.data.end(), xb.row(i).begin());
    }
    eb.send(ActorId::kC, MessageKind::kPartialSum,
            transport::encode_matrix(central::party_forward(s.b.local[kSlotD], xb)), tag);
  }
  {
    const Tensor2 za = transport::decode_matrix(ec.expect(ActorId::kA, MessageKind::kPartialSum, tag).payload);
    const Tensor2 zb = transport::decode_matrix(ec.expect(ActorId::kB, MessageKind::kPartialSum, tag).payload);
    const auto labels = central::head_predict(s.c.head[kSlotD], za, zb);
    ec.send(ActorId::kA, MessageKind::kControl, transport::encode_control({{"labels", labels}}), tag);
  }
  return transport::decode_control(ea.expect(ActorId::kC, MessageKind::kControl, tag).payload)
      .at("labels")
      .get<std::vector<int>>();
}

Tensor2 rows_by_id(const Tensor2& features, const std::unordered_map<EntityId, std::size_t>& index,
                   std::span<const EntityId> ids) {
  std::vector<std::size_t> idx;
  for (EntityId id : ids) idx.push_back(index.at(id));
  return gather_rows(features, idx);
}

std::vector<EntityId> sorted_union(std::vector<EntityId> a, std::span<const EntityId> b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  return a;
}

}  // namespace

MpdlRun run_mpdl(const PartyDataset& full, const std::optional<FeatureAssignment>& assignment,
                 const MpdlConfig& config, const RunOptions& options) {
  config.validate();
  full.validate();
  if (!full.labels) throw DomainError("the experiment dataset needs labels");
  const std::size_t classes =
      full.num_classes() ? full.num_classes()
                         : static_cast<std::size_t>(
                               *std::max_element(full.labels->begin(), full.labels->end()) + 1);

  MpdlRun run;
  RunReport& report = run.report;
  report.config = config;
  transport::Transport t(options.backend);

  // data layout
  const auto split = split_by_gamma(full.ids, {config.gamma, config.test_fraction, config.seed});
  if (split.co.size() < config.folds) {
    throw DomainError("too few co-occurrence samples for K folds");
  }
  const auto assign = assignment ? *assignment
                                 : random_assignment(full.features.cols,
                                                     derive_seed(config.seed, "features"));
  const auto part = partition_features(full.features, assign);
  const auto index = index_by_id(full.ids);
  report.n_co = split.co.size();
  report.n_b_only = split.b_only.size();
  report.n_a_only = split.a_only.size();
  report.n_test = split.test.size();
  report.width_a = part.a.cols;
  report.width_b = part.b.cols;
  const std::size_t hidden = central::central_hidden_width(part.a.cols + part.b.cols, classes);

  Party a(ActorId::kA);
  Party b(ActorId::kB);
  Collaborator c;
  a.train_ids = sorted_union(split.co, split.a_only);
  b.train_ids = sorted_union(split.co, split.b_only);
  for (auto* p : {&a, &b}) {
    p->test_ids = split.test;
    std::sort(p->test_ids.begin(), p->test_ids.end());
  }

  // one-shot perturbation of each party's local rows
  for (auto* p : {&a, &b}) {
    const bool is_a = p == &a;
    std::vector<EntityId> ids = p->train_ids;
    ids.insert(ids.end(), p->test_ids.begin(), p->test_ids.end());
    const Tensor2 raw = rows_by_id(is_a ? part.a : part.b, index, ids);
    dp::DpConfig dpc;
    dpc.epsilon = config.epsilon;
    dpc.h0_width = hidden;
    dpc.sample_count = p->train_ids.size();
    dpc.sensitivity_mode = config.sensitivity_mode;
    auto rng = make_rng(config.seed, is_a ? "dp-A" : "dp-B");
    p->perturbed.emplace(dp::perturb_dataset(ids, raw, dpc, rng));
    p->kde.emplace(p->perturbed->rows_for(p->train_ids));
  }

  // entity alignment over the training partitions
  {
    auto rng_a = make_rng(config.seed, "psi-A");
    auto rng_b = make_rng(config.seed, "psi-B");
    const std::uint64_t first = t.transcript().size();
    const auto psi = psi::blinded_intersection(a.train_ids, b.train_ids, t, rng_a, rng_b,
                                               {.rsa_bits = config.psi_bits});
    a.common = psi.common_at_a;
    b.common = psi.common_at_b;
    a.tokens = psi.tokens_at_a;
    b.ids_by_token = psi.ids_by_token_at_b;
    if (options.keep_audit) {
      run.audit.emplace();
      run.audit->psi_common = psi.common_at_a;
      const auto& msgs = t.transcript().messages();
      run.audit->psi_first_msg = msgs.at(first).msg_id;
      run.audit->psi_last_msg = msgs.back().msg_id;
    }
  }
  const std::vector<EntityId>& co = a.common;
  if (co.empty()) throw DomainError("no co-occurrence samples after alignment");

  // key exchange
  if (config.encrypt) {
    for (auto* p : {&a, &b}) {
      auto rng = make_rng(config.seed, p == &a ? "paillier-A" : "paillier-B");
      p->dual.keys = he::keygen(config.he_bits, rng);
    }
    Endpoint ea(t, ActorId::kA), eb(t, ActorId::kB);
    ea.send(ActorId::kB, MessageKind::kControl,
            transport::encode_control({{"paillier_n", a.dual.keys->pub.n.get_str(16)}}));
    eb.send(ActorId::kA, MessageKind::kControl,
            transport::encode_control({{"paillier_n", b.dual.keys->pub.n.get_str(16)}}));
    for (auto [self, peer] : {std::pair{&a, ActorId::kB}, std::pair{&b, ActorId::kA}}) {
      Endpoint e(t, self->self);
      const auto j = transport::decode_control(e.expect(peer, MessageKind::kControl).payload);
      self->dual.peer_key = he::make_public_key(mpz_class(j.at("paillier_n").get<std::string>(), 16));
    }
  }

  // dual models, each initialised by its owner
  {
    auto rng_a = make_rng(config.seed, "dual-A");
    auto rng_b = make_rng(config.seed, "dual-B");
    a.dual.self = ActorId::kA;
    b.dual.self = ActorId::kB;
    a.dual.model = dual::make_dual_model(part.a.cols, part.b.cols, rng_a);
    b.dual.model = dual::make_dual_model(part.b.cols, part.a.cols, rng_b);
    for (auto* p : {&a, &b}) {
      p->dual.lambda = config.lambda;
      p->dual.data = &*p->perturbed;
      p->dual.kde = &*p->kde;
      p->dual.rng = make_rng(config.seed, p == &a ? "he-noise-A" : "he-noise-B");
    }
  }

  // B: labels to C, and its own rows for the supplement
  {
    b.b_only_order = split.b_only;
    std::sort(b.b_only_order.begin(), b.b_only_order.end());
    b.supplement = b.perturbed->rows_for(b.b_only_order);
    std::vector<int> co_labels, sup_labels;
    for (EntityId id : co) co_labels.push_back((*full.labels)[index.at(id)]);
    for (EntityId id : b.b_only_order) sup_labels.push_back((*full.labels)[index.at(id)]);
    Endpoint eb(t, ActorId::kB), ec(t, ActorId::kC);
    eb.send(ActorId::kC, MessageKind::kControl,
            transport::encode_control(
                {{"ids", co}, {"labels", co_labels}, {"supplement_labels", sup_labels}}));
    const auto j = transport::decode_control(ec.expect(ActorId::kB, MessageKind::kControl).payload);
    const auto ids = j.at("ids").get<std::vector<EntityId>>();
    const auto labels = j.at("labels").get<std::vector<int>>();
    for (std::size_t i = 0; i < ids.size(); ++i) c.labels[ids[i]] = labels.at(i);
    c.supplement_labels = j.at("supplement_labels").get<std::vector<int>>();
  }

  Session s{t, config, a, b, c};
  dual::DualConfig dcfg;
  dcfg.lr = config.lr;
  dcfg.batch_size = config.batch_size;
  dcfg.encrypt = config.encrypt;
  dcfg.exact_duality_grad = config.exact_duality_grad;

  // dual cross-validation loop
  const auto folds = kfold_split(co, config.folds, derive_seed(config.seed, "kfold"));
  std::vector<std::size_t> fold_order(config.folds);
  for (std::size_t k = 0; k < config.folds; ++k) fold_order[k] = k;
  auto pick = make_rng(config.seed, "fold-pick");
  shuffle(fold_order, pick);

  for (std::size_t j = 1; j <= config.max_iters; ++j) {
    IterationRecord rec;
    rec.iteration = j;
    rec.fold = fold_order[j - 1];

    // fresh central models; M_C and M_D share the initial weights
    {
      auto ra = stream(config.seed, "central-A", j);
      auto rb = stream(config.seed, "central-B", j);
      auto rc = stream(config.seed, "central-C", j);
      const std::size_t total = part.a.cols + part.b.cols;
      a.local[kSlotC] = a.local[kSlotD] = central::make_local_layer(part.a.cols, total, hidden, ra);
      b.local[kSlotC] = b.local[kSlotD] = central::make_local_layer(part.b.cols, total, hidden, rb);
      c.head[kSlotC] = c.head[kSlotD] = central::make_head(hidden, classes, rc);
      for (const auto* l : {&a.local[kSlotC], &b.local[kSlotC]}) {
        for (double w : l->weights.data) rec.central_init_norm += w * w;
      }
      rec.central_init_norm += squared_norm(c.head[kSlotC].upper);
    }

    rec.dual_norm_start = squared_norm(a.dual.model) + squared_norm(b.dual.model);
    dual::run_dual_training(a.dual, b.dual, co, config.dual_epochs,
                            derive_seed(config.seed, j), t, dcfg, s.tag);
    rec.dual_norm_end = squared_norm(a.dual.model) + squared_norm(b.dual.model);

    supplement_rows(s);
    rec.supplement_rows = a.supplement.rows;

    const auto& valid = folds[rec.fold];
    std::vector<RowRef> train_c;
    for (EntityId id : co) {
      if (std::find(valid.begin(), valid.end(), id) == valid.end()) train_c.push_back({false, id});
    }
    std::vector<RowRef> train_d = train_c;
    for (std::size_t i = 0; i < a.supplement.rows; ++i) train_d.push_back({true, i});

    train_central(s, kSlotC, train_c, j);
    train_central(s, kSlotD, train_d, j);
    const auto valid_refs = refs_of(valid);
    rec.v_c = fold_accuracy(s, kSlotC, valid_refs);
    rec.v_d = fold_accuracy(s, kSlotD, valid_refs);
    report.iterations.push_back(rec);
    if (rec.v_d - rec.v_c > config.threshold) {
      report.converged = true;
      break;
    }
  }

  // final metrics on the held-out test rows
  std::vector<int> test_truth;
  for (EntityId id : a.test_ids) test_truth.push_back((*full.labels)[index.at(id)]);
  const auto test_refs = refs_of(a.test_ids);
  report.joint_t = central::accuracy(central_predict(s, kSlotC, test_refs), test_truth);
  report.dual_t = central::accuracy(central_predict(s, kSlotD, test_refs), test_truth);

  std::vector<EntityId> a_only = split.a_only;
  std::sort(a_only.begin(), a_only.end());
  report.mpdl_a = std::numeric_limits<double>::quiet_NaN();
  if (!options.skip_unlabeled && !a_only.empty()) {
    const auto pred = predict_unlabeled(s, a_only);
    std::vector<int> truth;
    for (EntityId id : a_only) truth.push_back((*full.labels)[index.at(id)]);
    report.mpdl_a = central::accuracy(pred, truth);
  }
  if (!options.queries.empty()) run.query_predictions = predict_unlabeled(s, options.queries);

  // leakage proxy: raw features against what the partner's dual model infers
  {
    double acc = 0.0;
    std::size_t count = 0;
    if (!b.b_only_order.empty()) {
      const Tensor2 raw = rows_by_id(part.a, index, b.b_only_order);
      const Tensor2 inf = dual::dual_infer(b.dual.model, b.supplement);
      acc += inference_mae(raw, inf) * static_cast<double>(raw.data.size());
      count += raw.data.size();
    }
    if (!a_only.empty()) {
      const Tensor2 raw = rows_by_id(part.b, index, a_only);
      const Tensor2 inf = dual::dual_infer(a.dual.model, a.perturbed->rows_for(a_only));
      acc += inference_mae(raw, inf) * static_cast<double>(raw.data.size());
      count += raw.data.size();
    }
    report.inference_mae =
        count ? acc / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
  }
  report.messages = t.transcript().size();

  run.model_c = {a.local[kSlotC], b.local[kSlotC], c.head[kSlotC]};
  run.model_d = {a.local[kSlotD], b.local[kSlotD], c.head[kSlotD]};
  run.duals = {a.dual.model, b.dual.model, config.lambda, config.lambda};
  if (options.keep_audit) {
    auto& au = *run.audit;
    au.split = split;
    au.partition = part;
    au.ids_a = a.perturbed->ids();
    au.ids_b = b.perturbed->ids();
    au.perturbed_a = a.perturbed->features();
    au.perturbed_b = b.perturbed->features();
    au.logp_a_of_x_a = density::log_density_rows(*a.kde, a.perturbed->rows_for(co));
    au.logp_b_of_x_b = density::log_density_rows(*b.kde, b.perturbed->rows_for(co));
    if (config.encrypt) {
      au.key_id_a = a.dual.keys->pub.key_id;
      au.key_id_b = b.dual.keys->pub.key_id;
    }
  }
  run.transcript = t.transcript();
  return run;
}

}  // namespace mpdl
