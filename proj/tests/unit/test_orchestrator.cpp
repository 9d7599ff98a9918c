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

#include <algorithm>
#include <limits>
#include <sstream>

#include "mpdl/orchestrator.hpp"
#include "dual_fixture.hpp"
#include "mpdl/synthetic.hpp"
#include "oracles.hpp"

using namespace mpdl;
using transport::ActorId;
using transport::MessageKind;

namespace {

const synthetic::LinearTask& task() {
  static const auto t = synthetic::make_linear_task(300, 4, 4, 0.05, 2024);
  return t;
}

MpdlConfig quick(std::uint64_t seed) {
  MpdlConfig c;
  c.seed = seed;
  c.he_bits = 512;
  c.psi_bits = 512;
  c.epsilon = std::numeric_limits<double>::infinity();
  return c;
}

}  // namespace

TEST(Orchestrator, InferenceMaeExamples) {
  auto rng = make_rng(121, "t");
  const Tensor2 x = oracle::random_matrix(4, 3, rng);
  EXPECT_EQ(inference_mae(x, x), 0.0);
  EXPECT_EQ(inference_mae(Tensor2(2, 2), Tensor2(2, 2, 0.5)), 0.5);
  EXPECT_THROW(inference_mae(Tensor2(2, 2), Tensor2(2, 3)), DimensionError);
}

TEST(Orchestrator, NegativeThresholdStopsAfterFirstIteration) {
  auto c = quick(1);
  c.threshold = -1.0;
  c.max_iters = 3;
  const auto run = run_mpdl(task().full, task().assignment, c, {.skip_unlabeled = true});
  EXPECT_EQ(run.report.iterations.size(), 1u);
  EXPECT_TRUE(run.report.converged);
}

TEST(Orchestrator, SingleIterationBound) {
  auto c = quick(2);
  c.max_iters = 1;
  c.threshold = 0.5;  // unreachable
  const auto run = run_mpdl(task().full, task().assignment, c, {.skip_unlabeled = true});
  ASSERT_EQ(run.report.iterations.size(), 1u);
  EXPECT_FALSE(run.report.converged);
  EXPECT_NE(run.report.iterations[0].dual_norm_start, run.report.iterations[0].dual_norm_end);
  // dual pair trained exactly once: one epoch schedule of rounds on D_C
  std::size_t rounds = 0;
  for (const auto& m : run.transcript.messages()) {
    rounds += m.sender == ActorId::kA && m.receiver == ActorId::kB &&
              m.kind == MessageKind::kGradTerm;
  }
  const std::size_t per_epoch = (run.report.n_co + c.batch_size - 1) / c.batch_size;
  EXPECT_EQ(rounds, per_epoch * c.dual_epochs);
}

TEST(Orchestrator, IterationsRestartFromTheSameModels) {
  auto c = quick(3);
  c.max_iters = 2;
  c.threshold = 10.0;
  const auto run = run_mpdl(task().full, task().assignment, c, {.skip_unlabeled = true});
  ASSERT_EQ(run.report.iterations.size(), 2u);
  EXPECT_NE(run.report.iterations[0].fold, run.report.iterations[1].fold);
  // each iteration retrains the duals from the end of the previous one
  EXPECT_EQ(run.report.iterations[1].dual_norm_start, run.report.iterations[0].dual_norm_end);
}

TEST(Orchestrator, DeterministicForSeed) {
  const auto c = quick(4);
  const auto r1 = run_mpdl(task().full, task().assignment, c);
  const auto r2 = run_mpdl(task().full, task().assignment, c);
  std::ostringstream a, b;
  r1.report.write_csv(a);
  r2.report.write_csv(b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(r1.transcript.messages(), r2.transcript.messages());
}

TEST(Orchestrator, ShadowAndEncryptedAgree) {
  auto c = quick(5);
  const auto enc = run_mpdl(task().full, task().assignment, c);
  c.encrypt = false;
  const auto plain = run_mpdl(task().full, task().assignment, c);
  EXPECT_EQ(enc.report.dual_t, plain.report.dual_t);
  EXPECT_EQ(enc.report.joint_t, plain.report.joint_t);
  EXPECT_LE(fixture::max_param_diff(enc.duals.theta_ab, plain.duals.theta_ab), 1e-9);
}

TEST(Orchestrator, SupplementHelpsOnLinearTask) {
  double gap = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto c = quick(10 + seed);
    c.max_iters = 1;
    const auto run = run_mpdl(task().full, task().assignment, c, {.skip_unlabeled = true});
    gap += run.report.iterations[0].v_d - run.report.iterations[0].v_c;
  }
  EXPECT_GT(gap / 5.0, 0.0);
}

TEST(Orchestrator, OneSidedAccuracyTracksDualModel) {
  // inferred rows are only as good as the dual pair, so train it to fit the map
  static const auto big = synthetic::make_linear_task(1000, 4, 4, 0.05, 2024);
  double mpdl_a = 0.0, dual_t = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto c = quick(20 + seed);
    c.dual_epochs = 100;
    c.encrypt = false;
    const auto run = run_mpdl(big.full, big.assignment, c);
    mpdl_a += run.report.mpdl_a / 5.0;
    dual_t += run.report.dual_t / 5.0;
  }
  EXPECT_LT(std::abs(mpdl_a - dual_t), 0.10);
}

TEST(Orchestrator, NoiseRaisesInferenceError) {
  double noisy = 0.0, clean = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto c = quick(30 + seed);
    c.sensitivity_mode = dp::SensitivityMode::kPerNeuron;
    clean += run_mpdl(task().full, task().assignment, c, {.skip_unlabeled = true}).report.inference_mae;
    c.epsilon = 0.1;
    noisy += run_mpdl(task().full, task().assignment, c, {.skip_unlabeled = true}).report.inference_mae;
  }
  EXPECT_GT(noisy, clean);
}

TEST(Orchestrator, QueryRouting) {
  const auto c = quick(40);
  // learn the layout from a first run, then ask about one overlap id and one A-only id
  RunOptions probe{.keep_audit = true, .skip_unlabeled = true};
  const auto first = run_mpdl(task().full, task().assignment, c, probe);
  const auto& split = first.audit->split;
  ASSERT_FALSE(split.co.empty());
  ASSERT_FALSE(split.a_only.empty());
  const EntityId overlap = split.co.front(), lonely = split.a_only.front();

  RunOptions opts{.keep_audit = true, .skip_unlabeled = true, .queries = {overlap, lonely}};
  const auto run = run_mpdl(task().full, task().assignment, c, opts);
  ASSERT_EQ(run.query_predictions.size(), 2u);
  const auto& au = *run.audit;
  auto row = [](const std::vector<EntityId>& ids, const Tensor2& x, EntityId id) {
    const auto i = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin());
    Tensor2 r(1, x.cols);
    std::copy(x.row(i).begin(), x.row(i).end(), r.row(0).begin());
    return r;
  };
  const Tensor2 xa = row(au.ids_a, au.perturbed_a, overlap), xb = row(au.ids_b, au.perturbed_b, overlap);
  EXPECT_EQ(run.query_predictions[0], central::predict(run.model_d, xa, xb)[0]);
  const Tensor2 la = row(au.ids_a, au.perturbed_a, lonely);
  EXPECT_EQ(run.query_predictions[1],
            central::predict(run.model_d, la, dual::dual_infer(run.duals.theta_ab, la))[0]);
  // the last exchange carries A's inferred rows to B and labels back to A
  const auto& msgs = run.transcript.messages();
  ASSERT_GE(msgs.size(), 5u);
  const auto& inferred = msgs[msgs.size() - 4];
  EXPECT_EQ(inferred.kind, MessageKind::kInferredBatch);
  EXPECT_EQ(inferred.sender, ActorId::kA);
  EXPECT_EQ(transport::decode_matrix(inferred.payload).rows, 2u);
  EXPECT_EQ(msgs.back().kind, MessageKind::kControl);
  EXPECT_EQ(msgs.back().receiver, ActorId::kA);
}

TEST(Orchestrator, ConfigValidation) {
  auto bad = [](auto mutate) {
    MpdlConfig c;
    mutate(c);
    return c;
  };
  const auto& d = task().full;
  EXPECT_THROW(run_mpdl(d, {}, bad([](auto& c) { c.gamma = 0.0; })), DomainError);
  EXPECT_THROW(run_mpdl(d, {}, bad([](auto& c) { c.epsilon = -1; })), DomainError);
  EXPECT_THROW(run_mpdl(d, {}, bad([](auto& c) { c.folds = 1; })), DomainError);
  EXPECT_THROW(run_mpdl(d, {}, bad([](auto& c) { c.max_iters = 6; })), DomainError);
  EXPECT_THROW(run_mpdl(d, {}, bad([](auto& c) { c.threshold = std::nan(""); })), DomainError);
  EXPECT_THROW(run_mpdl(d, {}, bad([](auto& c) { c.he_bits = 700; })), DomainError);
}

TEST(Orchestrator, CsvAndJsonReport) {
  const auto run = run_mpdl(task().full, task().assignment, quick(50));
  std::ostringstream os;
  run.report.write_csv(os);
  const std::string csv = os.str();
  EXPECT_EQ(csv.rfind("record,iteration,fold,metric,value\n", 0), 0u);
  for (const char* key : {"joint_T", "dual_T", "MPDL_A", "inference_MAE", "converged", "V_C", "V_D"}) {
    EXPECT_NE(csv.find(key), std::string::npos) << key;
  }
  const auto j = run.report.to_json();
  EXPECT_EQ(j.at("config").at("epsilon"), "inf");
  EXPECT_EQ(j.at("sizes").at("co").get<std::size_t>(), run.report.n_co);
}

TEST(Orchestrator, FullRunKeepsRawFeaturesAtHome) {
  auto c = quick(40);
  c.epsilon = 1.0;
  const auto layout = split_by_gamma(task().full.ids, {c.gamma, c.test_fraction, c.seed});
  const auto run = run_mpdl(task().full, task().assignment, c, {.keep_audit = true, .queries = layout.a_only});
  ASSERT_TRUE(run.audit);
  const auto& au = *run.audit;
  const std::vector<transport::Predicate> preds{
      transport::forbid_rows("raw B at A", ActorId::kA, au.partition.b),
      transport::forbid_rows("raw A at B", ActorId::kB, au.partition.a),
      transport::forbid_rows("raw A at C", ActorId::kC, au.partition.a),
      transport::forbid_rows("raw B at C", ActorId::kC, au.partition.b),
      transport::allowed_kinds("C sees sums and control", ActorId::kC,
                               {MessageKind::kPartialSum, MessageKind::kControl}),
  };
  const auto rep = transport::transcript_assert(run.transcript, preds);
  EXPECT_TRUE(rep.passed()) << (rep.passed() ? "" : rep.violations[0].predicate);
  auto co = au.split.co;
  std::sort(co.begin(), co.end());
  EXPECT_EQ(au.psi_common, co);
  EXPECT_EQ(run.query_predictions.size(), layout.a_only.size());
}
