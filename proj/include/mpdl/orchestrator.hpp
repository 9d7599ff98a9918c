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
#include <iosfwd>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "mpdl/central.hpp"
#include "mpdl/data.hpp"
#include "mpdl/dp.hpp"
#include "mpdl/dual.hpp"
#include "mpdl/transport.hpp"

namespace mpdl {

struct MpdlConfig {
  double gamma = 0.1;
  double epsilon = 0.5;  // +inf: no noise
  dp::SensitivityMode sensitivity_mode = dp::SensitivityMode::kPerLayer;
  double lambda = 0.01;
  std::size_t folds = 5;         // K
  double threshold = 0.15;       // T
  std::size_t max_iters = 2;     // m
  std::size_t dual_epochs = 10;
  std::size_t central_epochs = 20;
  double lr = 0.1;
  /// Per-block gradient norm bound in central training (A's slice, B's slice,
  /// C's head); keeps heavy-noise runs finite. 0 disables.
  double central_grad_clip = 5.0;
  std::size_t batch_size = 32;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
  bool encrypt = true;
  unsigned he_bits = 1024;
  unsigned psi_bits = 1024;
  bool exact_duality_grad = false;

  /// Library-level checks. T is only required to be finite here; the CLI
  /// additionally rejects T <= 0.
  void validate() const;
  nlohmann::json to_json() const;
};

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based
  std::size_t fold = 0;       // validation fold index
  double v_c = 0.0;
  double v_d = 0.0;
  double dual_norm_start = 0.0;  // squared parameter norm of the dual pair
  double dual_norm_end = 0.0;
  double central_init_norm = 0.0;  // squared norm of the freshly initialised central model
  std::size_t supplement_rows = 0;
};

struct RunReport {
  MpdlConfig config;
  std::size_t n_co = 0, n_b_only = 0, n_a_only = 0, n_test = 0;
  std::size_t width_a = 0, width_b = 0;
  std::vector<IterationRecord> iterations;
  bool converged = false;
  double joint_t = 0.0;
  double dual_t = 0.0;
  double mpdl_a = 0.0;
  double inference_mae = 0.0;
  std::size_t messages = 0;

  nlohmann::json to_json() const;
  /// One row per iteration and per final metric.
  void write_csv(std::ostream& out) const;
};

double inference_mae(const Tensor2& raw, const Tensor2& inferred);

struct RunOptions {
  transport::Backend backend = transport::Backend::kInProcess;
  bool keep_audit = false;  // keep perturbed data and log densities for boundary checks
  /// Skip the final one-sided prediction step (MPDL_A).
  bool skip_unlabeled = false;
  /// Ids held by A to route through the one-sided prediction path after
  /// training; results land in MpdlRun::query_predictions.
  std::vector<EntityId> queries;
};

// Values the test harness needs to state the privacy predicates; never sent.
struct RunAudit {
  GammaSplit split;
  FeaturePartition partition;
  Tensor2 perturbed_a;  // rows in order of ids_a
  Tensor2 perturbed_b;
  std::vector<EntityId> ids_a;  // A's local rows (training partition then test)
  std::vector<EntityId> ids_b;
  std::vector<double> logp_b_of_x_b;  // B's log density of its own co rows
  std::vector<double> logp_a_of_x_a;
  std::uint64_t key_id_a = 0;
  std::uint64_t key_id_b = 0;
  std::uint64_t psi_first_msg = 0;
  std::uint64_t psi_last_msg = 0;
  std::vector<EntityId> psi_common;
};

struct MpdlRun {
  RunReport report;
  central::SplitCentralModel model_d;  // final M_D (returned model)
  central::SplitCentralModel model_c;  // final M_C
  dual::DualModelPair duals;
  transport::Transcript transcript;
  std::optional<RunAudit> audit;
  std::vector<int> query_predictions;
};

/// Full lifecycle: gamma split, feature partition, perturbation, blinded
/// alignment, key exchange, the dual cross-validation loop, final metrics.
/// With no assignment the feature columns are split at random from the seed.
MpdlRun run_mpdl(const PartyDataset& full, const std::optional<FeatureAssignment>& assignment,
                 const MpdlConfig& config, const RunOptions& options = {});

}  // namespace mpdl
