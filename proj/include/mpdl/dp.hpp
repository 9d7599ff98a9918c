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

// Feature-oriented differential privacy for a party's affine input layer.
//
// Each feature entry receives (1/L) * Lap(Delta/eps) once, before any protocol
// step. Values that cross a party boundary come from a PerturbedDataset, which
// only perturb_dataset can construct.

#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "mpdl/data.hpp"
#include "mpdl/rng.hpp"
#include "mpdl/tensor.hpp"

namespace mpdl::dp {

enum class SensitivityMode { kPerLayer, kPerNeuron };

struct DpConfig {
  double epsilon = 0.5;  // +inf disables noise
  std::size_t h0_width = 1;
  std::size_t sample_count = 1;  // L
  SensitivityMode sensitivity_mode = SensitivityMode::kPerLayer;

  bool noise_disabled() const { return epsilon == std::numeric_limits<double>::infinity(); }
  void validate() const;
};

/// Global sensitivity bound of the perturbed layer for features in [0, 1]:
/// 2 * |h0| * L per layer, 2 * L per neuron.
double sensitivity(const DpConfig& config);

/// Scale of the noise actually added to each entry, Delta / (L * eps).
double effective_scale(const DpConfig& config);

/// Inverse CDF: -scale * sign(u) * ln(1 - 2|u|) for u in (-1/2, 1/2).
double laplace_from_uniform(double u, double scale);
double laplace_sample(double scale, Rng& rng);

/// Laplace(0, scale) CDF.
double laplace_cdf(double x, double scale);

class PerturbedDataset {
 public:
  const std::vector<EntityId>& ids() const { return ids_; }
  const Tensor2& features() const { return features_; }
  const DpConfig& config() const { return config_; }
  /// Added noise per entry; audit use only.
  const Tensor2& noise() const { return noise_; }

  std::size_t size() const { return ids_.size(); }
  std::size_t width() const { return features_.cols; }
  /// Perturbed rows for the listed ids.
  Tensor2 rows_for(std::span<const EntityId> ids) const;
  bool contains(EntityId id) const;

 private:
  friend PerturbedDataset perturb_dataset(std::span<const EntityId>, const Tensor2&,
                                          const DpConfig&, Rng&);
  PerturbedDataset() = default;

  std::vector<EntityId> ids_;
  Tensor2 features_;
  DpConfig config_;
  Tensor2 noise_;
  std::unordered_map<EntityId, std::size_t> index_;
};

/// x + (1/L) * eta with eta ~ Lap(Delta/eps) i.i.d. per entry. Features must
/// lie in [0, 1]; perturbed values are not clamped.
PerturbedDataset perturb_dataset(std::span<const EntityId> ids, const Tensor2& features,
                                 const DpConfig& config, Rng& rng);

/// One-shot holder: the first call perturbs, later calls return the same
/// PerturbedDataset so noise is never redrawn within a run.
class PerturbationCache {
 public:
  const PerturbedDataset& get(const PartyDataset& data, const DpConfig& config, Rng& rng);
  bool filled() const { return cached_.has_value(); }

 private:
  std::optional<PerturbedDataset> cached_;
  const PartyDataset* source_ = nullptr;
};

/// CSV (sample_id, feature_index, noise). Test harnesses only.
void write_noise_audit(const PerturbedDataset& data, const std::filesystem::path& path);

}  // namespace mpdl::dp
