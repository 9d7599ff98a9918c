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

#include "mpdl/dp.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace mpdl::dp {

void DpConfig::validate() const {
  if (!(epsilon > 0.0)) throw DomainError("DpConfig: epsilon must be positive");
  if (h0_width < 1) throw DomainError("DpConfig: h0_width must be at least 1");
  if (sample_count < 1) throw DomainError("DpConfig: sample_count must be at least 1");
}

double sensitivity(const DpConfig& config) {
  config.validate();
  const double l = static_cast<double>(config.sample_count);
  if (config.sensitivity_mode == SensitivityMode::kPerNeuron) return 2.0 * l;
  return 2.0 * static_cast<double>(config.h0_width) * l;
}

double effective_scale(const DpConfig& config) {
  if (config.noise_disabled()) return 0.0;
  return sensitivity(config) / (static_cast<double>(config.sample_count) * config.epsilon);
}

double laplace_from_uniform(double u, double scale) {
  if (!(scale > 0.0)) throw DomainError("laplace: scale must be positive");
  if (!(u > -0.5 && u < 0.5)) throw DomainError("laplace: u must lie in (-1/2, 1/2)");
  if (u == 0.0) return 0.0;
  const double sign = u < 0.0 ? -1.0 : 1.0;
  return -scale * sign * std::log1p(-2.0 * std::abs(u));
}

double laplace_sample(double scale, Rng& rng) {
  if (!(scale > 0.0)) throw DomainError("laplace: scale must be positive");
  double u;
  do {
    u = uniform01(rng) - 0.5;
  } while (u == -0.5);
  return laplace_from_uniform(u, scale);
}

double laplace_cdf(double x, double scale) {
  if (x < 0.0) return 0.5 * std::exp(x / scale);
  return 1.0 - 0.5 * std::exp(-x / scale);
}

Tensor2 PerturbedDataset::rows_for(std::span<const EntityId> ids) const {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (EntityId id : ids) {
    auto it = index_.find(id);
    if (it == index_.end()) {
      throw DomainError("PerturbedDataset: id " + std::to_string(id) + " not held");
    }
    rows.push_back(it->second);
  }
  return gather_rows(features_, rows);
}

bool PerturbedDataset::contains(EntityId id) const { return index_.contains(id); }

PerturbedDataset perturb_dataset(std::span<const EntityId> ids, const Tensor2& features,
                                 const DpConfig& config, Rng& rng) {
  config.validate();
  if (ids.size() != features.rows) {
    throw DimensionError("perturb_dataset: id count differs from feature rows");
  }
  for (double v : features.data) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError("perturb_dataset: features must lie in [0, 1]");
    }
  }
  PerturbedDataset out;
  out.ids_.assign(ids.begin(), ids.end());
  out.features_ = features;
  out.config_ = config;
  out.noise_ = Tensor2(features.rows, features.cols);
  out.index_ = index_by_id(ids);
  if (!config.noise_disabled()) {
    const double scale = sensitivity(config) / config.epsilon;
    const double inv_l = 1.0 / static_cast<double>(config.sample_count);
    for (std::size_t i = 0; i < out.features_.data.size(); ++i) {
      const double eta = inv_l * laplace_sample(scale, rng);
      out.noise_.data[i] = eta;
      out.features_.data[i] += eta;
    }
  }
  return out;
}

const PerturbedDataset& PerturbationCache::get(const PartyDataset& data,
                                               const DpConfig& config, Rng& rng) {
  if (cached_) {
    if (source_ != &data) {
      throw DomainError("PerturbationCache: already holds another dataset");
    }
    return *cached_;
  }
  cached_ = perturb_dataset(data.ids, data.features, config, rng);
  source_ = &data;
  return *cached_;
}

void write_noise_audit(const PerturbedDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_id,feature_index,noise\n" << std::setprecision(17);
  const auto& noise = data.noise();
  for (std::size_t r = 0; r < noise.rows; ++r) {
    for (std::size_t c = 0; c < noise.cols; ++c) {
      out << data.ids()[r] << ',' << c << ',' << noise(r, c) << '\n';
    }
  }
}

}  // namespace mpdl::dp
