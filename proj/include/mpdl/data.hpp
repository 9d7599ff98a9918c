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

// Party datasets: loading and min-max normalization, vertical feature
// partitioning, the co-occurrence split controlled by gamma, and K-fold
// splitting of co-occurrence ids.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mpdl/rng.hpp"
#include "mpdl/tensor.hpp"

namespace mpdl {

using EntityId = std::uint64_t;

struct PartyDataset {
  std::vector<EntityId> ids;
  Tensor2 features;                       // entries in [0, 1]
  std::optional<std::vector<int>> labels;  // class indices, label holder only
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;

  std::size_t size() const { return ids.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  void validate() const;
};

std::unordered_map<EntityId, std::size_t> index_by_id(std::span<const EntityId> ids);

/// Rows of ds (features and labels) for the listed ids, in that order.
PartyDataset select_rows(const PartyDataset& ds, std::span<const EntityId> ids);

struct CsvSchema {
  std::string id_column;     // empty: ids are 1-based row numbers
  std::string label_column;  // empty: unlabeled
  char delimiter = ',';
  std::vector<std::string> ignore_columns;
};

/// Header row required. Numeric columns are min-max normalized, non-numeric
/// columns one-hot expanded (columns named "<col>=<value>").
PartyDataset parse_csv(std::istream& in, const CsvSchema& schema);
PartyDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// IDX image file (magic 0x00000803, unsigned bytes) with an optional IDX
/// label file (0x00000801). Pixels are divided by 255.
PartyDataset load_idx(const std::filesystem::path& images,
                      const std::optional<std::filesystem::path>& labels = {},
                      std::size_t max_items = 0);

/// Per-column min-max scaling into [0, 1] in place. Constant columns become 0.
/// Returns the indices of constant columns.
std::vector<std::size_t> normalize_min_max(Tensor2& features);

enum class Side : std::uint8_t { kA = 0, kB = 1 };

struct FeatureAssignment {
  std::vector<Side> side;  // one entry per original column
};

/// Shuffled columns, the first floor(n/2) to A and the rest to B.
FeatureAssignment random_assignment(std::size_t columns, std::uint64_t seed);

/// Image split: the bottom a_rows of each height x width image to A, the
/// remaining rows to B.
FeatureAssignment image_region_assignment(std::size_t height, std::size_t width,
                                          std::size_t a_rows);

struct FeaturePartition {
  Tensor2 a;
  Tensor2 b;
  std::vector<std::size_t> a_columns;  // original column index of each A column
  std::vector<std::size_t> b_columns;
};

FeaturePartition partition_features(const Tensor2& features,
                                    const FeatureAssignment& assignment);
Tensor2 reassemble(const FeaturePartition& part);

struct SplitSpec {
  double gamma = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct GammaSizes {
  std::size_t co = 0;
  std::size_t b_only = 0;
  std::size_t a_only = 0;
};

/// |D_C| = floor(n gamma), |D_B| = floor(n (0.5 - gamma/2)), |D_A| the rest.
GammaSizes gamma_sizes(std::size_t n, double gamma);

struct GammaSplit {
  std::vector<EntityId> co;      // D_C, both parties, labels at B
  std::vector<EntityId> b_only;  // D_B, B features and labels
  std::vector<EntityId> a_only;  // D_A, A features only
  std::vector<EntityId> test;    // both sides and labels
};

/// Seeded shuffle, test fraction carved first, then the gamma ranges.
GammaSplit split_by_gamma(std::span<const EntityId> ids, const SplitSpec& spec);

/// k disjoint folds of a seeded shuffle; sizes differ by at most one.
std::vector<std::vector<EntityId>> kfold_split(std::span<const EntityId> ids,
                                               std::size_t k, std::uint64_t seed);

nlohmann::json split_manifest(const GammaSplit& split, const SplitSpec& spec);

}  // namespace mpdl
