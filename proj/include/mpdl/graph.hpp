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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mpdl/data.hpp"
#include "mpdl/dual.hpp"
#include "mpdl/tensor.hpp"
#include "mpdl/transport.hpp"

namespace mpdl::graph {

using Edge = std::pair<std::size_t, std::size_t>;  // local node indices

struct PartyGraph {
  std::vector<EntityId> node_ids;
  std::vector<std::vector<std::size_t>> neighbors;  // sorted adjacency lists
  Tensor2 features;
  bool undirected = true;

  std::size_t size() const { return node_ids.size(); }
  void validate() const;
  Tensor2 dense_adjacency() const;
  std::vector<Edge> edges() const;  // u < v for undirected graphs
};

PartyGraph make_graph(std::vector<EntityId> ids, std::span<const Edge> edges, Tensor2 features,
                      bool undirected = true);

/// Edge list, one "src dst" pair per line; '#' starts a comment. Node ids are
/// mapped through index_of; unknown ids are an IoError.
std::vector<Edge> parse_edge_list(std::istream& in,
                                  const std::unordered_map<EntityId, std::size_t>& index_of);
std::vector<Edge> load_edge_list(const std::filesystem::path& path,
                                 const std::unordered_map<EntityId, std::size_t>& index_of);

/// M_rep = adj * feat; unknown adjacency blocks are expected as zeros.
Tensor2 node_representations(const Tensor2& adj, const Tensor2& feat);
Tensor2 node_representations(const PartyGraph& g, const Tensor2& feat);

struct ConfusionMatrix {
  Tensor2 m;
  Tensor2 inverse;
  double condition = 0.0;
};

inline constexpr double kMaxCondition = 1e8;

/// Entries uniform in [-1, 1]; redrawn while the condition number exceeds
/// kMaxCondition or m * m^-1 strays from I by more than 1e-10.
ConfusionMatrix make_confusion_matrix(std::size_t f, Rng& rng);
ConfusionMatrix confusion_from(const Tensor2& m);  // throws NumericError if ill-conditioned

std::size_t matrix_rank(const Tensor2& m, double tol = 1e-9);

/// A holds m_a (m x n), B holds m_b (n x f). B sends m_b * M^c, A returns
/// m_a * m_b * M^c, B removes the mask. Returns the product as held by B.
Tensor2 confusion_protocol(const Tensor2& m_a, const Tensor2& m_b, transport::Transport& t,
                           Rng& rng_b, const std::optional<ConfusionMatrix>& fixed = {});

struct PartialFeatures {
  Tensor2 a;  // n x d_a, rows valid where has_a
  Tensor2 b;  // n x d_b, rows valid where has_b
  std::vector<bool> has_a;
  std::vector<bool> has_b;
};

/// Fills each missing side with the dual model's inference from the present
/// side; observed rows are copied unchanged. Returns n x (d_a + d_b).
Tensor2 complete_feature_matrix(const dual::DualModelPair& pair, std::size_t trained_rounds,
                                const PartialFeatures& parts);

/// Mann-Whitney AUC with ties counted as one half.
double link_auc(std::span<const double> scores, std::span<const int> truth);

double cosine(std::span<const double> a, std::span<const double> b);

// Synthetic stochastic block model with community-correlated features; the B
// block is a noisy linear map of the A block.
struct SyntheticGraph {
  PartyGraph graph;  // features = [A | B]
  std::size_t width_a = 0;
  std::vector<int> community;
};

SyntheticGraph make_sbm_graph(std::size_t n, std::size_t communities, double p_in, double p_out,
                              std::size_t d_a, std::size_t d_b, std::uint64_t seed);

struct LinkTaskConfig {
  double gamma = 0.1;
  double holdout_fraction = 0.1;
  std::size_t dual_epochs = 10;
  double lr = 0.1;
  std::size_t batch_size = 32;
  double lambda = 0.01;
  bool encrypt = true;
  unsigned he_bits = 1024;
  std::uint64_t seed = 0;
};

struct LinkTaskResult {
  double auc = 0.0;           // representations from dual-completed features
  double auc_raw = 0.0;       // representations from the true full features
  double completion_mse = 0.0;
  std::size_t co_nodes = 0;
  std::size_t test_pairs = 0;
};

/// Feature completion by dual models trained on co-occurring nodes, node
/// representations through the confusion protocol, cosine link scores.
LinkTaskResult run_link_task(const PartyGraph& g, std::size_t width_a, const LinkTaskConfig& cfg);

}  // namespace mpdl::graph
