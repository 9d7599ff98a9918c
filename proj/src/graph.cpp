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

#include "mpdl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "mpdl/density.hpp"
#include "mpdl/dp.hpp"
#include "mpdl/errors.hpp"
#include "mpdl/paillier.hpp"

namespace mpdl::graph {

using transport::ActorId;
using transport::MessageKind;

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Tensor2& t) {
  return {t.data.data(), static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols)};
}

Tensor2 from_eigen(const Eigen::MatrixXd& m) {
  Tensor2 out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
  }
  return out;
}

}  // namespace

void PartyGraph::validate() const {
  if (neighbors.size() != node_ids.size()) throw DimensionError("graph: adjacency size");
  if (features.rows != node_ids.size()) throw DimensionError("graph: feature rows");
  for (std::size_t u = 0; u < neighbors.size(); ++u) {
    for (std::size_t v : neighbors[u]) {
      if (v >= size()) throw DimensionError("graph: neighbor index out of range");
      if (undirected && !std::binary_search(neighbors[v].begin(), neighbors[v].end(), u)) {
        throw DomainError("graph: undirected adjacency is not symmetric");
      }
    }
  }
}

Tensor2 PartyGraph::dense_adjacency() const {
  Tensor2 adj(size(), size());
  for (std::size_t u = 0; u < size(); ++u) {
    for (std::size_t v : neighbors[u]) adj(u, v) = 1.0;
  }
  return adj;
}

std::vector<Edge> PartyGraph::edges() const {
  std::vector<Edge> out;
  for (std::size_t u = 0; u < size(); ++u) {
    for (std::size_t v : neighbors[u]) {
      if (!undirected || u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

PartyGraph make_graph(std::vector<EntityId> ids, std::span<const Edge> edges, Tensor2 features,
                      bool undirected) {
  PartyGraph g;
  g.node_ids = std::move(ids);
  g.features = std::move(features);
  g.undirected = undirected;
  g.neighbors.assign(g.node_ids.size(), {});
  for (auto [u, v] : edges) {
    if (u >= g.size() || v >= g.size()) throw DimensionError("edge endpoint out of range");
    if (u == v) continue;
    g.neighbors[u].push_back(v);
    if (undirected) g.neighbors[v].push_back(u);
  }
  for (auto& n : g.neighbors) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  g.validate();
  return g;
}

std::vector<Edge> parse_edge_list(std::istream& in,
                                  const std::unordered_map<EntityId, std::size_t>& index_of) {
  std::vector<Edge> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    EntityId s, d;
    if (!(ls >> s)) continue;  // blank
    std::string rest;
    if (!(ls >> d) || (ls >> rest)) {
      throw IoError("edge list line " + std::to_string(lineno) + ": expected 'src dst'");
    }
    auto is = index_of.find(s), id = index_of.find(d);
    if (is == index_of.end() || id == index_of.end()) {
      throw IoError("edge list line " + std::to_string(lineno) + ": unknown node id");
    }
    out.emplace_back(is->second, id->second);
  }
  return out;
}

std::vector<Edge> load_edge_list(const std::filesystem::path& path,
                                 const std::unordered_map<EntityId, std::size_t>& index_of) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open edge list " + path.string());
  return parse_edge_list(in, index_of);
}

Tensor2 node_representations(const Tensor2& adj, const Tensor2& feat) {
  if (adj.cols != feat.rows) throw DimensionError("node_representations: adj cols != feat rows");
  return matmul(adj, feat);
}

Tensor2 node_representations(const PartyGraph& g, const Tensor2& feat) {
  if (feat.rows != g.size()) throw DimensionError("node_representations: feature rows");
  Tensor2 out(g.size(), feat.cols);
  for (std::size_t u = 0; u < g.size(); ++u) {
    auto dst = out.row(u);
    for (std::size_t v : g.neighbors[u]) {
      auto src = feat.row(v);
      for (std::size_t j = 0; j < feat.cols; ++j) dst[j] += src[j];
    }
  }
  return out;
}

ConfusionMatrix confusion_from(const Tensor2& m) {
  if (m.rows != m.cols || m.rows == 0) throw DimensionError("confusion matrix must be square");
  const Eigen::MatrixXd e = view(m);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(e);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  ConfusionMatrix c;
  c.condition = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
  if (!(c.condition <= kMaxCondition)) throw NumericError("confusion matrix is ill-conditioned");
  const Eigen::MatrixXd inv = e.partialPivLu().inverse();
  const double resid = (e * inv - Eigen::MatrixXd::Identity(e.rows(), e.cols())).cwiseAbs().maxCoeff();
  if (!(resid <= 1e-10)) throw NumericError("confusion matrix inverse is inaccurate");
  c.m = m;
  c.inverse = from_eigen(inv);
  return c;
}

ConfusionMatrix make_confusion_matrix(std::size_t f, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Tensor2 m(f, f);
    for (double& v : m.data) v = 2.0 * uniform01(rng) - 1.0;
    try {
      return confusion_from(m);
    } catch (const NumericError&) {
      // singular or inaccurate; draw again
    }
  }
  throw NumericError("could not draw a well-conditioned confusion matrix");
}

std::size_t matrix_rank(const Tensor2& m, double tol) {
  if (m.empty()) return 0;
  const Eigen::MatrixXd e = view(m);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(e);
  const auto& sv = svd.singularValues();
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) r += sv(i) > tol * sv(0);
  return r;
}

Tensor2 confusion_protocol(const Tensor2& m_a, const Tensor2& m_b, transport::Transport& t,
                           Rng& rng_b, const std::optional<ConfusionMatrix>& fixed) {
  if (m_a.cols != m_b.rows) throw DimensionError("confusion_protocol: inner dimensions differ");
  if (m_a.cols <= m_a.rows) {
    throw DomainError("confusion_protocol: needs n > m, the rank argument fails otherwise");
  }
  transport::Endpoint ea(t, ActorId::kA), eb(t, ActorId::kB);
  // B: mask its factor
  const ConfusionMatrix mc = fixed ? *fixed : make_confusion_matrix(m_b.cols, rng_b);
  if (mc.m.rows != m_b.cols) throw DimensionError("confusion matrix width");
  eb.send(ActorId::kA, MessageKind::kMatrixBlock, transport::encode_matrix(matmul(m_b, mc.m)));
  // A: premultiply by its own factor
  {
    const Tensor2 masked =
        transport::decode_matrix(ea.expect(ActorId::kB, MessageKind::kMatrixBlock).payload);
    ea.send(ActorId::kB, MessageKind::kMatrixBlock, transport::encode_matrix(matmul(m_a, masked)));
  }
  // B: unmask
  const Tensor2 product =
      transport::decode_matrix(eb.expect(ActorId::kA, MessageKind::kMatrixBlock).payload);
  return matmul(product, mc.inverse);
}

Tensor2 complete_feature_matrix(const dual::DualModelPair& pair, std::size_t trained_rounds,
                                const PartialFeatures& parts) {
  if (trained_rounds == 0) throw DomainError("feature completion needs a trained dual pair");
  const std::size_t n = parts.has_a.size();
  if (parts.has_b.size() != n || parts.a.rows != n || parts.b.rows != n) {
    throw DimensionError("partial feature blocks disagree on node count");
  }
  pair.validate(parts.a.cols, parts.b.cols);
  std::vector<std::size_t> need_b, need_a;
  for (std::size_t i = 0; i < n; ++i) {
    if (!parts.has_a[i] && !parts.has_b[i]) throw DomainError("node has neither feature side");
    if (!parts.has_b[i]) need_b.push_back(i);
    if (!parts.has_a[i]) need_a.push_back(i);
  }
  Tensor2 a = parts.a, b = parts.b;
  if (!need_b.empty()) {
    const Tensor2 inf = dual::dual_infer(pair.theta_ab, gather_rows(parts.a, need_b));
    for (std::size_t k = 0; k < need_b.size(); ++k) {
      std::copy(inf.row(k).begin(), inf.row(k).end(), b.row(need_b[k]).begin());
    }
  }
  if (!need_a.empty()) {
    const Tensor2 inf = dual::dual_infer(pair.theta_ba, gather_rows(parts.b, need_a));
    for (std::size_t k = 0; k < need_a.size(); ++k) {
      std::copy(inf.row(k).begin(), inf.row(k).end(), a.row(need_a[k]).begin());
    }
  }
  return hconcat(a, b);
}

double link_auc(std::span<const double> scores, std::span<const int> truth) {
  if (scores.size() != truth.size()) throw DimensionError("link_auc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::uint64_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
    if (truth[i] != 0 && truth[i] != 1) throw DomainError("link_auc: truth must be 0/1");
    if (!std::isfinite(scores[i])) throw NumericError("link_auc: non-finite score");
    (truth[i] ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) throw DomainError("link_auc: both classes must be present");
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return scores[x] < scores[y]; });
  // half-unit counts keep the result exact
  std::uint64_t half = 0, neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t p = 0, q = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (truth[order[j]] ? p : q) += 1;
      ++j;
    }
    half += 2 * p * neg_below + p * q;
    neg_below += q;
    i = j;
  }
  return static_cast<double>(half) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

SyntheticGraph make_sbm_graph(std::size_t n, std::size_t communities, double p_in, double p_out,
                              std::size_t d_a, std::size_t d_b, std::uint64_t seed) {
  if (communities == 0 || n < communities || d_a == 0 || d_b == 0) {
    throw DomainError("sbm: bad sizes");
  }
  auto rng = make_rng(seed, "sbm");
  SyntheticGraph s;
  s.width_a = d_a;
  for (std::size_t i = 0; i < n; ++i) s.community.push_back(static_cast<int>(i % communities));
  shuffle(s.community, rng);

  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = s.community[u] == s.community[v] ? p_in : p_out;
      if (uniform01(rng) < p) edges.emplace_back(u, v);
    }
  }

  Tensor2 centers(communities, d_a);
  for (double& v : centers.data) v = uniform01(rng);
  Tensor2 mix(d_b, d_a);
  for (double& v : mix.data) v = 2.0 * uniform01(rng) - 1.0;
  Tensor2 x(n, d_a + d_b);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d_a; ++j) {
      x(i, j) = centers(static_cast<std::size_t>(s.community[i]), j) + 0.15 * (uniform01(rng) - 0.5);
    }
    for (std::size_t k = 0; k < d_b; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d_a; ++j) acc += mix(k, j) * x(i, j);
      x(i, d_a + k) = acc + 0.02 * (uniform01(rng) - 0.5);
    }
  }
  normalize_min_max(x);
  std::vector<EntityId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i + 1;
  s.graph = make_graph(std::move(ids), edges, std::move(x));
  return s;
}

LinkTaskResult run_link_task(const PartyGraph& g, std::size_t width_a, const LinkTaskConfig& cfg) {
  g.validate();
  const std::size_t n = g.size();
  if (width_a == 0 || width_a >= g.features.cols) throw DomainError("link task: bad width_a");
  if (n < 4) throw DomainError("link task: graph too small");
  const std::size_t width_b = g.features.cols - width_a;
  LinkTaskResult res;

  // held-out positive edges and an equal number of sampled non-edges
  auto edge_rng = make_rng(cfg.seed, "link-holdout");
  auto all_edges = g.edges();
  if (all_edges.size() < 2) throw DomainError("link task: too few edges");
  shuffle(all_edges, edge_rng);
  const std::size_t holdout = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(cfg.holdout_fraction * all_edges.size())));
  const std::vector<Edge> test_pos(all_edges.begin(), all_edges.begin() + holdout);
  const std::vector<Edge> train_edges(all_edges.begin() + holdout, all_edges.end());
  std::set<Edge> taken;
  std::vector<Edge> test_neg;
  const std::size_t max_pairs = n * (n - 1) / 2;
  if (all_edges.size() + holdout > max_pairs) throw DomainError("link task: graph too dense");
  while (test_neg.size() < holdout) {
    std::size_t u = uniform_below(edge_rng, n), v = uniform_below(edge_rng, n);
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (std::binary_search(g.neighbors[u].begin(), g.neighbors[u].end(), v)) continue;
    if (!taken.insert({u, v}).second) continue;
    test_neg.emplace_back(u, v);
  }
  res.test_pairs = 2 * holdout;
  const PartyGraph train_graph = make_graph(g.node_ids, train_edges, g.features, g.undirected);

  // which node has which feature side
  FeaturePartition part;
  {
    FeatureAssignment assign;
    assign.side.assign(g.features.cols, Side::kB);
    std::fill(assign.side.begin(), assign.side.begin() + static_cast<std::ptrdiff_t>(width_a), Side::kA);
    part = partition_features(g.features, assign);
  }
  const auto split = split_by_gamma(g.node_ids, {cfg.gamma, 0.0, cfg.seed});
  if (split.co.empty()) throw DomainError("link task: no co-occurring nodes at this gamma");
  res.co_nodes = split.co.size();
  const auto index = index_by_id(g.node_ids);
  PartialFeatures parts{Tensor2(n, width_a), Tensor2(n, width_b), std::vector<bool>(n, false),
                        std::vector<bool>(n, false)};
  for (auto* ids : {&split.co, &split.a_only}) {
    for (EntityId id : *ids) parts.has_a[index.at(id)] = true;
  }
  for (auto* ids : {&split.co, &split.b_only}) {
    for (EntityId id : *ids) parts.has_b[index.at(id)] = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (parts.has_a[i]) std::copy(part.a.row(i).begin(), part.a.row(i).end(), parts.a.row(i).begin());
    if (parts.has_b[i]) std::copy(part.b.row(i).begin(), part.b.row(i).end(), parts.b.row(i).begin());
  }

  // dual training on co-occurring nodes
  transport::Transport t;
  std::vector<EntityId> local_a, local_b;
  std::vector<std::size_t> rows_a, rows_b;
  for (std::size_t i = 0; i < n; ++i) {
    if (parts.has_a[i]) {
      local_a.push_back(g.node_ids[i]);
      rows_a.push_back(i);
    }
    if (parts.has_b[i]) {
      local_b.push_back(g.node_ids[i]);
      rows_b.push_back(i);
    }
  }
  dp::DpConfig off;
  off.epsilon = std::numeric_limits<double>::infinity();
  off.sample_count = n;
  auto noise_rng = make_rng(cfg.seed, "link-dp");
  const auto data_a = dp::perturb_dataset(local_a, gather_rows(part.a, rows_a), off, noise_rng);
  const auto data_b = dp::perturb_dataset(local_b, gather_rows(part.b, rows_b), off, noise_rng);
  const density::KdeModel kde_a(data_a.features()), kde_b(data_b.features());

  dual::DualParty a, b;
  a.self = ActorId::kA;
  b.self = ActorId::kB;
  auto init = make_rng(cfg.seed, "link-dual");
  auto pair = dual::make_dual_pair(width_a, width_b, cfg.lambda, cfg.lambda, init);
  a.model = pair.theta_ab;
  b.model = pair.theta_ba;
  a.lambda = b.lambda = cfg.lambda;
  a.data = &data_a;
  b.data = &data_b;
  a.kde = &kde_a;
  b.kde = &kde_b;
  a.rng = make_rng(cfg.seed, "link-he-A");
  b.rng = make_rng(cfg.seed, "link-he-B");
  if (cfg.encrypt) {
    auto ka = make_rng(cfg.seed, "link-key-A"), kb = make_rng(cfg.seed, "link-key-B");
    a.keys = he::keygen(cfg.he_bits, ka);
    b.keys = he::keygen(cfg.he_bits, kb);
    a.peer_key = b.keys->pub;
    b.peer_key = a.keys->pub;
  }
  dual::DualConfig dcfg;
  dcfg.lr = cfg.lr;
  dcfg.batch_size = cfg.batch_size;
  dcfg.encrypt = cfg.encrypt;
  std::vector<EntityId> co = split.co;
  std::sort(co.begin(), co.end());
  std::uint64_t tag = 0;
  dual::run_dual_training(a, b, co, cfg.dual_epochs, cfg.seed, t, dcfg, tag);
  pair.theta_ab = a.model;
  pair.theta_ba = b.model;

  const Tensor2 completed = complete_feature_matrix(pair, tag, parts);
  {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < g.features.cols; ++j) {
        const bool missing = j < width_a ? !parts.has_a[i] : !parts.has_b[i];
        if (!missing) continue;
        const double d = completed(i, j) - g.features(i, j);
        acc += d * d;
        ++count;
      }
    }
    res.completion_mse = count ? acc / static_cast<double>(count) : 0.0;
  }

  // representations: A's block locally, B's block through the confusion
  // protocol in row blocks of fewer than n rows
  auto score_with = [&](const Tensor2& feat, bool via_protocol) {
    Tensor2 feat_a(n, width_a), feat_b(n, width_b);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < width_a; ++j) feat_a(i, j) = feat(i, j);
      for (std::size_t j = 0; j < width_b; ++j) feat_b(i, j) = feat(i, width_a + j);
    }
    const Tensor2 rep_a = node_representations(train_graph, feat_a);
    Tensor2 rep_b;
    if (via_protocol) {
      const Tensor2 adj = train_graph.dense_adjacency();
      auto mask_rng = make_rng(cfg.seed, "link-confusion");
      const std::size_t block = std::max<std::size_t>(1, (n - 1) / 2);
      for (std::size_t start = 0; start < n; start += block) {
        std::vector<std::size_t> rows;
        for (std::size_t r = start; r < std::min(n, start + block); ++r) rows.push_back(r);
        rep_b = vconcat(rep_b, confusion_protocol(gather_rows(adj, rows), feat_b, t, mask_rng));
      }
    } else {
      rep_b = node_representations(train_graph, feat_b);
    }
    const Tensor2 rep = hconcat(rep_a, rep_b);
    std::vector<double> scores;
    std::vector<int> truth;
    for (auto [u, v] : test_pos) {
      scores.push_back(cosine(rep.row(u), rep.row(v)));
      truth.push_back(1);
    }
    for (auto [u, v] : test_neg) {
      scores.push_back(cosine(rep.row(u), rep.row(v)));
      truth.push_back(0);
    }
    return link_auc(scores, truth);
  };
  res.auc = score_with(completed, true);
  res.auc_raw = score_with(g.features, false);
  return res;
}

}  // namespace mpdl::graph
