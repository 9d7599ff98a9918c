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

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "mpdl/central.hpp"
#include "mpdl/cli.hpp"
#include "mpdl/data.hpp"
#include "mpdl/density.hpp"
#include "mpdl/dp.hpp"
#include "mpdl/dual.hpp"
#include "mpdl/graph.hpp"
#include "mpdl/nn.hpp"
#include "mpdl/paillier.hpp"
#include "mpdl/psi.hpp"
#include "mpdl/transport.hpp"

namespace mpdl::cli {

namespace {

Tensor2 random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor2 m(r, c);
  for (double& v : m.data) v = lo + (hi - lo) * uniform01(rng);
  return m;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

bool check_nn() {
  auto rng = make_rng(1, "selftest-nn");
  const std::size_t widths[] = {4, 5, 3};
  auto model = nn::make_mlp(widths, nn::Activation::kSigmoid, nn::Activation::kIdentity, rng);
  const Tensor2 x = random_matrix(5, 4, rng);
  const Tensor2 y = random_matrix(5, 3, rng);
  auto [out, cache] = nn::mlp_forward(model, x);
  // straight-line oracle
  for (std::size_t r = 0; r < 5; ++r) {
    std::vector<double> h(5);
    for (std::size_t j = 0; j < 5; ++j) {
      double s = model.layers[0].bias[j];
      for (std::size_t k = 0; k < 4; ++k) s += model.layers[0].weights(j, k) * x(r, k);
      h[j] = 1.0 / (1.0 + std::exp(-s));
    }
    for (std::size_t j = 0; j < 3; ++j) {
      double s = model.layers[1].bias[j];
      for (std::size_t k = 0; k < 5; ++k) s += model.layers[1].weights(j, k) * h[k];
      if (std::abs(s - out(r, j)) > 1e-12) return false;
    }
  }
  const auto loss = nn::loss_eval(nn::LossKind::kMse, out, y);
  const auto bp = nn::backprop_from_output_grad(model, cache, loss.grad);
  const double step = 1e-5;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    for (std::size_t i = 0; i < model.layers[l].weights.data.size(); ++i) {
      auto plus = model, minus = model;
      plus.layers[l].weights.data[i] += step;
      minus.layers[l].weights.data[i] -= step;
      const double fd = (nn::loss_eval(nn::LossKind::kMse, nn::mlp_forward(plus, x).first, y).value -
                         nn::loss_eval(nn::LossKind::kMse, nn::mlp_forward(minus, x).first, y).value) /
                        (2 * step);
      if (rel_err(fd, bp.layers[l].weights.data[i]) > 1e-4) return false;
    }
  }
  return true;
}

bool check_dp() {
  dp::DpConfig c;
  c.h0_width = 10;
  c.sample_count = 100;
  if (dp::sensitivity(c) != 2000.0) return false;
  c.sensitivity_mode = dp::SensitivityMode::kPerNeuron;
  if (dp::sensitivity(c) != 200.0) return false;
  c.epsilon = 2.0;
  if (std::abs(dp::effective_scale(c) - 1.0) > 1e-15) return false;
  // KS against the analytic CDF
  auto rng = make_rng(2, "selftest-dp");
  std::vector<double> draws(10000);
  for (double& d : draws) d = dp::laplace_sample(0.7, rng);
  std::sort(draws.begin(), draws.end());
  double dmax = 0.0;
  const double n = static_cast<double>(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double f = dp::laplace_cdf(draws[i], 0.7);
    dmax = std::max({dmax, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return dmax < 1.628 / std::sqrt(n);  // alpha = 0.01
}

bool check_he() {
  auto rng = make_rng(3, "selftest-he");
  const auto kp = he::keygen(512, rng);
  const auto& n = kp.pub.n;
  auto enc = [&](double v) { return he::encrypt(kp.pub, he::encode(v, 40, n), rng); };
  auto dec = [&](const he::Ciphertext& c, int s) { return he::decode(he::decrypt(kp, c), s, n); };
  if (dec(he::add_cipher(kp.pub, enc(3.25), enc(-1.25)), 40) != 2.0) return false;
  if (dec(he::mul_plain(kp.pub, enc(2.0), he::encode(-0.5, 40, n)), 80) != -1.0) return false;
  for (int i = 0; i < 50; ++i) {
    const double a = 20.0 * uniform01(rng) - 10.0, b = 20.0 * uniform01(rng) - 10.0;
    if (std::abs(dec(he::add_cipher(kp.pub, enc(a), enc(b)), 40) - (a + b)) > 0x1p-39) return false;
    if (std::abs(dec(he::mul_plain(kp.pub, enc(a), he::encode(b, 40, n)), 80) - a * b) > 0x1p-35) {
      return false;
    }
  }
  return true;
}

bool check_density() {
  auto rng = make_rng(4, "selftest-kde");
  const Tensor2 support = random_matrix(10, 2, rng, 0.0, 1.0);
  const density::KdeModel kde(support, 0.3);
  const double pi = std::acos(-1.0);
  for (int t = 0; t < 20; ++t) {
    const std::vector<double> x{uniform01(rng), uniform01(rng)};
    double naive = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < 2; ++j) d2 += (x[j] - support(i, j)) * (x[j] - support(i, j));
      naive += std::exp(-d2 / (2 * 0.09)) / (2 * pi * 0.09);
    }
    naive /= 10.0;
    if (rel_err(std::exp(density::log_density(kde, x)), naive) > 1e-10) return false;
    const auto g = density::grad_log_density(kde, x);
    for (std::size_t j = 0; j < 2; ++j) {
      auto p = x, m = x;
      p[j] += 1e-5;
      m[j] -= 1e-5;
      const double fd = (density::log_density(kde, p) - density::log_density(kde, m)) / 2e-5;
      if (rel_err(fd, g[j]) > 1e-4) return false;
    }
  }
  return true;
}

bool check_data() {
  const auto s = gamma_sizes(1000, 0.1);
  if (s.co != 100 || s.b_only != 450 || s.a_only != 450) return false;
  const auto t = gamma_sizes(1000, 0.8);
  if (t.co != 800 || t.b_only != 100 || t.a_only != 100) return false;
  std::vector<EntityId> ids(11);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i + 1;
  const auto folds = kfold_split(ids, 5, 9);
  std::multiset<std::size_t> sizes;
  for (const auto& f : folds) sizes.insert(f.size());
  return sizes == std::multiset<std::size_t>{2, 2, 2, 2, 3};
}

bool check_psi() {
  auto rng = make_rng(5, "selftest-psi");
  std::vector<EntityId> a, b;
  std::set<EntityId> sa, sb;
  for (EntityId id = 1; id <= 60; ++id) {
    if (uniform01(rng) < 0.6) a.push_back(id), sa.insert(id);
    if (uniform01(rng) < 0.6) b.push_back(id), sb.insert(id);
  }
  std::vector<EntityId> expect;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(expect));
  transport::Transport t;
  auto ra = make_rng(5, "psi-a"), rb = make_rng(5, "psi-b");
  const auto res = psi::blinded_intersection(a, b, t, ra, rb, {512, 4});
  return res.common_at_a == expect && res.common_at_b == expect;
}

bool check_transport() {
  auto rng = make_rng(6, "selftest-frame");
  for (int i = 0; i < 200; ++i) {
    transport::ProtocolMessage m;
    m.msg_id = rng();
    m.sender = static_cast<transport::ActorId>(uniform_below(rng, 3));
    m.receiver = static_cast<transport::ActorId>(uniform_below(rng, 3));
    m.kind = transport::MessageKind::kMatrixBlock;
    m.payload = transport::encode_matrix(random_matrix(1 + uniform_below(rng, 4), 1 + uniform_below(rng, 4), rng));
    if (uniform01(rng) < 0.5) m.batch_tag = rng();
    if (!(transport::decode_frame(transport::encode_frame(m)) == m)) return false;
  }
  return true;
}

bool check_dual() {
  // lambda = 0 leaves the alignment gradient untouched
  auto rng = make_rng(7, "selftest-dual");
  const Tensor2 g = random_matrix(4, 3, rng), align = random_matrix(4, 3, rng);
  const std::vector<double> lp{0.1, 0.2, 0.3, 0.4}, lq{0.5, 0.1, 0.0, 1.0}, cross{0.2, 0.2, 0.1, 0.0};
  if (!(dual::dual_output_grad(g, lp, lq, cross, align, 0.0) == align)) return false;
  const std::vector<double> z{0, 0, 0, 0};
  const std::vector<double> one{1};
  const std::vector<double> zero{0};
  return dual::dual_loss(zero, zero, one, zero) == 1.0 &&
         dual::dual_loss(lp, lp, lq, lq) == 0.0 && z.size() == 4;
}

bool check_central() {
  auto rng = make_rng(8, "selftest-central");
  auto model = central::make_split_model(3, 4, 2, rng);
  const Tensor2 xa = random_matrix(6, 3, rng, 0, 1), xb = random_matrix(6, 4, rng, 0, 1);
  const Tensor2 za = central::party_forward(model.local_a, xa);
  const Tensor2 zb = central::party_forward(model.local_b, xb);
  const Tensor2 x = hconcat(xa, xb);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t j = 0; j < model.head.hidden(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += model.local_a.weights(j, k) * x(r, k);
      double s2 = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s2 += model.local_b.weights(j, k) * x(r, 3 + k);
      if (std::abs(za(r, j) - s) > 1e-12 || std::abs(zb(r, j) - s2) > 1e-12) return false;
    }
  }
  return true;
}

bool check_graph() {
  auto rng = make_rng(9, "selftest-graph");
  const Tensor2 ma = random_matrix(20, 30, rng), mb = random_matrix(30, 6, rng);
  transport::Transport t;
  const Tensor2 got = graph::confusion_protocol(ma, mb, t, rng);
  const Tensor2 want = matmul(ma, mb);
  for (std::size_t i = 0; i < got.data.size(); ++i) {
    if (std::abs(got.data[i] - want.data[i]) > 1e-8) return false;
  }
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + uniform_below(rng, 20);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(uniform_below(rng, 5));
      y[i] = static_cast<int>(i % 2);
    }
    double num = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (y[i] != 1 || y[j] != 0) continue;
        pairs += 1.0;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
    if (graph::link_auc(s, y) != num / pairs) return false;
  }
  return true;
}

}  // namespace

int selftest(std::ostream& out) {
  const std::vector<std::pair<const char*, std::function<bool()>>> checks{
      {"nn-core", check_nn},     {"privacy-dp", check_dp},   {"he-paillier", check_he},
      {"density", check_density}, {"alignment-data", check_data}, {"psi", check_psi},
      {"transport", check_transport}, {"dual-protocol", check_dual},
      {"vertical-central", check_central}, {"graph-ops", check_graph},
  };
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    bool ok = false;
    std::string detail;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      detail = std::string(" (") + e.what() + ")";
    }
    out << (ok ? "PASS " : "FAIL ") << name << detail << '\n';
    failed += ok ? 0 : 1;
  }
  return failed;
}

}  // namespace mpdl::cli
