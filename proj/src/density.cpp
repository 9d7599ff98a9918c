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

#include "mpdl/density.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <string>

namespace mpdl::density {

double bandwidth(std::size_t n) {
  if (n == 0) throw DomainError("bandwidth: n must be positive");
  return 1.05 * std::pow(static_cast<double>(n), -0.2);
}

KdeModel::KdeModel(Tensor2 support) : KdeModel(support, bandwidth(support.rows)) {}

KdeModel::KdeModel(Tensor2 support, double h) : support_(std::move(support)), h_(h) {
  if (support_.rows == 0) throw DomainError("KdeModel: empty support");
  if (!(h_ > 0.0)) throw DomainError("KdeModel: bandwidth must be positive");
  if (!support_.all_finite()) throw NumericError("KdeModel: non-finite support entry");
  if (support_.cols > 64) {
    std::cerr << "warning: KDE in " << support_.cols
              << " dimensions; log-density differences will be dominated by dimension\n";
  }
}

namespace {

// exponents e_i = -|x - x_i|^2 / 2h^2, and their maximum
double exponents(const KdeModel& model, std::span<const double> x, std::vector<double>& e) {
  if (x.size() != model.dim()) {
    throw DimensionError("KDE: query has " + std::to_string(x.size()) +
                         " entries, model dimension is " + std::to_string(model.dim()));
  }
  const auto& s = model.support();
  const double inv = 1.0 / (2.0 * model.h() * model.h());
  e.resize(s.rows);
  double mx = -INFINITY;
  for (std::size_t i = 0; i < s.rows; ++i) {
    const auto xi = s.row(i);
    double d2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double d = x[k] - xi[k];
      d2 += d * d;
    }
    e[i] = -d2 * inv;
    mx = std::max(mx, e[i]);
  }
  return mx;
}

}  // namespace

double log_density(const KdeModel& model, std::span<const double> x) {
  std::vector<double> e;
  const double mx = exponents(model, x, e);
  double total = 0.0;
  for (double v : e) total += std::exp(v - mx);
  const double n = static_cast<double>(model.support().rows);
  const double d = static_cast<double>(model.dim());
  return mx + std::log(total) - std::log(n) - d * std::log(model.h()) -
         0.5 * d * std::log(2.0 * std::numbers::pi);
}

std::vector<double> grad_log_density(const KdeModel& model, std::span<const double> x) {
  std::vector<double> e;
  const double mx = exponents(model, x, e);
  double total = 0.0;
  for (double& v : e) {
    v = std::exp(v - mx);
    total += v;
  }
  const auto& s = model.support();
  const double inv_h2 = 1.0 / (model.h() * model.h());
  std::vector<double> g(x.size(), 0.0);
  for (std::size_t i = 0; i < s.rows; ++i) {
    const double w = e[i] / total;
    if (w == 0.0) continue;
    const auto xi = s.row(i);
    for (std::size_t k = 0; k < x.size(); ++k) g[k] += w * (xi[k] - x[k]);
  }
  for (double& v : g) v *= inv_h2;
  return g;
}

std::vector<double> log_density_rows(const KdeModel& model, const Tensor2& x) {
  std::vector<double> out(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) out[r] = log_density(model, x.row(r));
  return out;
}

Tensor2 grad_log_density_rows(const KdeModel& model, const Tensor2& x) {
  Tensor2 out(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const auto g = grad_log_density(model, x.row(r));
    std::copy(g.begin(), g.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace mpdl::density
