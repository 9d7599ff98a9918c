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

#include "mpdl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mpdl/errors.hpp"

namespace mpdl::synthetic {

namespace {

double gaussian(Rng& rng) {
  // Box-Muller on two open-interval uniforms
  const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace

LinearTask make_linear_task(std::size_t n, std::size_t d_a, std::size_t d_b, double noise,
                            std::uint64_t seed) {
  if (n < 2 || d_a == 0 || d_b == 0) throw DomainError("linear task needs n >= 2 and widths > 0");
  auto rng = make_rng(seed, "linear-task");
  Tensor2 mix(d_b, d_a);
  for (double& v : mix.data) v = 2.0 * uniform01(rng) - 1.0;

  const std::size_t d = d_a + d_b;
  Tensor2 x(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d_a; ++j) x(r, j) = uniform01(rng);
    for (std::size_t i = 0; i < d_b; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d_a; ++j) acc += mix(i, j) * x(r, j);
      x(r, d_a + i) = acc + noise * gaussian(rng);
    }
  }
  normalize_min_max(x);

  std::vector<double> w(d);
  for (double& v : w) v = 2.0 * uniform01(rng) - 1.0;
  std::vector<double> score(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) score[r] += w[j] * x(r, j);
  }
  std::vector<double> sorted = score;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2),
                   sorted.end());
  const double median = sorted[n / 2];

  LinearTask task;
  task.full.features = std::move(x);
  task.full.labels.emplace(n);
  for (std::size_t r = 0; r < n; ++r) {
    task.full.ids.push_back(r + 1);
    (*task.full.labels)[r] = score[r] >= median ? 1 : 0;
  }
  for (std::size_t j = 0; j < d; ++j) {
    task.full.feature_names.push_back((j < d_a ? "a" : "b") +
                                      std::to_string(j < d_a ? j : j - d_a));
  }
  task.full.class_names = {"0", "1"};
  task.assignment.side.assign(d, Side::kB);
  std::fill(task.assignment.side.begin(), task.assignment.side.begin() + static_cast<std::ptrdiff_t>(d_a),
            Side::kA);
  task.full.validate();
  return task;
}

}  // namespace mpdl::synthetic
