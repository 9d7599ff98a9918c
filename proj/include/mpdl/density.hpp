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

#include <cstddef>
#include <span>
#include <vector>

#include "mpdl/tensor.hpp"

namespace mpdl::density {

/// 1.05 * n^(-1/5)
double bandwidth(std::size_t n);

/// Gaussian product-kernel density estimate over a fixed support set. All
/// evaluation happens in log space.
class KdeModel {
 public:
  /// Bandwidth from bandwidth(support.rows).
  explicit KdeModel(Tensor2 support);
  KdeModel(Tensor2 support, double h);

  const Tensor2& support() const { return support_; }
  double h() const { return h_; }
  std::size_t dim() const { return support_.cols; }

 private:
  Tensor2 support_;
  double h_;
};

/// log P(x) = logsumexp_i(-|x - x_i|^2 / 2h^2) - log N - d log h - (d/2) log 2pi
double log_density(const KdeModel& model, std::span<const double> x);

/// sum_i w_i (x_i - x) / h^2 with w = softmax_i(-|x - x_i|^2 / 2h^2)
std::vector<double> grad_log_density(const KdeModel& model, std::span<const double> x);

/// Row-wise versions over a batch.
std::vector<double> log_density_rows(const KdeModel& model, const Tensor2& x);
Tensor2 grad_log_density_rows(const KdeModel& model, const Tensor2& x);

}  // namespace mpdl::density
