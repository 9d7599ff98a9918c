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

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mpdl/errors.hpp"

namespace mpdl {

/// Dense row-major matrix of doubles. Rows are samples throughout the
/// library; columns are features or units.
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  Tensor2(std::size_t r, std::size_t c, std::vector<double> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) {
      throw DimensionError("Tensor2: data length does not equal rows*cols");
    }
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  bool empty() const { return data.empty(); }
  bool same_shape(const Tensor2& o) const {
    return rows == o.rows && cols == o.cols;
  }
  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor2&, const Tensor2&) = default;
};

/// Rows of src selected by index, in the given order.
inline Tensor2 gather_rows(const Tensor2& src, std::span<const std::size_t> idx) {
  Tensor2 out(idx.size(), src.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= src.rows) throw DimensionError("gather_rows: index out of range");
    auto dst = out.row(i);
    auto s = src.row(idx[i]);
    std::copy(s.begin(), s.end(), dst.begin());
  }
  return out;
}

/// [a | b] side by side; a.rows == b.rows.
inline Tensor2 hconcat(const Tensor2& a, const Tensor2& b) {
  if (a.rows != b.rows) throw DimensionError("hconcat: row counts differ");
  Tensor2 out(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + a.cols);
  }
  return out;
}

/// a stacked over b; a.cols == b.cols.
inline Tensor2 vconcat(const Tensor2& a, const Tensor2& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.cols != b.cols) throw DimensionError("vconcat: column counts differ");
  Tensor2 out(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

/// Plain triple-loop product a * b.
inline Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols != b.rows) throw DimensionError("matmul: inner dimensions differ");
  Tensor2 out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

}  // namespace mpdl
