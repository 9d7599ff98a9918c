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

#include "mpdl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace mpdl {

void PartyDataset::validate() const {
  if (ids.size() != features.rows) {
    throw DimensionError("PartyDataset: id count differs from feature rows");
  }
  if (labels && labels->size() != ids.size()) {
    throw DimensionError("PartyDataset: label count differs from id count");
  }
  if (index_by_id(ids).size() != ids.size()) {
    throw DomainError("PartyDataset: duplicate ids");
  }
  for (double v : features.data) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError("PartyDataset: feature outside [0, 1]");
    }
  }
}

std::unordered_map<EntityId, std::size_t> index_by_id(std::span<const EntityId> ids) {
  std::unordered_map<EntityId, std::size_t> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], i);
  return out;
}

PartyDataset select_rows(const PartyDataset& ds, std::span<const EntityId> ids) {
  const auto index = index_by_id(ds.ids);
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (EntityId id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw DomainError("select_rows: unknown id " + std::to_string(id));
    rows.push_back(it->second);
  }
  PartyDataset out;
  out.ids.assign(ids.begin(), ids.end());
  out.features = gather_rows(ds.features, rows);
  if (ds.labels) {
    std::vector<int> labels;
    labels.reserve(rows.size());
    for (auto r : rows) labels.push_back((*ds.labels)[r]);
    out.labels = std::move(labels);
  }
  out.feature_names = ds.feature_names;
  out.class_names = ds.class_names;
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  if (first == last) return std::nullopt;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

PartyDataset parse_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("parse_csv: empty input");
  const auto header = split_line(line, schema.delimiter);

  auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    if (name.empty()) return std::nullopt;
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DomainError("parse_csv: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto id_col = find_col(schema.id_column);
  const auto label_col = find_col(schema.label_column);

  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line, schema.delimiter);
    if (fields.size() != header.size()) {
      throw IoError("parse_csv: line " + std::to_string(line_no) + " has " +
                    std::to_string(fields.size()) + " fields, header has " +
                    std::to_string(header.size()));
    }
    rows.push_back(std::move(fields));
  }

  PartyDataset ds;
  ds.ids.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (id_col) {
      const auto v = parse_double(rows[r][*id_col]);
      if (!v || *v < 0 || std::floor(*v) != *v) {
        throw IoError("parse_csv: id '" + rows[r][*id_col] + "' is not a non-negative integer");
      }
      ds.ids.push_back(static_cast<EntityId>(*v));
    } else {
      ds.ids.push_back(r + 1);
    }
  }

  if (label_col) {
    std::set<std::string> classes;
    for (const auto& row : rows) classes.insert(row[*label_col]);
    ds.class_names.assign(classes.begin(), classes.end());
    std::vector<int> labels;
    for (const auto& row : rows) {
      labels.push_back(static_cast<int>(
          std::lower_bound(ds.class_names.begin(), ds.class_names.end(), row[*label_col]) -
          ds.class_names.begin()));
    }
    ds.labels = std::move(labels);
  }

  // Column plan: numeric columns stay single, categorical ones expand.
  struct Plan {
    std::size_t source;
    bool numeric;
    std::vector<std::string> categories;
  };
  std::vector<Plan> plan;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == id_col || c == label_col) continue;
    if (std::find(schema.ignore_columns.begin(), schema.ignore_columns.end(), header[c]) !=
        schema.ignore_columns.end()) {
      continue;
    }
    bool numeric = true;
    for (const auto& row : rows) {
      if (!parse_double(row[c])) {
        numeric = false;
        break;
      }
    }
    Plan p{c, numeric, {}};
    if (!numeric) {
      std::set<std::string> cats;
      for (const auto& row : rows) cats.insert(row[c]);
      p.categories.assign(cats.begin(), cats.end());
    }
    plan.push_back(std::move(p));
  }

  std::size_t width = 0;
  for (const auto& p : plan) width += p.numeric ? 1 : p.categories.size();
  ds.features = Tensor2(rows.size(), width);
  std::size_t col = 0;
  for (const auto& p : plan) {
    if (p.numeric) {
      ds.feature_names.push_back(header[p.source]);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        ds.features(r, col) = *parse_double(rows[r][p.source]);
      }
      ++col;
    } else {
      for (std::size_t k = 0; k < p.categories.size(); ++k) {
        ds.feature_names.push_back(header[p.source] + "=" + p.categories[k]);
      }
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto k = std::lower_bound(p.categories.begin(), p.categories.end(),
                                        rows[r][p.source]) -
                       p.categories.begin();
        ds.features(r, col + static_cast<std::size_t>(k)) = 1.0;
      }
      col += p.categories.size();
    }
  }

  for (auto c : normalize_min_max(ds.features)) {
    std::cerr << "warning: constant column '" << ds.feature_names[c]
              << "' normalized to 0\n";
  }
  ds.validate();
  return ds;
}

PartyDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_csv(in, schema);
}

namespace {

std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("IDX: truncated header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

}  // namespace

PartyDataset load_idx(const std::filesystem::path& images,
                      const std::optional<std::filesystem::path>& labels,
                      std::size_t max_items) {
  std::ifstream in(images, std::ios::binary);
  if (!in) throw IoError("cannot open " + images.string());
  if (read_be32(in) != 0x00000803) throw IoError("IDX: not an unsigned-byte 3-d image file");
  std::size_t count = read_be32(in);
  const std::size_t h = read_be32(in);
  const std::size_t w = read_be32(in);
  if (max_items > 0) count = std::min(count, max_items);

  PartyDataset ds;
  ds.features = Tensor2(count, h * w);
  std::vector<unsigned char> buf(h * w);
  for (std::size_t i = 0; i < count; ++i) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
      throw IoError("IDX: truncated image data");
    }
    for (std::size_t p = 0; p < buf.size(); ++p) ds.features(i, p) = buf[p] / 255.0;
    ds.ids.push_back(i + 1);
  }
  for (std::size_t p = 0; p < h * w; ++p) {
    ds.feature_names.push_back("px" + std::to_string(p / w) + "_" + std::to_string(p % w));
  }
  if (labels) {
    std::ifstream lin(*labels, std::ios::binary);
    if (!lin) throw IoError("cannot open " + labels->string());
    if (read_be32(lin) != 0x00000801) throw IoError("IDX: not a label file");
    if (read_be32(lin) < count) throw IoError("IDX: fewer labels than images");
    std::vector<int> y(count);
    int max_label = 0;
    for (std::size_t i = 0; i < count; ++i) {
      char c;
      if (!lin.get(c)) throw IoError("IDX: truncated labels");
      y[i] = static_cast<unsigned char>(c);
      max_label = std::max(max_label, y[i]);
    }
    for (int k = 0; k <= max_label; ++k) ds.class_names.push_back(std::to_string(k));
    ds.labels = std::move(y);
  }
  return ds;
}

std::vector<std::size_t> normalize_min_max(Tensor2& features) {
  std::vector<std::size_t> constant;
  for (std::size_t c = 0; c < features.cols; ++c) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t r = 0; r < features.rows; ++r) {
      lo = std::min(lo, features(r, c));
      hi = std::max(hi, features(r, c));
    }
    if (features.rows == 0) continue;
    if (hi == lo) {
      constant.push_back(c);
      for (std::size_t r = 0; r < features.rows; ++r) features(r, c) = 0.0;
      continue;
    }
    const double span = hi - lo;
    for (std::size_t r = 0; r < features.rows; ++r) {
      features(r, c) = (features(r, c) - lo) / span;
    }
  }
  return constant;
}

FeatureAssignment random_assignment(std::size_t columns, std::uint64_t seed) {
  std::vector<std::size_t> order(columns);
  for (std::size_t i = 0; i < columns; ++i) order[i] = i;
  auto rng = make_rng(seed, "feature-assignment");
  shuffle(order, rng);
  FeatureAssignment out{std::vector<Side>(columns, Side::kB)};
  for (std::size_t i = 0; i < columns / 2; ++i) out.side[order[i]] = Side::kA;
  return out;
}

FeatureAssignment image_region_assignment(std::size_t height, std::size_t width,
                                          std::size_t a_rows) {
  if (a_rows > height) throw DomainError("image_region_assignment: a_rows > height");
  FeatureAssignment out{std::vector<Side>(height * width, Side::kB)};
  for (std::size_t r = height - a_rows; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) out.side[r * width + c] = Side::kA;
  }
  return out;
}

FeaturePartition partition_features(const Tensor2& features,
                                    const FeatureAssignment& assignment) {
  if (assignment.side.size() != features.cols) {
    throw DimensionError("partition_features: assignment length differs from column count");
  }
  FeaturePartition part;
  for (std::size_t c = 0; c < features.cols; ++c) {
    (assignment.side[c] == Side::kA ? part.a_columns : part.b_columns).push_back(c);
  }
  if (part.a_columns.empty() || part.b_columns.empty()) {
    throw DomainError("partition_features: one side receives no columns");
  }
  auto take = [&](const std::vector<std::size_t>& cols) {
    Tensor2 out(features.rows, cols.size());
    for (std::size_t r = 0; r < features.rows; ++r) {
      for (std::size_t j = 0; j < cols.size(); ++j) out(r, j) = features(r, cols[j]);
    }
    return out;
  };
  part.a = take(part.a_columns);
  part.b = take(part.b_columns);
  return part;
}

Tensor2 reassemble(const FeaturePartition& part) {
  Tensor2 out(part.a.rows, part.a.cols + part.b.cols);
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t j = 0; j < part.a_columns.size(); ++j) {
      out(r, part.a_columns[j]) = part.a(r, j);
    }
    for (std::size_t j = 0; j < part.b_columns.size(); ++j) {
      out(r, part.b_columns[j]) = part.b(r, j);
    }
  }
  return out;
}

GammaSizes gamma_sizes(std::size_t n, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in (0, 1)");
  // The slack absorbs binary representation error of decimal gammas such as
  // 0.3, whose products with n land just below an exact integer.
  constexpr double kSlack = 1e-9;
  const double nd = static_cast<double>(n);
  GammaSizes s;
  s.co = static_cast<std::size_t>(std::floor(nd * gamma + kSlack));
  s.b_only = static_cast<std::size_t>(std::floor(nd * (0.5 - gamma / 2.0) + kSlack));
  s.co = std::min(s.co, n);
  s.b_only = std::min(s.b_only, n - s.co);
  s.a_only = n - s.co - s.b_only;
  return s;
}

GammaSplit split_by_gamma(std::span<const EntityId> ids, const SplitSpec& spec) {
  if (!(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0)) {
    throw DomainError("split_by_gamma: test fraction must lie in [0, 1)");
  }
  std::vector<EntityId> order(ids.begin(), ids.end());
  auto rng = make_rng(spec.seed, "gamma-split");
  shuffle(order, rng);

  const auto n_test = static_cast<std::size_t>(
      std::floor(static_cast<double>(order.size()) * spec.test_fraction + 1e-9));
  const auto sizes = gamma_sizes(order.size() - n_test, spec.gamma);

  GammaSplit out;
  auto it = order.begin();
  auto take = [&](std::vector<EntityId>& dst, std::size_t count) {
    dst.assign(it, it + static_cast<std::ptrdiff_t>(count));
    it += static_cast<std::ptrdiff_t>(count);
  };
  take(out.test, n_test);
  take(out.co, sizes.co);
  take(out.b_only, sizes.b_only);
  take(out.a_only, sizes.a_only);
  return out;
}

std::vector<std::vector<EntityId>> kfold_split(std::span<const EntityId> ids,
                                               std::size_t k, std::uint64_t seed) {
  if (k < 2) throw DomainError("kfold_split: k must be at least 2");
  if (k > ids.size()) throw DomainError("kfold_split: more folds than ids");
  std::vector<EntityId> order(ids.begin(), ids.end());
  auto rng = make_rng(seed, "kfold");
  shuffle(order, rng);
  std::vector<std::vector<EntityId>> folds(k);
  const std::size_t base = order.size() / k;
  const std::size_t extra = order.size() % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return folds;
}

nlohmann::json split_manifest(const GammaSplit& split, const SplitSpec& spec) {
  return nlohmann::json{{"gamma", spec.gamma},
                        {"test_fraction", spec.test_fraction},
                        {"seed", spec.seed},
                        {"co_occurrence", split.co},
                        {"b_only", split.b_only},
                        {"a_only", split.a_only},
                        {"test", split.test}};
}

}  // namespace mpdl
