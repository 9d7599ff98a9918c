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

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "mpdl/data.hpp"
#include "oracles.hpp"

using namespace mpdl;

TEST(DataNormalize, MinMax) {
  Tensor2 x(3, 2, {2, 5, 4, 5, 6, 5});
  const auto constant = normalize_min_max(x);
  EXPECT_EQ(x(0, 0), 0.0);
  EXPECT_EQ(x(1, 0), 0.5);
  EXPECT_EQ(x(2, 0), 1.0);
  EXPECT_EQ(constant, std::vector<std::size_t>{1});
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(x(r, 1), 0.0);
}

TEST(DataCsv, CategoricalOneHot) {
  std::istringstream in("id,color,size,label\n1,a,1,x\n2,b,2,y\n3,c,3,x\n4,a,5,y\n");
  const auto ds = parse_csv(in, {"id", "label", ',', {}});
  ASSERT_EQ(ds.size(), 4u);
  ASSERT_EQ(ds.features.cols, 4u);  // size + three colour indicators
  std::size_t hot_cols = 0;
  for (std::size_t c = 0; c < ds.features.cols; ++c) {
    if (ds.feature_names[c].rfind("color=", 0) == 0) ++hot_cols;
  }
  EXPECT_EQ(hot_cols, 3u);
  for (std::size_t r = 0; r < 4; ++r) {
    double hot = 0;
    for (std::size_t c = 0; c < ds.features.cols; ++c)
      if (ds.feature_names[c].rfind("color=", 0) == 0) hot += ds.features(r, c);
    EXPECT_EQ(hot, 1.0);
  }
  EXPECT_EQ(ds.ids, (std::vector<EntityId>{1, 2, 3, 4}));
  EXPECT_EQ(ds.num_classes(), 2u);
}

TEST(DataCsv, Errors) {
  std::istringstream dup("id,v\n1,0.5\n1,0.7\n");
  EXPECT_THROW(parse_csv(dup, {"id", "", ',', {}}), DomainError);
  std::istringstream ragged("id,v\n1,0.5,3\n");
  EXPECT_THROW(parse_csv(ragged, {"id", "", ',', {}}), IoError);
  std::istringstream nolabel("id,v\n1,0.5\n");
  EXPECT_THROW(parse_csv(nolabel, {"id", "label", ',', {}}), DomainError);
  EXPECT_THROW(load_csv("/nonexistent/file.csv", {}), IoError);
}

TEST(DataCsv, BreastCancerShape) {
  const auto ds = load_csv(MPDL_DATA_DIR "/breast_cancer.csv", {"id", "diagnosis", ',', {}});
  EXPECT_EQ(ds.size(), 569u);
  EXPECT_EQ(ds.features.cols, 30u);
  ASSERT_TRUE(ds.labels.has_value());
  EXPECT_EQ(ds.num_classes(), 2u);
  for (double v : ds.features.data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(DataAssignment, RandomHalfSplit) {
  const auto a = random_assignment(30, 5);
  std::size_t na = 0;
  for (auto s : a.side) na += s == Side::kA;
  EXPECT_EQ(na, 15u);
  auto rng = make_rng(51, "t");
  const Tensor2 x = oracle::random_matrix(7, 30, rng, 0, 1);
  const auto part = partition_features(x, a);
  EXPECT_EQ(part.a.cols, 15u);
  EXPECT_EQ(part.b.cols, 15u);
  std::set<std::size_t> cols(part.a_columns.begin(), part.a_columns.end());
  for (auto c : part.b_columns) EXPECT_FALSE(cols.count(c));
  EXPECT_EQ(reassemble(part), x);
}

TEST(DataAssignment, ImageRegion) {
  const auto a = image_region_assignment(28, 28, 18);
  std::size_t na = 0;
  for (std::size_t i = 0; i < a.side.size(); ++i) {
    na += a.side[i] == Side::kA;
    // bottom 18 rows belong to A
    EXPECT_EQ(a.side[i] == Side::kA, i / 28 >= 10) << i;
  }
  EXPECT_EQ(na, 504u);
  EXPECT_EQ(a.side.size(), 784u);
}

TEST(DataGamma, PaperExamples) {
  auto s = gamma_sizes(1000, 0.1);
  EXPECT_EQ(s.co, 100u);
  EXPECT_EQ(s.b_only, 450u);
  EXPECT_EQ(s.a_only, 450u);
  s = gamma_sizes(1000, 0.8);
  EXPECT_EQ(s.co, 800u);
  EXPECT_EQ(s.b_only, 100u);
  EXPECT_EQ(s.a_only, 100u);
  EXPECT_THROW(gamma_sizes(10, 0.0), DomainError);
  EXPECT_THROW(gamma_sizes(10, 1.0), DomainError);
}

TEST(DataGamma, MatchesIntegerOracle) {
  auto rng = make_rng(52, "t");
  for (int t = 0; t < 100; ++t) {
    const std::uint64_t n = 10 + uniform_below(rng, 5000);
    const std::uint64_t p = 1 + uniform_below(rng, 99);
    const auto s = gamma_sizes(n, static_cast<double>(p) / 100.0);
    const auto o = oracle::gamma_sizes_rational(n, p, 100);
    EXPECT_EQ(s.co, o.co) << n << " " << p;
    EXPECT_EQ(s.b_only, o.b_only) << n << " " << p;
    EXPECT_EQ(s.a_only, o.a_only) << n << " " << p;
  }
}

TEST(DataGamma, SplitIsDisjointAndCovering) {
  auto rng = make_rng(53, "t");
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 5 + uniform_below(rng, 400);
    std::vector<EntityId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = 1000 + 3 * i;
    const double gamma = 0.01 + 0.98 * uniform01(rng);
    const auto sp = split_by_gamma(ids, {gamma, 0.1, rng()});
    std::multiset<EntityId> all;
    for (auto* part : {&sp.co, &sp.b_only, &sp.a_only, &sp.test}) all.insert(part->begin(), part->end());
    EXPECT_EQ(all, std::multiset<EntityId>(ids.begin(), ids.end()));
    const auto s = gamma_sizes(n - sp.test.size(), gamma);
    EXPECT_EQ(sp.co.size(), s.co);
    EXPECT_EQ(sp.b_only.size(), s.b_only);
  }
}

TEST(DataGamma, SplitIsSeeded) {
  std::vector<EntityId> ids(50);
  for (std::size_t i = 0; i < 50; ++i) ids[i] = i;
  EXPECT_EQ(split_by_gamma(ids, {0.3, 0.1, 4}).co, split_by_gamma(ids, {0.3, 0.1, 4}).co);
  EXPECT_NE(split_by_gamma(ids, {0.3, 0.1, 4}).co, split_by_gamma(ids, {0.3, 0.1, 5}).co);
}

TEST(DataKfold, Sizes) {
  std::vector<EntityId> ten(10), eleven(11);
  for (std::size_t i = 0; i < 11; ++i) {
    if (i < 10) ten[i] = i;
    eleven[i] = i;
  }
  for (const auto& f : kfold_split(ten, 5, 1)) EXPECT_EQ(f.size(), 2u);
  std::multiset<std::size_t> sizes;
  for (const auto& f : kfold_split(eleven, 5, 1)) sizes.insert(f.size());
  EXPECT_EQ(sizes, (std::multiset<std::size_t>{2, 2, 2, 2, 3}));
  EXPECT_THROW(kfold_split(ten, 1, 1), DomainError);
  EXPECT_THROW(kfold_split(ten, 11, 1), DomainError);
}

TEST(DataKfold, PartitionProperty) {
  auto rng = make_rng(54, "t");
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + uniform_below(rng, 100);
    const std::size_t k = 2 + uniform_below(rng, n - 1);
    std::vector<EntityId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = rng();
    std::multiset<EntityId> all;
    for (const auto& f : kfold_split(ids, k, rng())) all.insert(f.begin(), f.end());
    EXPECT_EQ(all, std::multiset<EntityId>(ids.begin(), ids.end()));
  }
}

TEST(DataSelect, RowsFollowRequestedOrder) {
  PartyDataset ds;
  ds.ids = {10, 20, 30};
  ds.features = Tensor2(3, 1, {0.1, 0.2, 0.3});
  ds.labels = std::vector<int>{0, 1, 0};
  ds.class_names = {"a", "b"};
  const std::vector<EntityId> want{30, 10};
  const auto s = select_rows(ds, want);
  EXPECT_EQ(s.features, Tensor2(2, 1, {0.3, 0.1}));
  EXPECT_EQ(*s.labels, (std::vector<int>{0, 0}));
  const std::vector<EntityId> bad{99};
  EXPECT_THROW(select_rows(ds, bad), DomainError);
}
