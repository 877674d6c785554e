// Copyright 2026  The msq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.
#include <gtest/gtest.h>

#include "metrics_oracle.hpp"
#include "msq/metrics.hpp"
#include "test_util.hpp"

namespace msq {
namespace {

TEST(RoundClass, Examples) {
  EXPECT_EQ(round_class(2.3), 2);
  EXPECT_EQ(round_class(0.5), 1);
  EXPECT_EQ(round_class(1.0), 1);
  EXPECT_EQ(round_class(-0.4), 0);
  EXPECT_EQ(round_class(3.6), 3);
  EXPECT_EQ(round_class(1.5), 2);
  EXPECT_EQ(round_class(2.5), 3);
  EXPECT_EQ(round_class(-0.5), 0);
  EXPECT_EQ(round_class(0.49999999999999994), 0);
  EXPECT_EQ(round_class(std::nextafter(1.5, 0.0)), 1);
  EXPECT_THROW(round_class(NAN), NumericError);
  EXPECT_THROW(round_class(INFINITY), NumericError);
}

TEST(Acc4, HandComputedRow) {
  const Tensor pred = Tensor::matrix({{0.4, 1.6, 2.2, 0.1, 2.9, 0.7}});
  const Tensor truth = Tensor::matrix({{1, 2, 2, 0, 3, 1}});
  EXPECT_DOUBLE_EQ(acc4_overall(pred, truth), 5.0 / 6.0);
  EXPECT_EQ(acc4_overall(truth, truth), 1.0);
}

TEST(Acc4, HandBuiltPerColumn) {
  const Tensor truth = Tensor::matrix({{0, 1, 2, 3, 0, 1}, {1, 1, 1, 1, 1, 1}, {3, 2, 1, 0, 3, 2}});
  // Column agreements: 3, 2, 1, 0, 3, 2 out of 3.
  const Tensor pred = Tensor::matrix({{0.2, 1.4, 0.0, 1.0, -1.0, 1.2},
                                      {0.5, 1.49, 1.2, 2.0, 1.3, 0.2},
                                      {2.7, 0.0, 0.0, 2.0, 3.9, 2.1}});
  const double expected[] = {1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0, 1.0, 2.0 / 3.0};
  for (std::size_t j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(acc4_per_emotion(pred, truth, j), expected[j]) << j;
  EXPECT_THROW(acc4_per_emotion(pred, truth, 6), ContractError);
}

TEST(Mae, Examples) {
  Rng rng(1);
  const auto t = oracle::random_matrix(rng, 10, true);
  const Tensor truth = oracle::to_tensor(t);
  EXPECT_EQ(mae_overall(truth, truth), 0.0);
  Tensor shifted(truth.shape(), truth.storage());
  for (double &v : shifted.data()) v += 0.5;
  EXPECT_NEAR(mae_overall(shifted, truth), 0.5, 1e-15);
  EXPECT_THROW(mae_per_emotion(shifted, truth, 7), ContractError);
}

TEST(Metrics, ShapeMismatch) {
  EXPECT_THROW(mae_overall(Tensor(Shape{2, 6}), Tensor(Shape{3, 6})), ContractError);
  EXPECT_THROW(acc4_overall(Tensor(Shape{2, 5}), Tensor(Shape{2, 5})), ContractError);
  EXPECT_THROW(acc4_overall(Tensor(Shape{0, 6}), Tensor(Shape{0, 6})), ContractError);
}

TEST(Metrics, OracleEquivalence) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    const auto p = oracle::random_matrix(rng, n, false), t = oracle::random_matrix(rng, n, true);
    const Tensor P = oracle::to_tensor(p), T = oracle::to_tensor(t);
    ASSERT_EQ(acc4_overall(P, T), oracle::acc4_overall(p, t));
    ASSERT_EQ(mae_overall(P, T), oracle::mae_overall(p, t));
    for (std::size_t j = 0; j < 6; ++j) {
      ASSERT_EQ(acc4_per_emotion(P, T, j), oracle::acc4_column(p, t, j));
      ASSERT_EQ(mae_per_emotion(P, T, j), oracle::mae_column(p, t, j));
    }
  }
}

TEST(Metrics, PerEmotionMeansReproduceOverall) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    const Tensor P = oracle::to_tensor(oracle::random_matrix(rng, n, false));
    const Tensor T = oracle::to_tensor(oracle::random_matrix(rng, n, true));
    const MetricsReport r = compute_metrics(P, T);
    double mae = 0, acc = 0;
    for (std::size_t j = 0; j < 6; ++j) {
      mae += r.mae_per_emotion[j] / 6;
      acc += r.acc4_per_emotion[j] / 6;
    }
    EXPECT_NEAR(mae, r.overall_mae, 1e-12);
    EXPECT_NEAR(acc, r.overall_acc4, 1e-12);
    EXPECT_GE(r.overall_acc4, 0.0);
    EXPECT_LE(r.overall_acc4, 1.0);
    EXPECT_GE(r.overall_mae, 0.0);
  }
}

TEST(Metrics, ClassPreservingPerturbationKeepsAccuracy) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    const Tensor P = oracle::to_tensor(oracle::random_matrix(rng, n, false));
    const Tensor T = oracle::to_tensor(oracle::random_matrix(rng, n, true));
    Tensor Q(P.shape(), P.storage());
    for (double &v : Q.data()) {
      // Move to a random point of the same rounding cell (clamped cells are unbounded).
      const int c = round_class(v);
      const double lo = c == 0 ? -5.0 : c - 0.5, hi = c == 3 ? 8.0 : c + 0.5;
      v = rng.uniform(lo, hi);
      if (round_class(v) != c) v = c;
    }
    EXPECT_EQ(acc4_overall(P, T), acc4_overall(Q, T));
  }
}

TEST(Metrics, RowPermutationInvariance) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    auto p = oracle::random_matrix(rng, n, false), t = oracle::random_matrix(rng, n, true);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    oracle::Matrix pp(n), tp(n);
    for (std::size_t i = 0; i < n; ++i) {
      pp[i] = p[perm[i]];
      tp[i] = t[perm[i]];
    }
    const auto a = metric_values(compute_metrics(oracle::to_tensor(p), oracle::to_tensor(t)));
    const auto b = metric_values(compute_metrics(oracle::to_tensor(pp), oracle::to_tensor(tp)));
    for (std::size_t m = 0; m < kNumMetrics; ++m) EXPECT_NEAR(a[m], b[m], 1e-12);
  }
}

TEST(Metrics, CsvRowHasSeventeenColumns) {
  const std::string header = kMetricsCsvHeader;
  EXPECT_EQ(std::count(header.begin(), header.end(), ',') + 1, 17);
  MetricsReport r;
  r.overall_mae = 0.25;
  r.acc4_per_emotion[5] = 0.5;
  const std::string row = metrics_csv_row("baseline", 20, 2, r);
  EXPECT_EQ(std::count(row.begin(), row.end(), ',') + 1, 17);
  EXPECT_EQ(row.rfind("baseline,20,2,0.25,", 0), 0u);
  EXPECT_EQ(row.substr(row.size() - 4), ",0.5");
  EXPECT_EQ(metric_by_name(r, "overall_mae"), 0.25);
  EXPECT_EQ(metric_by_name(r, "acc4_f"), 0.5);
  EXPECT_THROW(metric_by_name(r, "f1"), ContractError);
}

}  // namespace
}  // namespace msq
