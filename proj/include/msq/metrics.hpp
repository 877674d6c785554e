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

// Emotion-intensity metrics on [n x 6] prediction / truth matrices:
// mean absolute error and 4-class accuracy, overall and per emotion.
// Emotion indices are 0-based here (0 = happy ... 5 = fear).

#pragma once

#include <array>
#include <cmath>
#include <string>

#include "msq/data_io.hpp"
#include "msq/nn.hpp"

namespace msq {

/// Half-up rounding to an intensity class, clamped to {0, 1, 2, 3}.
/// Ties (fractional part exactly 0.5) round up.
inline int round_class(double x) {
  if (!std::isfinite(x)) throw NumericError("round_class: non-finite value");
  const double fl = std::floor(x);
  const double r = (x - fl < 0.5) ? fl : fl + 1.0;
  if (r < 0.0) return 0;
  if (r > 3.0) return 3;
  return static_cast<int>(r);
}

namespace detail {

inline void check_metric_shapes(const Tensor &pred, const Tensor &truth) {
  if (pred.rank() != 2 || truth.rank() != 2 || pred.shape() != truth.shape() ||
      pred.cols() != kNumEmotions || pred.rows() == 0)
    throw ContractError("metrics: expected matching [n x 6] matrices with n >= 1, got " +
                        shape_string(pred.shape()) + " and " + shape_string(truth.shape()));
}

inline void check_emotion(std::size_t j) {
  if (j >= kNumEmotions)
    throw ContractError("metrics: emotion index " + std::to_string(j) + " out of range [0, 6)");
}

}  // namespace detail

/// Fraction of the 6n entries whose rounded classes agree.
inline double acc4_overall(const Tensor &pred, const Tensor &truth) {
  detail::check_metric_shapes(pred, truth);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += round_class(pred[i]) == round_class(truth[i]);
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

inline double acc4_per_emotion(const Tensor &pred, const Tensor &truth, std::size_t j) {
  detail::check_metric_shapes(pred, truth);
  detail::check_emotion(j);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < pred.rows(); ++k)
    hits += round_class(pred.at(k, j)) == round_class(truth.at(k, j));
  return static_cast<double>(hits) / static_cast<double>(pred.rows());
}

/// Mean |pred - truth| over all entries, on raw values.
inline double mae_overall(const Tensor &pred, const Tensor &truth) {
  detail::check_metric_shapes(pred, truth);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

inline double mae_per_emotion(const Tensor &pred, const Tensor &truth, std::size_t j) {
  detail::check_metric_shapes(pred, truth);
  detail::check_emotion(j);
  double s = 0;
  for (std::size_t k = 0; k < pred.rows(); ++k) s += std::abs(pred.at(k, j) - truth.at(k, j));
  return s / static_cast<double>(pred.rows());
}

struct MetricsReport {
  double overall_mae = 0;
  std::array<double, kNumEmotions> mae_per_emotion{};
  double overall_acc4 = 0;
  std::array<double, kNumEmotions> acc4_per_emotion{};
};

inline MetricsReport compute_metrics(const Tensor &pred, const Tensor &truth) {
  MetricsReport r;
  r.overall_mae = mae_overall(pred, truth);
  r.overall_acc4 = acc4_overall(pred, truth);
  for (std::size_t j = 0; j < kNumEmotions; ++j) {
    r.mae_per_emotion[j] = mae_per_emotion(pred, truth, j);
    r.acc4_per_emotion[j] = acc4_per_emotion(pred, truth, j);
  }
  return r;
}

inline constexpr std::size_t kNumMetrics = 14;

/// Metric values in CSV column order.
inline std::array<double, kNumMetrics> metric_values(const MetricsReport &r) {
  std::array<double, kNumMetrics> v{};
  v[0] = r.overall_mae;
  for (std::size_t j = 0; j < kNumEmotions; ++j) v[1 + j] = r.mae_per_emotion[j];
  v[7] = r.overall_acc4;
  for (std::size_t j = 0; j < kNumEmotions; ++j) v[8 + j] = r.acc4_per_emotion[j];
  return v;
}

inline constexpr std::array<const char *, kNumMetrics> kMetricNames = {
    "overall_mae", "mae_h",  "mae_s",  "mae_a",  "mae_su", "mae_d", "mae_f",
    "acc4",        "acc4_h", "acc4_s", "acc4_a", "acc4_su", "acc4_d", "acc4_f"};

inline constexpr const char *kMetricsCsvHeader =
    "model,budget,repeat,overall_mae,mae_h,mae_s,mae_a,mae_su,mae_d,mae_f,"
    "acc4,acc4_h,acc4_s,acc4_a,acc4_su,acc4_d,acc4_f";

/// Value of a metric by its CSV column name.
inline double metric_by_name(const MetricsReport &r, const std::string &name) {
  const auto v = metric_values(r);
  for (std::size_t i = 0; i < kMetricNames.size(); ++i)
    if (name == kMetricNames[i]) return v[i];
  throw ContractError("unknown metric '" + name + "'");
}

/// `model,budget,repeat,<14 metrics>` without a trailing newline.
inline std::string metrics_csv_row(const std::string &model, std::size_t budget, std::size_t repeat,
                                   const MetricsReport &r) {
  std::string row = model + ',' + std::to_string(budget) + ',' + std::to_string(repeat);
  const auto v = metric_values(r);
  for (std::size_t i = 0; i < kMetricNames.size(); ++i) row += ',' + format_double(v[i]);
  return row;
}

}  // namespace msq
