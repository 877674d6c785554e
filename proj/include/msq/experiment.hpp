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

// Label-budget sweep: for every (budget, repeat) cell, draw a labeled subset,
// fine-tune the pretrained model and train a baseline on that same subset,
// and score both on the shared validation split.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "msq/metrics.hpp"
#include "msq/train.hpp"

namespace msq {

enum class ArmKind { kPretrained, kBaseline };

inline const char *to_string(ArmKind k) { return k == ArmKind::kPretrained ? "pretrained" : "baseline"; }

/// 20, 35, ..., 200 followed by 400, 600, ..., 1200.
inline std::vector<std::size_t> default_budgets() {
  std::vector<std::size_t> b;
  for (std::size_t n = 20; n <= 200; n += 15) b.push_back(n);
  for (std::size_t n = 400; n <= 1200; n += 200) b.push_back(n);
  return b;
}

struct SweepConfig {
  std::vector<std::size_t> budgets = default_budgets();
  std::size_t repeats = 3;
  std::uint64_t base_seed = 0;
  std::size_t workers = 1;
  TrainConfig train;
};

struct SweepRecord {
  ArmKind kind = ArmKind::kPretrained;
  std::size_t budget = 0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::uint64_t subset_fingerprint = 0;
  MetricsReport metrics;
};

struct CellAggregate {
  ArmKind kind = ArmKind::kPretrained;
  std::size_t budget = 0;
  std::size_t count = 0;
  std::array<double, kNumMetrics> mean{};
  std::array<double, kNumMetrics> std{};  // sample std, 0 for a single record
};

struct SweepReport {
  std::vector<SweepRecord> records;  // by kind, budget, repeat
  std::vector<CellAggregate> aggregates;
};

/// Fixed train/validation split with validation standardized by train stats.
struct PreparedSplits {
  Dataset train;
  Dataset val;
  StandardizationStats stats;
};

inline PreparedSplits prepare_splits(const Dataset &ds, double ratio, std::uint64_t seed) {
  auto [train, val] = split_train_val(ds, ratio, seed);
  auto [std_train, stats] = standardize(std::move(train));
  Dataset std_val = apply_standardization(std::move(val), stats);
  return {std::move(std_train), std::move(std_val), std::move(stats)};
}

/// The labeled samples of ds, in dataset order.
inline Dataset labeled_only(const Dataset &ds) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.has_label(ds.sequences[i].id)) keep.push_back(i);
  return detail::subset_by_index(ds, keep);
}

inline std::uint64_t cell_seed(std::uint64_t base, std::size_t budget, std::size_t repeat) {
  return derive_seed(base, {budget, repeat});
}

/// Mean and sample standard deviation of every metric per (kind, budget).
inline std::vector<CellAggregate> aggregate(const std::vector<SweepRecord> &records) {
  std::map<std::pair<int, std::size_t>, std::vector<const SweepRecord *>> cells;
  for (const auto &r : records) cells[{static_cast<int>(r.kind), r.budget}].push_back(&r);
  std::vector<CellAggregate> out;
  for (const auto &[key, recs] : cells) {
    CellAggregate a;
    a.kind = static_cast<ArmKind>(key.first);
    a.budget = key.second;
    a.count = recs.size();
    // Accumulate in repeat order so the result does not depend on record order.
    std::vector<const SweepRecord *> sorted = recs;
    std::sort(sorted.begin(), sorted.end(),
              [](const SweepRecord *x, const SweepRecord *y) { return x->repeat < y->repeat; });
    const double n = static_cast<double>(sorted.size());
    for (std::size_t m = 0; m < kNumMetrics; ++m) {
      double s = 0;
      for (const auto *r : sorted) s += metric_values(r->metrics)[m];
      a.mean[m] = s / n;
      double ss = 0;
      for (const auto *r : sorted) {
        const double d = metric_values(r->metrics)[m] - a.mean[m];
        ss += d * d;
      }
      a.std[m] = sorted.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
    out.push_back(a);
  }
  return out;
}

inline std::size_t metric_index(const std::string &name) {
  for (std::size_t i = 0; i < kMetricNames.size(); ++i)
    if (name == kMetricNames[i]) return i;
  throw ContractError("unknown metric '" + name + "'");
}

/// (budget, pretrained mean - baseline mean) for every budget, ascending.
inline std::vector<std::pair<std::size_t, double>> gap_trend(const SweepReport &report,
                                                             const std::string &metric) {
  const std::size_t m = metric_index(metric);
  std::map<std::size_t, std::pair<std::optional<double>, std::optional<double>>> by_budget;
  for (const auto &a : report.aggregates) {
    auto &slot = by_budget[a.budget];
    (a.kind == ArmKind::kPretrained ? slot.first : slot.second) = a.mean[m];
  }
  std::vector<std::pair<std::size_t, double>> out;
  for (const auto &[budget, pair] : by_budget) {
    if (!pair.first || !pair.second)
      throw ContractError("gap_trend: budget " + std::to_string(budget) + " lacks one of the arms");
    out.emplace_back(budget, *pair.first - *pair.second);
  }
  return out;
}

inline void validate_sweep(const SweepConfig &cfg, const Dataset &train) {
  if (cfg.budgets.empty()) throw ContractError("sweep: no budgets");
  if (cfg.repeats == 0) throw ContractError("sweep: repeats must be >= 1");
  for (std::size_t i = 0; i < cfg.budgets.size(); ++i) {
    if (cfg.budgets[i] == 0) throw ContractError("sweep: budgets must be positive");
    if (i && cfg.budgets[i] <= cfg.budgets[i - 1])
      throw ContractError("sweep: budgets must be strictly increasing");
  }
  const std::size_t pool = train.labeled_count();
  if (cfg.budgets.back() > pool)
    throw ContractError("sweep: budget " + std::to_string(cfg.budgets.back()) +
                        " exceeds the labeled training pool of " + std::to_string(pool));
  std::set<std::uint64_t> seeds;
  for (std::size_t b : cfg.budgets)
    for (std::size_t r = 0; r < cfg.repeats; ++r)
      if (!seeds.insert(cell_seed(cfg.base_seed, b, r)).second)
        throw ContractError("sweep: cell seed collision");
  cfg.train.validate();
}

/// Runs every cell. `train` supplies the labeled pool, `val` is scored.
/// Cells run on up to cfg.workers threads; the report order is canonical.
inline SweepReport run_sweep(const SweepConfig &cfg, const Model &pretrained, const Dataset &train,
                             const Dataset &val) {
  validate_sweep(cfg, train);
  if (pretrained.kind != ModelKind::kPretrain) throw ContractError("sweep: expected a pretrain model");
  detail::require_labeled(val, "sweep validation set");

  struct Cell {
    std::size_t budget, repeat;
  };
  std::vector<Cell> cells;
  for (std::size_t b : cfg.budgets)
    for (std::size_t r = 0; r < cfg.repeats; ++r) cells.push_back({b, r});

  std::vector<SweepRecord> pre(cells.size()), base(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        const Cell &c = cells[i];
        const std::uint64_t seed = cell_seed(cfg.base_seed, c.budget, c.repeat);
        const Dataset subset = sample_labeled_subset(train, c.budget, seed);
        const std::uint64_t fp = subset_fingerprint(subset);
        TrainConfig tc = cfg.train;
        tc.seed = seed;

        const TrainedModel ft = finetune(pretrained, subset, tc);
        const Evaluation ev_ft = evaluate(ft.model, val);
        pre[i] = SweepRecord{ArmKind::kPretrained, c.budget, c.repeat, seed, fp,
                             compute_metrics(ev_ft.predictions, ev_ft.truth)};

        const TrainedModel bl = train_baseline(subset, tc);
        const Evaluation ev_bl = evaluate(bl.model, val);
        base[i] = SweepRecord{ArmKind::kBaseline, c.budget, c.repeat, seed, fp,
                              compute_metrics(ev_bl.predictions, ev_bl.truth)};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = cells.size();
      }
    }
  };

  const std::size_t nthreads = std::clamp<std::size_t>(cfg.workers, 1, cells.size());
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < nthreads; ++t) threads.emplace_back(worker);
    for (auto &t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  SweepReport report;
  report.records = std::move(pre);
  report.records.insert(report.records.end(), base.begin(), base.end());
  report.aggregates = aggregate(report.records);
  return report;
}

inline std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

inline void write_sweep_report_csv(const std::filesystem::path &path, const SweepReport &report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << kMetricsCsvHeader << ",subset_fingerprint\n";
  for (const auto &r : report.records)
    out << metrics_csv_row(to_string(r.kind), r.budget, r.repeat, r.metrics) << ','
        << fingerprint_hex(r.subset_fingerprint) << '\n';
}

/// `model,budget,repeats,<metric>_mean,<metric>_std,...`
inline void write_sweep_aggregates_csv(const std::filesystem::path &path, const SweepReport &report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "model,budget,repeats";
  for (const char *name : kMetricNames) out << ',' << name << "_mean," << name << "_std";
  out << '\n';
  for (const auto &a : report.aggregates) {
    out << to_string(a.kind) << ',' << a.budget << ',' << a.count;
    for (std::size_t m = 0; m < kNumMetrics; ++m)
      out << ',' << format_double(a.mean[m]) << ',' << format_double(a.std[m]);
    out << '\n';
  }
}

}  // namespace msq
