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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "msq/nn.hpp"
#include "msq/random.hpp"
#include "msq/tensor.hpp"

namespace msq {

inline constexpr std::array<const char *, kNumEmotions> kEmotionNames = {
    "happy", "sad", "anger", "surprise", "disgust", "fear"};

inline constexpr double kMaxIntensity = 3.0;

/// One utterance: [T x 74] encoded acoustic parameters.
struct FeatureSequence {
  std::string id;
  Tensor features;

  std::size_t length() const { return features.rank() == 2 ? features.rows() : 0; }
};

/// Intensities in [0, 3], ordered happy, sad, anger, surprise, disgust, fear.
struct EmotionLabel {
  std::array<double, kNumEmotions> intensities{};

  static EmotionLabel checked(const std::array<double, kNumEmotions> &v, const std::string &id) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!(v[i] >= 0.0 && v[i] <= kMaxIntensity))
        throw DataError("label for '" + id + "': " + kEmotionNames[i] + " intensity " +
                        std::to_string(v[i]) + " outside [0, 3]");
    return EmotionLabel{v};
  }
};

struct StandardizationStats {
  std::vector<double> mean;
  std::vector<double> std;  // floored at kStdFloor
};

inline constexpr double kStdFloor = 1e-8;

struct Dataset {
  std::vector<FeatureSequence> sequences;
  std::map<std::string, EmotionLabel> labels;
  std::optional<StandardizationStats> standardization;
  std::size_t repaired_values = 0;  // non-finite inputs replaced at load

  std::size_t size() const { return sequences.size(); }
  bool has_label(const std::string &id) const { return labels.count(id) != 0; }

  const EmotionLabel &label(const std::string &id) const {
    auto it = labels.find(id);
    if (it == labels.end()) throw ContractError("sample '" + id + "' has no label");
    return it->second;
  }

  std::size_t labeled_count() const {
    std::size_t n = 0;
    for (const auto &s : sequences) n += has_label(s.id);
    return n;
  }

  /// Label-free view used by pretraining.
  std::span<const FeatureSequence> unlabeled() const { return sequences; }

  bool standardized() const { return standardization.has_value(); }
};

/// Every label id must name a sequence and ids must be unique.
inline void validate_dataset(const Dataset &ds) {
  std::unordered_set<std::string> ids;
  for (const auto &s : ds.sequences) {
    if (!ids.insert(s.id).second) throw DataError("duplicate sample id '" + s.id + "'");
    if (s.features.rank() != 2 || s.features.cols() != kFeatureDim)
      throw DataError("sample '" + s.id + "': expected " + std::to_string(kFeatureDim) +
                      " feature columns, found " +
                      (s.features.rank() == 2 ? std::to_string(s.features.cols()) : "none"));
  }
  for (const auto &[id, lab] : ds.labels) {
    if (!ids.count(id)) throw DataError("label for unknown sample '" + id + "'");
    EmotionLabel::checked(lab.intensities, id);
  }
}

// ---------------------------------------------------------------------------
// Standardization.

/// Per-column mean and population standard deviation over all timesteps of
/// all training sequences.
inline StandardizationStats compute_standardization(const Dataset &train) {
  if (train.sequences.empty()) throw ContractError("standardize: empty training set");
  const std::size_t dim = train.sequences.front().features.cols();
  std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
  std::size_t rows = 0;
  for (const auto &s : train.sequences) {
    for (std::size_t t = 0; t < s.length(); ++t) {
      auto r = s.features.row(t);
      for (std::size_t c = 0; c < dim; ++c) sum[c] += r[c];
    }
    rows += s.length();
  }
  if (rows == 0) throw ContractError("standardize: training set has no timesteps");
  StandardizationStats st{std::vector<double>(dim), std::vector<double>(dim)};
  for (std::size_t c = 0; c < dim; ++c) st.mean[c] = sum[c] / static_cast<double>(rows);
  for (const auto &s : train.sequences)
    for (std::size_t t = 0; t < s.length(); ++t) {
      auto r = s.features.row(t);
      for (std::size_t c = 0; c < dim; ++c) sq[c] += (r[c] - st.mean[c]) * (r[c] - st.mean[c]);
    }
  std::size_t floored = 0;
  for (std::size_t c = 0; c < dim; ++c) {
    st.std[c] = std::sqrt(sq[c] / static_cast<double>(rows));
    if (!(st.std[c] >= kStdFloor)) {
      st.std[c] = kStdFloor;
      ++floored;
    }
  }
  if (floored)
    log_warning("standardize: " + std::to_string(floored) +
                " zero-variance column(s); std floored at 1e-8");
  return st;
}

/// Applies (x - mean) / std. A dataset can be standardized only once.
inline Dataset apply_standardization(Dataset ds, const StandardizationStats &stats) {
  if (ds.standardized()) throw ContractError("dataset is already standardized");
  for (auto &s : ds.sequences) {
    if (s.features.cols() != stats.mean.size())
      throw DimensionError("standardize: column count mismatch for '" + s.id + "'");
    for (std::size_t t = 0; t < s.length(); ++t) {
      auto r = s.features.row(t);
      for (std::size_t c = 0; c < r.size(); ++c) r[c] = (r[c] - stats.mean[c]) / stats.std[c];
    }
  }
  ds.standardization = stats;
  return ds;
}

inline std::pair<Dataset, StandardizationStats> standardize(Dataset train) {
  StandardizationStats stats = compute_standardization(train);
  Dataset out = apply_standardization(std::move(train), stats);
  return {std::move(out), std::move(stats)};
}

// ---------------------------------------------------------------------------
// Masking.

struct MaskSpec {
  std::size_t mask_length = 30;
  double sentinel = -30.0;     // far outside the standardized range
  double fraction_hint = 0.10;  // informational: 30 steps of a ~300-step clip
};

struct MaskedSequence {
  Tensor masked;
  std::size_t start = 0;
};

/// Copy of seq with rows [start, start + mask_length) set to the sentinel.
inline Tensor apply_mask(const Tensor &seq, std::size_t start, const MaskSpec &spec) {
  if (spec.mask_length == 0) throw ContractError("mask length must be >= 1");
  if (start + spec.mask_length > seq.rows())
    throw ContractError("mask range exceeds sequence length");
  Tensor out(seq.shape(), seq.storage());
  for (std::size_t t = start; t < start + spec.mask_length; ++t)
    for (double &v : out.row(t)) v = spec.sentinel;
  return out;
}

/// Masks mask_length consecutive timesteps at a start drawn uniformly from
/// {0, ..., T - mask_length}.
inline MaskedSequence mask_sequence(const FeatureSequence &seq, const MaskSpec &spec, Rng &rng) {
  if (spec.mask_length == 0) throw ContractError("mask length must be >= 1");
  const std::size_t steps = seq.length();
  if (steps < spec.mask_length)
    throw ContractError("sequence '" + seq.id + "' has " + std::to_string(steps) +
                        " timesteps, fewer than the mask length " +
                        std::to_string(spec.mask_length));
  const std::size_t start = rng.below(steps - spec.mask_length + 1);
  return MaskedSequence{apply_mask(seq.features, start, spec), start};
}

// ---------------------------------------------------------------------------
// Splits and subsets.

namespace detail {

inline Dataset subset_by_index(const Dataset &ds, const std::vector<std::size_t> &indices) {
  Dataset out;
  out.standardization = ds.standardization;
  for (std::size_t i : indices) {
    const auto &s = ds.sequences[i];
    out.sequences.push_back(s);
    if (auto it = ds.labels.find(s.id); it != ds.labels.end()) out.labels.emplace(s.id, it->second);
  }
  return out;
}

}  // namespace detail

/// Seeded partition into (train, val); both keep the original sample order.
inline std::pair<Dataset, Dataset> split_train_val(const Dataset &ds, double ratio,
                                                   std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ContractError("split ratio must be in (0, 1)");
  if (ds.sequences.empty()) throw ContractError("split: empty dataset");
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ds.size())));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> val(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {detail::subset_by_index(ds, train), detail::subset_by_index(ds, val)};
}

/// n distinct labeled samples drawn uniformly without replacement, returned in
/// dataset order.
inline Dataset sample_labeled_subset(const Dataset &train, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train.has_label(train.sequences[i].id)) pool.push_back(i);
  if (n > pool.size())
    throw ContractError("requested " + std::to_string(n) + " labeled samples but only " +
                        std::to_string(pool.size()) + " are available");
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return detail::subset_by_index(train, pool);
}

/// Order-insensitive 64-bit FNV-1a digest of the sample ids.
inline std::uint64_t subset_fingerprint(const Dataset &ds) {
  std::vector<std::string> ids;
  for (const auto &s : ds.sequences) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto &id : ids) {
    for (unsigned char c : id) h = (h ^ c) * 0x100000001b3ULL;
    h = (h ^ 0xff) * 0x100000001b3ULL;
  }
  return h;
}

}  // namespace msq
