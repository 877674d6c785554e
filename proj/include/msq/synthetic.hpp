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

// Synthetic stand-in for encoded acoustic features with emotion labels.
//
// Each sample draws a latent intensity vector y in [0, 3]^6, which is also its
// label; each component is 0 with probability zero_fraction and otherwise
// uniform on [0, 3], giving the zero-heavy shape of real intensity labels.
// Column c then follows a stable AR(1) process
//
//   x[t, c] = a_c(y) * x[t-1, c] + d_c(y) + noise_scale * e[t, c]
//
// with drift d_c(y) and autoregressive coefficient a_c(y) fixed linear
// functions of y (a_c clamped to [-0.9, 0.9]; negative values oscillate).
// The mixing coefficients come from a constant seed so every generated
// dataset shares one latent-to-feature map; the config seed only drives the
// latents and the noise.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "msq/data.hpp"

namespace msq {

struct SyntheticConfig {
  std::size_t num_samples = 2000;
  std::size_t min_steps = 90;
  std::size_t max_steps = 110;
  double noise_scale = 5.0;
  double zero_fraction = 0.5;  // chance that an intensity is exactly 0
  std::uint64_t seed = 0;
};

struct LatentMap {
  static constexpr std::uint64_t kSeed = 0x6D73712D73796E74ULL;

  std::array<std::array<double, kNumEmotions>, kFeatureDim> drift{};
  std::array<double, kFeatureDim> drift_offset{};
  std::array<std::array<double, kNumEmotions>, kFeatureDim> ar{};
  std::array<double, kFeatureDim> ar_offset{};

  static const LatentMap &instance() {
    static const LatentMap map = [] {
      LatentMap m;
      Rng rng(kSeed);
      for (std::size_t c = 0; c < kFeatureDim; ++c) {
        for (std::size_t k = 0; k < kNumEmotions; ++k) {
          m.drift[c][k] = 0.25 * rng.normal();
          m.ar[c][k] = 0.12 * rng.normal();
        }
        m.drift_offset[c] = rng.normal();
        m.ar_offset[c] = rng.uniform(-0.3, 0.6);
      }
      return m;
    }();
    return map;
  }

  double drift_for(std::size_t c, const std::array<double, kNumEmotions> &y) const {
    double d = drift_offset[c];
    for (std::size_t k = 0; k < kNumEmotions; ++k) d += drift[c][k] * (y[k] - 1.5);
    return d;
  }

  double ar_for(std::size_t c, const std::array<double, kNumEmotions> &y) const {
    double a = ar_offset[c];
    for (std::size_t k = 0; k < kNumEmotions; ++k) a += ar[c][k] * (y[k] - 1.5);
    return std::clamp(a, -0.9, 0.9);
  }
};

/// Runs the recurrence for one latent vector with a caller-supplied noise
/// source. Values are rounded to f32 so on-disk copies are exact.
template <typename NoiseFn>
Tensor synthesize_sequence(const std::array<double, kNumEmotions> &latent, std::size_t steps,
                           double noise_scale, NoiseFn &&noise) {
  const LatentMap &map = LatentMap::instance();
  Tensor x(Shape{steps, kFeatureDim});
  std::array<double, kFeatureDim> prev{};
  std::array<double, kFeatureDim> a{}, d{};
  for (std::size_t c = 0; c < kFeatureDim; ++c) {
    a[c] = map.ar_for(c, latent);
    d[c] = map.drift_for(c, latent);
    prev[c] = d[c] / (1.0 - a[c]);  // stationary mean
  }
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t c = 0; c < kFeatureDim; ++c) {
      const double v = a[c] * prev[c] + d[c] + noise_scale * noise();
      prev[c] = v;
      x.at(t, c) = v;
    }
  // Rounded in a separate pass: g++ 11 at -O3 dropped the float conversion
  // from the tail of the fused loop.
  for (double &v : x.data()) v = static_cast<double>(static_cast<float>(v));
  return x;
}

inline Dataset generate_synthetic(const SyntheticConfig &cfg) {
  if (cfg.num_samples == 0) throw ContractError("synthetic: num_samples must be positive");
  if (cfg.min_steps == 0 || cfg.min_steps > cfg.max_steps)
    throw ContractError("synthetic: need 0 < min_steps <= max_steps");
  if (!(cfg.noise_scale >= 0.0)) throw ContractError("synthetic: noise_scale must be >= 0");
  if (!(cfg.zero_fraction >= 0.0 && cfg.zero_fraction <= 1.0))
    throw ContractError("synthetic: zero_fraction must be in [0, 1]");
  Rng rng(cfg.seed);
  Dataset ds;
  const std::size_t width = std::max<std::size_t>(4, std::to_string(cfg.num_samples - 1).size());
  for (std::size_t i = 0; i < cfg.num_samples; ++i) {
    std::array<double, kNumEmotions> y{};
    for (double &v : y) {
      const double u = rng.uniform();
      v = u < cfg.zero_fraction ? 0.0 : rng.uniform(0.0, kMaxIntensity);
    }
    const std::size_t steps = cfg.min_steps + rng.below(cfg.max_steps - cfg.min_steps + 1);
    Tensor x = synthesize_sequence(y, steps, cfg.noise_scale, [&] { return rng.normal(); });
    std::string num = std::to_string(i);
    std::string id = "syn" + std::string(width - std::min(num.size(), width), '0') + num;
    ds.labels.emplace(id, EmotionLabel{y});
    ds.sequences.push_back(FeatureSequence{std::move(id), std::move(x)});
  }
  return ds;
}

}  // namespace msq
