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
#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "msq/autodiff.hpp"

namespace msq {

/// Central-difference gradient of a scalar function of the given tensors.
/// The tensors are perturbed in place one coordinate at a time and restored
/// bit-exactly afterwards. Tensors with requires_grad unset are skipped so
/// the result has the same key set as Graph::backward.
inline GradientMap finite_difference_gradient(const std::function<double()> &f,
                                              std::span<Tensor *const> params,
                                              double epsilon = 1e-5) {
  if (!(epsilon > 0)) throw ContractError("finite_difference_gradient: epsilon must be > 0");
  GradientMap grads;
  for (Tensor *p : params) {
    if (!p->requires_grad()) continue;
    Tensor g(p->shape());
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = (*p)[i];
      (*p)[i] = saved + epsilon;
      const double up = f();
      (*p)[i] = saved - epsilon;
      const double down = f();
      (*p)[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("finite_difference_gradient: non-finite function value");
      g[i] = (up - down) / (2.0 * epsilon);
    }
    grads.emplace(p, std::move(g));
  }
  return grads;
}

/// Below this combined norm a gradient is indistinguishable from central
/// difference round-off (about 1e-11 per entry at epsilon 1e-5), e.g. behind
/// a saturated gate.
inline constexpr double kTinyGradientNorm = 1e-7;

/// ||a - b|| / (||a|| + ||b||), or the absolute difference norm when both
/// gradients are tiny.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("relative_error: length mismatch");
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  diff = std::sqrt(diff);
  const double denom = std::sqrt(na) + std::sqrt(nb);
  if (denom < kTinyGradientNorm) return diff;
  return diff / denom;
}

/// Largest per-tensor relative error between two gradient maps. A key present
/// in only one of the maps yields infinity.
inline double max_relative_error(const GradientMap &analytic, const GradientMap &numeric) {
  double worst = 0;
  for (const auto &[key, g] : numeric) {
    auto it = analytic.find(key);
    if (it == analytic.end()) return INFINITY;
    worst = std::max(worst, relative_error(it->second.data(), g.data()));
  }
  if (analytic.size() != numeric.size()) return INFINITY;
  return worst;
}

}  // namespace msq
