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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "msq/autodiff.hpp"

namespace msq {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Owns one pair of moment buffers per parameter,
/// in the order the parameters were registered.
class Adam {
 public:
  Adam(std::span<Tensor *const> params, AdamOptions options = {})
      : params_(params.begin(), params.end()), options_(options) {
    first_.reserve(params_.size());
    second_.reserve(params_.size());
    for (Tensor *p : params_) {
      first_.emplace_back(p->size(), 0.0);
      second_.emplace_back(p->size(), 0.0);
    }
  }

  /// One update. grads must hold exactly the parameters with requires_grad
  /// set; frozen parameters are never written.
  void step(const GradientMap &grads) {
    std::size_t used = 0;
    for (Tensor *p : params_) {
      auto it = grads.find(p);
      if (!p->requires_grad()) {
        if (it != grads.end())
          throw ContractError("optimizer: gradient supplied for a frozen parameter");
        continue;
      }
      if (it == grads.end())
        throw ContractError("optimizer: missing gradient for a trainable parameter");
      if (it->second.shape() != p->shape())
        throw ContractError("optimizer: gradient shape " + shape_string(it->second.shape()) +
                            " does not match parameter " + shape_string(p->shape()));
      ++used;
    }
    if (used != grads.size())
      throw ContractError("optimizer: gradient for an unregistered parameter");

    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor *p = params_[k];
      if (!p->requires_grad()) continue;
      auto g = grads.at(p).data();
      auto x = p->data();
      auto &m = first_[k];
      auto &v = second_[k];
      for (std::size_t i = 0; i < x.size(); ++i) {
        m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
        v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
        x[i] -= options_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.epsilon);
      }
    }
  }

  std::uint64_t step_count() const { return step_; }
  const AdamOptions &options() const { return options_; }
  std::span<const std::vector<double>> first_moments() const { return first_; }
  std::span<const std::vector<double>> second_moments() const { return second_; }

 private:
  std::vector<Tensor *> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::uint64_t step_ = 0;
};

}  // namespace msq
