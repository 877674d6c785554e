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

#include <cmath>

#include "msq/optimizer.hpp"
#include "test_util.hpp"

namespace msq {
namespace {

GradientMap grads_for(Tensor &p, std::vector<double> g) {
  GradientMap m;
  m.emplace(&p, Tensor(p.shape(), std::move(g)));
  return m;
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Tensor p = Tensor::vector({0.5, -0.25, 1.0, 0.0});
  const Tensor before(p.shape(), p.storage());
  p.set_requires_grad(true);
  Tensor *params[] = {&p};
  Adam adam(params);
  const std::vector<double> g = {0.3, -2.0, 1e-3, -7.5};
  adam.step(grads_for(p, g));
  for (std::size_t i = 0; i < g.size(); ++i) {
    // m_hat = g and v_hat = g^2 after one step, so the move is lr * g / (|g| + eps).
    const double expected = -1e-3 * g[i] / (std::fabs(g[i]) + 1e-8);
    EXPECT_NEAR(p[i] - before[i], expected, 1e-15) << i;
    EXPECT_NEAR(p[i] - before[i], -1e-3 * (g[i] > 0 ? 1.0 : -1.0), 1e-7) << i;
  }
  EXPECT_EQ(adam.step_count(), 1u);
}

// Direct transcription of the update rule, used as the multi-step oracle.
TEST(Adam, MatchesScalarReferenceOverManySteps) {
  Rng rng(11);
  Tensor p = test::random_matrix(rng, 2, 3);
  p.set_requires_grad(true);
  std::vector<double> ref(p.storage()), m(6, 0.0), v(6, 0.0);
  Tensor *params[] = {&p};
  AdamOptions opt{0.01, 0.8, 0.99, 1e-6};
  Adam adam(params, opt);
  for (int t = 1; t <= 50; ++t) {
    std::vector<double> g(6);
    for (double &x : g) x = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < 6; ++i) {
      m[i] = 0.8 * m[i] + 0.2 * g[i];
      v[i] = 0.99 * v[i] + 0.01 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.8, t)), vh = v[i] / (1 - std::pow(0.99, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-6);
    }
    adam.step(grads_for(p, g));
    ASSERT_EQ(adam.step_count(), static_cast<std::uint64_t>(t));
  }
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(p[i], ref[i], 1e-12);
  ASSERT_EQ(adam.first_moments().size(), 1u);
  EXPECT_EQ(adam.first_moments()[0].size(), p.size());
  EXPECT_EQ(adam.second_moments()[0].size(), p.size());
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor p = Tensor::vector({1, 2, 3});
  const Tensor before(p.shape(), p.storage());
  p.set_requires_grad(true);
  Tensor *params[] = {&p};
  Adam adam(params);
  adam.step(grads_for(p, {0, 0, 0}));
  EXPECT_TRUE(test::bit_identical(p, before));
}

TEST(Adam, FrozenParameterIsBitIdentical) {
  Rng rng(12);
  Tensor live = test::random_matrix(rng, 3, 3), frozen = test::random_matrix(rng, 3, 3);
  const Tensor before(frozen.shape(), frozen.storage());
  live.set_requires_grad(true);
  Tensor *params[] = {&live, &frozen};
  Adam adam(params);
  for (int t = 0; t < 10; ++t) adam.step(grads_for(live, std::vector<double>(9, 0.5)));
  EXPECT_TRUE(test::bit_identical(frozen, before));
}

TEST(Adam, ContractViolations) {
  Tensor p = Tensor::vector({1, 2}), frozen = Tensor::vector({3}), stranger = Tensor::vector({4});
  p.set_requires_grad(true);
  Tensor *params[] = {&p, &frozen};
  Adam adam(params);
  GradientMap bad_shape;
  bad_shape.emplace(&p, Tensor(Shape{3}, 1.0));
  EXPECT_THROW(adam.step(bad_shape), ContractError);
  EXPECT_THROW(adam.step(GradientMap{}), ContractError);
  GradientMap with_frozen = grads_for(p, {1, 1});
  with_frozen.emplace(&frozen, Tensor(Shape{1}, 1.0));
  EXPECT_THROW(adam.step(with_frozen), ContractError);
  GradientMap with_stranger = grads_for(p, {1, 1});
  with_stranger.emplace(&stranger, Tensor(Shape{1}, 1.0));
  EXPECT_THROW(adam.step(with_stranger), ContractError);
  EXPECT_EQ(adam.step_count(), 0u);
}

}  // namespace
}  // namespace msq
