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

#include "msq/autodiff.hpp"
#include "msq/gradcheck_suite.hpp"
#include "test_util.hpp"

namespace msq {
namespace {

using test::random_matrix;

// Triple-loop product used as the matmul oracle.
Tensor naive_matmul(const Tensor &a, const Tensor &b) {
  Tensor c(Shape{a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

TEST(Matmul, Identity) {
  Graph g;
  Var c = matmul(g.constant(Tensor::matrix({{1, 0}, {0, 1}})), g.constant(Tensor::matrix({{1, 2}, {3, 4}})));
  EXPECT_EQ(c.value().storage(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, HandComputed) {
  Graph g;
  Var c = matmul(g.constant(Tensor::matrix({{1, 2}, {3, 4}})), g.constant(Tensor::matrix({{5}, {6}})));
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c.value().storage(), (std::vector<double>{17, 39}));
}

TEST(Matmul, ZerosTimesAnything) {
  Rng rng(1);
  Graph g;
  Var c = matmul(g.constant(Tensor(Shape{2, 3})), g.constant(random_matrix(rng, 3, 4)));
  EXPECT_EQ(c.shape(), (Shape{2, 4}));
  for (double v : c.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, MatchesTripleLoopOnRandomShapes) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 1 + rng.below(6);
    const Tensor a = random_matrix(rng, m, k), b = random_matrix(rng, k, n);
    Graph g;
    const Tensor c = matmul(g.constant(a), g.constant(b)).value();
    const Tensor ref = naive_matmul(a, b);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], ref[i], 1e-12);
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Graph g;
  try {
    matmul(g.constant(Tensor(Shape{2, 3})), g.constant(Tensor(Shape{2, 3})));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError &e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos) << e.what();
  }
}

TEST(Elementwise, Examples) {
  Graph g;
  EXPECT_EQ(add(g.constant(Tensor::vector({1, 2})), g.constant(Tensor::vector({3, 4}))).value().storage(),
            (std::vector<double>{4, 6}));
  EXPECT_EQ(mul(g.constant(Tensor::vector({1, 2})), g.constant(Tensor::vector({0, 0}))).value().storage(),
            (std::vector<double>{0, 0}));
  EXPECT_EQ(sub(g.constant(Tensor::scalar(1)), g.constant(Tensor::vector({0.25, 0.5}))).value().storage(),
            (std::vector<double>{0.75, 0.5}));
  EXPECT_EQ(sub(1.0, g.constant(Tensor::vector({0.25, 0.5}))).value().storage(),
            (std::vector<double>{0.75, 0.5}));
}

TEST(Elementwise, ShapeMismatchThrows) {
  Graph g;
  EXPECT_THROW(add(g.constant(Tensor(Shape{2, 3})), g.constant(Tensor(Shape{3, 2}))), DimensionError);
  EXPECT_THROW(mul(g.constant(Tensor(Shape{2})), g.constant(Tensor(Shape{3}))), DimensionError);
}

TEST(Activation, Examples) {
  Graph g;
  EXPECT_EQ(sigmoid(g.constant(Tensor::scalar(0))).value().item(), 0.5);
  EXPECT_EQ(tanh(g.constant(Tensor::scalar(0))).value().item(), 0.0);
  EXPECT_NEAR(sigmoid(g.constant(Tensor::scalar(std::log(3.0)))).value().item(), 0.75, 1e-15);
}

TEST(Activation, SaturationStaysFinite) {
  Graph g;
  const Tensor big = Tensor::vector({-800, 800});
  const Tensor s = sigmoid(g.constant(big)).value();
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 1.0);
  const Tensor t = tanh(g.constant(big)).value();
  EXPECT_EQ(t[0], -1.0);
  EXPECT_EQ(t[1], 1.0);
}

TEST(Backward, SquareSum) {
  Tensor w = Tensor::vector({1, 2});
  w.set_requires_grad(true);
  Graph g;
  Var pw = g.parameter(w);
  const GradientMap grads = g.backward(sum(mul(pw, pw)));
  ASSERT_EQ(grads.count(&w), 1u);
  EXPECT_EQ(grads.at(&w).storage(), (std::vector<double>{2, 4}));
}

TEST(Backward, SigmoidAtZero) {
  Tensor w = Tensor::scalar(0);
  w.set_requires_grad(true);
  Graph g;
  const GradientMap grads = g.backward(sigmoid(g.parameter(w)));
  EXPECT_EQ(grads.at(&w).item(), 0.25);
}

TEST(Backward, FrozenParameterAbsent) {
  Tensor w = Tensor::vector({1, 2}), frozen = Tensor::vector({3, 4});
  w.set_requires_grad(true);
  Graph g;
  const GradientMap grads = g.backward(sum(mul(g.parameter(w), g.parameter(frozen))));
  EXPECT_EQ(grads.size(), 1u);
  EXPECT_EQ(grads.count(&frozen), 0u);
  EXPECT_EQ(grads.at(&w).storage(), (std::vector<double>{3, 4}));
}

TEST(Backward, ExactlyReachableLeaves) {
  Tensor a = Tensor::vector({1, 2}), b = Tensor::vector({3, 4}), unused = Tensor::vector({5});
  for (Tensor *t : {&a, &b, &unused}) t->set_requires_grad(true);
  Graph g;
  g.parameter(unused);
  Var loss = sum(add(g.parameter(a), g.parameter(b)));
  const GradientMap grads = g.backward(loss);
  EXPECT_EQ(grads.size(), 2u);
  EXPECT_EQ(grads.count(&unused), 0u);
}

TEST(Backward, NonScalarLossThrows) {
  Tensor w = Tensor::vector({1, 2});
  w.set_requires_grad(true);
  Graph g;
  EXPECT_THROW(g.backward(g.parameter(w)), ContractError);
}

TEST(Backward, DetachedLossGivesEmptyMap) {
  set_quiet(true);
  Graph g;
  EXPECT_TRUE(g.backward(sum(g.constant(Tensor::vector({1, 2})))).empty());
  set_quiet(false);
}

TEST(Backward, RepeatedCallGivesIdenticalGradients) {
  Rng rng(3);
  Tensor a = random_matrix(rng, 3, 4), b = random_matrix(rng, 4, 2);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Graph g;
  Var loss = sum(tanh(matmul(g.parameter(a), g.parameter(b))));
  const GradientMap first = g.backward(loss);
  const GradientMap second = g.backward(loss);
  EXPECT_TRUE(test::bit_identical(first.at(&a), second.at(&a)));
  EXPECT_TRUE(test::bit_identical(first.at(&b), second.at(&b)));
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Tensor w = Tensor::scalar(3);
  w.set_requires_grad(true);
  Graph g;
  Var p = g.parameter(w);
  Var sq = mul(p, p);
  const GradientMap grads = g.backward(add(sq, mul(sq, p)));  // w^2 + w^3
  EXPECT_DOUBLE_EQ(grads.at(&w).item(), 2 * 3 + 3 * 9);
}

TEST(Ops, InputsAreNeverMutated) {
  Rng rng(4);
  const Tensor a = random_matrix(rng, 4, 3), b = random_matrix(rng, 4, 3), bias = random_matrix(rng, 1, 3);
  Tensor a_param(a.shape(), a.storage()), b_param(b.shape(), b.storage());
  a_param.set_requires_grad(true);
  b_param.set_requires_grad(true);
  Graph g;
  Var va = g.parameter(a_param), vb = g.parameter(b_param);
  Var parts[] = {slice_rows(va, 0, 2), vb};
  Var loss = sum(add(sigmoid(mul(va, vb)), tanh(sub(va, vb))));
  loss = add(loss, sum(concat_rows(parts)));
  loss = add(loss, sum(gather_rows(va, {1, 1, 3})));
  loss = add(loss, sum(add_rowwise(va, g.constant(bias.reshaped({3})))));
  loss = add(loss, mse(va, b));
  g.backward(loss);
  EXPECT_TRUE(test::bit_identical(a_param, a));
  EXPECT_TRUE(test::bit_identical(b_param, b));
}

// Every differentiable op against central differences, 100 random trials.
TEST(GradientCheck, EveryOpMatchesFiniteDifferences) {
  const GradcheckReport rep = run_gradcheck_suite(20260101, 100, 3);
  for (const auto &e : rep.entries) EXPECT_TRUE(e.passed) << e.name << " max rel err " << e.max_error;
}

// A deliberately wrong backward rule must be caught.
Var broken_square(Var a) {
  Tensor out = a.value();
  for (double &v : out.data()) v *= v;
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph &g, std::span<const double> dc) {
    const Tensor &x = g.value(ia);
    auto ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += dc[i] * x[i];  // should be 2x
  });
}

TEST(GradientCheck, NegativeControlDetectsCorruptedRule) {
  Rng rng(5);
  Tensor a = random_matrix(rng, 3, 3);
  a.set_requires_grad(true);
  Tensor *params[] = {&a};
  const double err = gradient_error([&](Graph &g) { return sum(broken_square(g.parameter(a))); }, params);
  EXPECT_GT(err, kGradcheckTolerance);
}

}  // namespace
}  // namespace msq
