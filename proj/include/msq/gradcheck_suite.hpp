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

// Analytic-vs-numeric gradient checks for every differentiable op and for the
// model losses, on small random problems.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msq/gradcheck.hpp"
#include "msq/nn.hpp"
#include "msq/random.hpp"

namespace msq {

inline constexpr double kGradcheckTolerance = 1e-4;
inline constexpr double kGradcheckEpsilon = 1e-5;

using LossBuilder = std::function<Var(Graph &)>;

/// Builds the loss once for backward() and repeatedly for central
/// differences; returns the worst per-tensor relative error.
inline double gradient_error(const LossBuilder &build, std::span<Tensor *const> params,
                             double epsilon = kGradcheckEpsilon) {
  GradientMap analytic;
  {
    Graph g;
    analytic = g.backward(build(g));
  }
  auto f = [&] {
    Graph g;
    return build(g).value().item();
  };
  return max_relative_error(analytic, finite_difference_gradient(f, params, epsilon));
}

struct GradcheckEntry {
  std::string name;
  std::size_t trials = 0;
  double max_error = 0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  bool all_passed() const {
    for (const auto &e : entries)
      if (!e.passed) return false;
    return !entries.empty();
  }
};

inline Tensor random_tensor(Shape shape, Rng &rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double &v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline void randomize(Model &m, Rng &rng) {
  for (Tensor *t : m.parameters())
    for (double &v : t->data()) v = rng.uniform(-1.0, 1.0);
}

/// Toy-size sequence model problems.
struct ToyProblem {
  std::size_t input_dim = 5;
  std::size_t hidden_dim = 7;
  std::size_t steps = 6;
  std::size_t batch = 2;
  std::size_t mask_length = 3;
};

/// One GRU step, loss = sum(h_t * w) for a fixed random weighting w.
inline double check_gru_cell(std::uint64_t seed, const ToyProblem &p = {}) {
  Rng rng(seed);
  GruLayer layer(p.input_dim, p.hidden_dim);
  for (Tensor *t : layer.tensors()) {
    for (double &v : t->data()) v = rng.uniform(-1.0, 1.0);
    t->set_requires_grad(true);
  }
  Tensor x = random_tensor({p.batch, p.input_dim}, rng);
  Tensor h = random_tensor({p.batch, p.hidden_dim}, rng);
  x.set_requires_grad(true);
  h.set_requires_grad(true);
  const Tensor w = random_tensor({p.batch, p.hidden_dim}, rng);
  auto params = layer.tensors();
  params.push_back(&x);
  params.push_back(&h);
  return gradient_error(
      [&](Graph &g) {
        Var out = gru_cell_step(g, layer, g.parameter(x), g.parameter(h));
        return sum(mul(out, g.constant(w)));
      },
      params);
}

/// Full pretrain model with the masked reconstruction loss.
inline double check_pretrain_loss(std::uint64_t seed, const ToyProblem &p = {}) {
  Rng rng(seed);
  ModelDims dims{p.input_dim, p.hidden_dim, 2, kNumEmotions};
  Model m = make_pretrain_model(dims, seed);
  randomize(m, rng);
  const Tensor original = random_tensor({p.steps * p.batch, p.input_dim}, rng);
  Tensor input(original.shape(), original.storage());
  std::vector<std::size_t> starts;
  for (std::size_t b = 0; b < p.batch; ++b) {
    const std::size_t s = rng.below(p.steps - p.mask_length + 1);
    starts.push_back(s);
    for (std::size_t t = s; t < s + p.mask_length; ++t)
      for (std::size_t c = 0; c < p.input_dim; ++c) input.at(t * p.batch + b, c) = -30.0;
  }
  return gradient_error(
      [&](Graph &g) {
        Var pred = backbone_forward(g, m, g.constant(input), p.steps, p.batch);
        return masked_reconstruction_loss(pred, original, starts, p.mask_length, p.steps, p.batch);
      },
      m.parameters());
}

/// Label loss through a model with a head. With a finetune model only the
/// head is tracked; a baseline model checks every layer.
inline double check_label_loss(std::uint64_t seed, ModelKind kind, Pooling pooling,
                               const ToyProblem &p = {}) {
  Rng rng(seed);
  ModelDims dims{p.input_dim, p.hidden_dim, 2, kNumEmotions};
  Model m = kind == ModelKind::kFinetune
                ? make_finetune_model(make_pretrain_model(dims, seed), seed + 1, pooling)
                : make_baseline_model(dims, seed, pooling);
  for (Tensor *t : m.parameters())
    for (double &v : t->data()) v = rng.uniform(-1.0, 1.0);
  const Tensor x = random_tensor({p.steps * p.batch, p.input_dim}, rng);
  const Tensor y = random_tensor({p.batch, kNumEmotions}, rng, 0.0, 3.0);
  return gradient_error(
      [&](Graph &g) {
        Var feats = backbone_forward(g, m, g.constant(x), p.steps, p.batch);
        return label_loss(head_forward(g, m, feats, p.steps, p.batch), y);
      },
      m.parameters());
}

namespace detail {

/// Runs `trials` random instances of an op check. A unary op gets no sb and
/// its second argument is a frozen dummy.
inline GradcheckEntry check_op(const std::string &name, std::uint64_t seed, std::size_t trials,
                               Shape sa, std::optional<Shape> sb, const std::function<Var(Var, Var)> &op) {
  GradcheckEntry e{name, trials, 0.0, false};
  for (std::size_t k = 0; k < trials; ++k) {
    Rng rng(derive_seed(seed, {k}));
    Tensor a = random_tensor(sa, rng);
    Tensor b = random_tensor(sb.value_or(Shape{1}), rng);
    a.set_requires_grad(true);
    b.set_requires_grad(sb.has_value());
    Tensor *params[] = {&a, &b};
    Tensor w;
    {
      Graph probe;
      w = random_tensor(op(probe.constant(a), probe.constant(b)).shape(), rng);
    }
    const double err = gradient_error(
        [&](Graph &g) { return sum(mul(op(g.parameter(a), g.parameter(b)), g.constant(w))); },
        params);
    e.max_error = std::max(e.max_error, err);
  }
  e.passed = e.max_error < kGradcheckTolerance;
  return e;
}

}  // namespace detail

/// The complete suite: every differentiable op (100 trials each) plus the GRU
/// cell, the pretrain loss and both label losses (model_trials seeds each).
inline GradcheckReport run_gradcheck_suite(std::uint64_t seed, std::size_t op_trials = 100,
                                           std::size_t model_trials = 20) {
  using detail::check_op;
  GradcheckReport rep;
  auto s = [&](std::uint64_t tag) { return derive_seed(seed, {tag}); };
  rep.entries.push_back(check_op("matmul", s(1), op_trials, {3, 4}, Shape{4, 2},
                                 [](Var a, Var b) { return matmul(a, b); }));
  rep.entries.push_back(check_op("add", s(2), op_trials, {3, 4}, Shape{3, 4},
                                 [](Var a, Var b) { return add(a, b); }));
  rep.entries.push_back(check_op("sub", s(3), op_trials, {3, 4}, Shape{3, 4},
                                 [](Var a, Var b) { return sub(a, b); }));
  rep.entries.push_back(check_op("mul", s(4), op_trials, {3, 4}, Shape{3, 4},
                                 [](Var a, Var b) { return mul(a, b); }));
  rep.entries.push_back(check_op("mul_scalar_broadcast", s(5), op_trials, {}, Shape{3, 4},
                                 [](Var a, Var b) { return mul(a, b); }));
  rep.entries.push_back(check_op("sigmoid", s(6), op_trials, {3, 4}, std::nullopt,
                                 [](Var a, Var) { return sigmoid(a); }));
  rep.entries.push_back(check_op("tanh", s(7), op_trials, {3, 4}, std::nullopt,
                                 [](Var a, Var) { return tanh(a); }));
  rep.entries.push_back(check_op("scalar_sub_scale", s(8), op_trials, {3, 4}, std::nullopt,
                                 [](Var a, Var) { return scale(sub(1.0, a), 0.7); }));
  rep.entries.push_back(check_op("add_rowwise", s(9), op_trials, {3, 4}, Shape{4},
                                 [](Var a, Var b) { return add_rowwise(a, b); }));
  rep.entries.push_back(check_op("slice_concat_rows", s(10), op_trials, {4, 3}, Shape{2, 3},
                                 [](Var a, Var b) {
                                   Var parts[] = {slice_rows(a, 1, 3), b, slice_rows(a, 0, 1)};
                                   return concat_rows(parts);
                                 }));
  rep.entries.push_back(check_op("gather_rows", s(11), op_trials, {4, 3}, std::nullopt,
                                 [](Var a, Var) { return gather_rows(a, {3, 0, 3, 1}); }));
  rep.entries.push_back(check_op("mse", s(12), op_trials, {3, 4}, std::nullopt,
                                 [](Var a, Var) {
                                   return mse(a, Tensor(Shape{3, 4}, 0.25));
                                 }));

  auto model_entry = [&](const std::string &name, const std::function<double(std::uint64_t)> &fn,
                         std::uint64_t tag) {
    GradcheckEntry e{name, model_trials, 0.0, false};
    for (std::size_t k = 0; k < model_trials; ++k) e.max_error = std::max(e.max_error, fn(derive_seed(s(tag), {k})));
    e.passed = e.max_error < kGradcheckTolerance;
    rep.entries.push_back(e);
  };
  model_entry("gru_cell_step", [](std::uint64_t sd) { return check_gru_cell(sd); }, 20);
  model_entry("pretrain_masked_loss", [](std::uint64_t sd) { return check_pretrain_loss(sd); }, 21);
  model_entry("finetune_head_loss",
              [](std::uint64_t sd) { return check_label_loss(sd, ModelKind::kFinetune, Pooling::kLast); }, 22);
  model_entry("baseline_label_loss",
              [](std::uint64_t sd) { return check_label_loss(sd, ModelKind::kBaseline, Pooling::kLast); }, 23);
  model_entry("baseline_label_loss_mean_pool",
              [](std::uint64_t sd) { return check_label_loss(sd, ModelKind::kBaseline, Pooling::kMean); }, 24);
  return rep;
}

}  // namespace msq
