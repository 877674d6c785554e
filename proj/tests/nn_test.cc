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

#include "msq/gradcheck_suite.hpp"
#include "msq/nn.hpp"
#include "test_util.hpp"

namespace msq {
namespace {

using test::random_matrix;

void zero_all(Model &m) {
  for (Tensor *t : m.parameters())
    for (double &v : t->data()) v = 0.0;
}

// Scalar-loop GRU step, written independently of the graph code.
std::vector<double> reference_gru_step(const GruLayer &p, std::span<const double> x,
                                       std::span<const double> h) {
  const std::size_t H = p.hidden_dim, D = p.input_dim;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> z(H), r(H), out(H);
  for (std::size_t j = 0; j < H; ++j) {
    double az = p.b_z[j], ar = p.b_r[j];
    for (std::size_t i = 0; i < D; ++i) {
      az += x[i] * p.w_z.at(i, j);
      ar += x[i] * p.w_r.at(i, j);
    }
    for (std::size_t i = 0; i < H; ++i) {
      az += h[i] * p.u_z.at(i, j);
      ar += h[i] * p.u_r.at(i, j);
    }
    z[j] = sig(az);
    r[j] = sig(ar);
  }
  for (std::size_t j = 0; j < H; ++j) {
    double ah = p.b_h[j];
    for (std::size_t i = 0; i < D; ++i) ah += x[i] * p.w_h.at(i, j);
    for (std::size_t i = 0; i < H; ++i) ah += r[i] * h[i] * p.u_h.at(i, j);
    out[j] = (1 - z[j]) * h[j] + z[j] * std::tanh(ah);
  }
  return out;
}

TEST(GruCell, ZeroParamsHalveState) {
  GruLayer p(3, 4);
  Graph g;
  const Tensor h = Tensor::matrix({{1, -2, 0.5, 8}});
  const Tensor out = gru_cell_step(g, p, g.constant(Tensor::matrix({{0.3, 0.1, -0.7}})), g.constant(h)).value();
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(out[j], 0.5 * h[j]);
}

TEST(GruCell, ZeroParamsZeroState) {
  GruLayer p(3, 4);
  Graph g;
  const Tensor out = gru_cell_step(g, p, g.constant(Tensor::matrix({{1, 2, 3}})), g.constant(Tensor(Shape{1, 4}))).value();
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(GruCell, MatchesScalarReference) {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    GruLayer p(1 + rng.below(5), 1 + rng.below(6));
    for (Tensor *t : p.tensors())
      for (double &v : t->data()) v = rng.uniform(-1, 1);
    const std::size_t B = 1 + rng.below(3);
    const Tensor x = random_matrix(rng, B, p.input_dim), h = random_matrix(rng, B, p.hidden_dim);
    Graph g;
    const Tensor out = gru_cell_step(g, p, g.constant(x), g.constant(h)).value();
    for (std::size_t b = 0; b < B; ++b) {
      const auto ref = reference_gru_step(p, x.row(b), h.row(b));
      for (std::size_t j = 0; j < p.hidden_dim; ++j) EXPECT_NEAR(out.at(b, j), ref[j], 1e-12);
    }
  }
}

TEST(GruCell, DimensionMismatchIsContractError) {
  GruLayer p(3, 4);
  Graph g;
  EXPECT_THROW(gru_cell_step(g, p, g.constant(Tensor(Shape{1, 2})), g.constant(Tensor(Shape{1, 4}))),
               ContractError);
  EXPECT_THROW(gru_cell_step(g, p, g.constant(Tensor(Shape{1, 3})), g.constant(Tensor(Shape{2, 4}))),
               ContractError);
}

TEST(GruCell, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 100; s < 110; ++s) EXPECT_LT(check_gru_cell(s), kGradcheckTolerance);
}

TEST(Layout, PretrainFinetuneBaseline) {
  const ModelDims dims;
  const Model pre = make_pretrain_model(dims, 1);
  ASSERT_EQ(pre.layers.size(), 3u);
  EXPECT_EQ(pre.layers[0].kind(), LayerKind::kGru);
  EXPECT_EQ(pre.layers[0].in_dim(), 74u);
  EXPECT_EQ(pre.layers[0].out_dim(), 256u);
  EXPECT_EQ(pre.layers[1].in_dim(), 256u);
  EXPECT_EQ(pre.layers[1].out_dim(), 256u);
  EXPECT_EQ(pre.layers[2].kind(), LayerKind::kDense);
  EXPECT_EQ(pre.layers[2].in_dim(), 256u);
  EXPECT_EQ(pre.layers[2].out_dim(), 74u);

  const auto gru_params = [](std::size_t in, std::size_t h) { return 3 * (in * h + h * h + h); };
  const std::size_t backbone = gru_params(74, 256) + gru_params(256, 256) + 256 * 74 + 74;
  EXPECT_EQ(pre.parameter_count(), backbone);

  const Model ft = make_finetune_model(pre, 2);
  ASSERT_EQ(ft.layers.size(), 4u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(ft.layers[i].frozen());
  EXPECT_FALSE(ft.layers[3].frozen());
  EXPECT_EQ(ft.layers[3].in_dim(), 74u);
  EXPECT_EQ(ft.layers[3].out_dim(), 6u);
  EXPECT_EQ(ft.trainable_parameter_count(), 74u * 6u + 6u);
  EXPECT_EQ(ft.trainable_parameter_count(), 450u);

  const Model bl = make_baseline_model(dims, 3);
  ASSERT_EQ(bl.layers.size(), 4u);
  for (const auto &l : bl.layers) EXPECT_FALSE(l.frozen());
  EXPECT_EQ(bl.parameter_count(), ft.parameter_count());
  EXPECT_EQ(bl.trainable_parameter_count(), bl.parameter_count());
  EXPECT_NO_THROW(validate_layout(pre));
  EXPECT_NO_THROW(validate_layout(ft));
  EXPECT_NO_THROW(validate_layout(bl));
}

TEST(Layout, FinetuneCopiesBackboneExactly) {
  const Model pre = make_pretrain_model(ModelDims{5, 7, 2, 6}, 4);
  const Model ft = make_finetune_model(pre, 5);
  const auto a = pre.parameters(), b = ft.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(test::bit_identical(*a[i], *b[i]));
    EXPECT_FALSE(b[i]->requires_grad());
  }
  EXPECT_THROW(make_finetune_model(ft, 1), ContractError);
}

TEST(Init, WeightsBoundedBiasesZero) {
  const Model m = make_baseline_model(ModelDims{9, 16, 2, 6}, 8);
  for (const auto &l : m.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.kind() == LayerKind::kGru ? l.in_dim() : l.in_dim()));
    if (l.kind() == LayerKind::kDense) {
      for (double v : l.dense().weight.data()) EXPECT_LE(std::abs(v), bound);
      for (double v : l.dense().bias.data()) EXPECT_EQ(v, 0.0);
    } else {
      for (double v : l.gru().b_z.data()) EXPECT_EQ(v, 0.0);
    }
  }
}

TEST(Forward, SingleStepZeroParamsGivesFinalBias) {
  Model m = make_pretrain_model(ModelDims{}, 1);
  zero_all(m);
  Rng rng(3);
  for (std::size_t c = 0; c < 74; ++c) m.layers[2].dense().bias[c] = rng.uniform(-1, 1);
  const Tensor out = forward_sequence(m, random_matrix(rng, 1, 74));
  ASSERT_EQ(out.shape(), (Shape{1, 74}));
  for (std::size_t c = 0; c < 74; ++c) EXPECT_EQ(out.at(0, c), m.layers[2].dense().bias[c]);
  // Zero params keep the state at zero, so every timestep gives the bias.
  const Tensor out5 = forward_sequence(m, random_matrix(rng, 5, 74));
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t c = 0; c < 74; ++c) EXPECT_EQ(out5.at(t, c), m.layers[2].dense().bias[c]);
}

TEST(Forward, OutputShapeIsTBy74) {
  const Model m = make_pretrain_model(ModelDims{74, 8, 2, 6}, 2);
  Rng rng(4);
  for (std::size_t T : {1u, 3u, 17u}) EXPECT_EQ(forward_sequence(m, random_matrix(rng, T, 74)).shape(), (Shape{T, 74}));
}

TEST(Forward, EmptyInputRejected) {
  const Model m = make_pretrain_model(ModelDims{74, 8, 2, 6}, 2);
  EXPECT_THROW(forward_sequence(m, Tensor(Shape{0, 74})), ContractError);
}

TEST(Forward, Causality) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Model m = make_pretrain_model(ModelDims{6, 5, 2, 6}, rng.next());
    const std::size_t T = 1 + rng.below(8);
    const Tensor x = random_matrix(rng, T, 6);
    Tensor x2 = random_matrix(rng, 2 * T, 6);
    for (std::size_t i = 0; i < x.size(); ++i) x2[i] = x[i];
    const Tensor a = forward_sequence(m, x), b = forward_sequence(m, x2);
    // The product kernel depends on the row count, so only rounding may differ.
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(Forward, BatchingDoesNotChangeResults) {
  Rng rng(6);
  const Model m = make_baseline_model(ModelDims{6, 5, 2, 6}, 9);
  const Tensor a = random_matrix(rng, 7, 6), b = random_matrix(rng, 7, 6);
  const Tensor *both[] = {&a, &b};
  const Tensor batch = predict_labels(m, both);
  const auto pa = predict_label(m, a), pb = predict_label(m, b);
  for (std::size_t j = 0; j < 6; ++j) {
    EXPECT_NEAR(batch.at(0, j), pa[j], 1e-14);
    EXPECT_NEAR(batch.at(1, j), pb[j], 1e-14);
  }
}

TEST(PredictLabel, ZeroHeadGivesHeadBias) {
  Model m = make_finetune_model(make_pretrain_model(ModelDims{}, 1), 2);
  DenseLayer &head = m.layers.back().dense();
  for (double &v : head.weight.data()) v = 0.0;
  const std::vector<double> bias = {0.1, 0.2, 0.3, 1.4, 2.5, 0.6};
  for (std::size_t j = 0; j < 6; ++j) head.bias[j] = bias[j];
  Rng rng(7);
  const auto p = predict_label(m, random_matrix(rng, 4, 74));
  EXPECT_EQ(p, bias);
}

TEST(PredictLabel, Deterministic) {
  const Model m = make_baseline_model(ModelDims{74, 8, 2, 6}, 3);
  Rng rng(8);
  const Tensor x = random_matrix(rng, 6, 74);
  EXPECT_EQ(predict_label(m, x), predict_label(m, x));
}

TEST(PredictLabel, MeanPoolingAveragesTimesteps) {
  Model m = make_baseline_model(ModelDims{4, 3, 2, 6}, 3, Pooling::kMean);
  Rng rng(9);
  const Tensor x = random_matrix(rng, 5, 4);
  const Tensor seq = forward_sequence(m, x);
  const DenseLayer &head = m.layers.back().dense();
  const auto p = predict_label(m, x);
  for (std::size_t j = 0; j < 6; ++j) {
    double acc = head.bias[j];
    for (std::size_t c = 0; c < 4; ++c) {
      double mean = 0;
      for (std::size_t t = 0; t < 5; ++t) mean += seq.at(t, c);
      acc += mean / 5.0 * head.weight.at(c, j);
    }
    EXPECT_NEAR(p[j], acc, 1e-12);
  }
}

TEST(PredictLabel, HeadGradientAndFrozenBackbone) {
  for (std::uint64_t s = 0; s < 5; ++s)
    EXPECT_LT(check_label_loss(s, ModelKind::kFinetune, Pooling::kLast), kGradcheckTolerance);
  Model m = make_finetune_model(make_pretrain_model(ModelDims{5, 7, 2, 6}, 1), 2);
  Rng rng(10);
  const Tensor x = random_matrix(rng, 4, 5);
  const Tensor y = random_matrix(rng, 1, 6, 0, 3);
  Graph g;
  const GradientMap grads = g.backward(label_loss(head_forward(g, m, backbone_forward(g, m, g.constant(x), 4, 1), 4, 1), y));
  EXPECT_EQ(grads.size(), 2u);
  for (std::size_t i = 0; i < 3; ++i)
    for (const Tensor *t : m.layers[i].tensors()) EXPECT_EQ(grads.count(t), 0u);
}

TEST(MaskedLoss, Examples) {
  Rng rng(11);
  const Tensor orig = random_matrix(rng, 40, 74);
  EXPECT_EQ(masked_reconstruction_loss(orig, orig, 5, 30), 0.0);
  Tensor plus(orig.shape(), orig.storage());
  for (double &v : plus.data()) v += 1.0;
  EXPECT_NEAR(masked_reconstruction_loss(plus, orig, 10, 30), 1.0, 1e-12);
}

TEST(MaskedLoss, HandBuiltTwoStepMask) {
  Tensor orig(Shape{4, 2}), pred(Shape{4, 2});
  // Residuals at t=1: (1, 2); t=2: (3, -1). Other rows carry big residuals
  // that must be ignored.
  pred.at(0, 0) = 100;
  pred.at(1, 0) = 1;
  pred.at(1, 1) = 2;
  pred.at(2, 0) = 3;
  pred.at(2, 1) = -1;
  pred.at(3, 1) = -50;
  EXPECT_DOUBLE_EQ(masked_reconstruction_loss(pred, orig, 1, 2), (1.0 + 4.0 + 9.0 + 1.0) / 4.0);
}

TEST(MaskedLoss, ContractErrors) {
  const Tensor t(Shape{10, 3});
  EXPECT_THROW(masked_reconstruction_loss(t, t, 0, 0), ContractError);
  EXPECT_THROW(masked_reconstruction_loss(t, t, 5, 6), ContractError);
}

TEST(MaskedLoss, BatchedEqualsPerSequenceAverage) {
  Rng rng(12);
  const std::size_t T = 9, B = 3, L = 4;
  std::vector<Tensor> preds, origs;
  std::vector<std::size_t> starts;
  for (std::size_t b = 0; b < B; ++b) {
    preds.push_back(random_matrix(rng, T, 5));
    origs.push_back(random_matrix(rng, T, 5));
    starts.push_back(rng.below(T - L + 1));
  }
  std::vector<const Tensor *> pp, oo;
  double expected = 0;
  for (std::size_t b = 0; b < B; ++b) {
    pp.push_back(&preds[b]);
    oo.push_back(&origs[b]);
    expected += masked_reconstruction_loss(preds[b], origs[b], starts[b], L) / B;
  }
  Graph g;
  const double got = masked_reconstruction_loss(g.constant(stack_time_major(pp)), stack_time_major(oo), starts, L, T, B).value().item();
  EXPECT_NEAR(got, expected, 1e-14);
}

TEST(LabelLoss, Examples) {
  const std::vector<double> y = {0, 1, 2, 3, 0.5, 1.5};
  EXPECT_EQ(label_loss(y, y), 0.0);
  auto p = y;
  p[0] += 1;
  EXPECT_DOUBLE_EQ(label_loss(p, y), 1.0 / 6.0);
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> a(6), b(6);
    for (auto &v : a) v = rng.uniform(-3, 3);
    for (auto &v : b) v = rng.uniform(-3, 3);
    EXPECT_EQ(label_loss(a, b), label_loss(b, a));
  }
}

TEST(ModelGradients, FullPretrainModel) {
  ToyProblem p;
  p.steps = 4;
  p.mask_length = 2;
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_LT(check_pretrain_loss(s, p), kGradcheckTolerance);
}

}  // namespace
}  // namespace msq
