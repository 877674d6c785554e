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

// GRU and dense layers and the three model assemblies:
//
//   pretrain:  GRU(D->H), GRU(H->H), Dense(H->D)             reconstructs D features
//   finetune:  pretrain layers (frozen) + Dense(D->6)         predicts 6 intensities
//   baseline:  same layout as finetune, all trainable, fresh init
//
// Batches of B equal-length sequences are laid out time-major: row t*B + b of
// a [T*B x D] matrix is timestep t of sequence b.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "msq/autodiff.hpp"
#include "msq/random.hpp"

namespace msq {

inline constexpr std::size_t kFeatureDim = 74;
inline constexpr std::size_t kNumEmotions = 6;

enum class LayerKind : std::uint8_t { kGru = 0, kDense = 1 };
enum class ModelKind { kPretrain, kFinetune, kBaseline };
enum class Pooling { kLast, kMean };

inline const char *to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kPretrain: return "pretrain";
    case ModelKind::kFinetune: return "finetune";
    case ModelKind::kBaseline: return "baseline";
  }
  return "?";
}

inline const char *to_string(Pooling p) { return p == Pooling::kLast ? "last" : "mean"; }

struct ModelDims {
  std::size_t input_dim = kFeatureDim;
  std::size_t hidden_dim = 256;
  std::size_t gru_layers = 2;
  std::size_t label_dim = kNumEmotions;
};

/// z = s(x W_z + h U_z + b_z), r = s(x W_r + h U_r + b_r),
/// c = tanh(x W_h + (r*h) U_h + b_h), h' = (1 - z) * h + z * c.
struct GruLayer {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Tensor w_z, w_r, w_h;  // [input_dim x hidden_dim]
  Tensor u_z, u_r, u_h;  // [hidden_dim x hidden_dim]
  Tensor b_z, b_r, b_h;  // [hidden_dim]

  GruLayer() = default;
  GruLayer(std::size_t in, std::size_t hidden)
      : input_dim(in),
        hidden_dim(hidden),
        w_z(Shape{in, hidden}),
        w_r(Shape{in, hidden}),
        w_h(Shape{in, hidden}),
        u_z(Shape{hidden, hidden}),
        u_r(Shape{hidden, hidden}),
        u_h(Shape{hidden, hidden}),
        b_z(Shape{hidden}),
        b_r(Shape{hidden}),
        b_h(Shape{hidden}) {}

  /// Checkpoint field order.
  std::vector<Tensor *> tensors() { return {&w_z, &w_r, &w_h, &u_z, &u_r, &u_h, &b_z, &b_r, &b_h}; }
  std::vector<const Tensor *> tensors() const {
    return {&w_z, &w_r, &w_h, &u_z, &u_r, &u_h, &b_z, &b_r, &b_h};
  }
};

struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Tensor weight;  // [in_dim x out_dim]
  Tensor bias;    // [out_dim]

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out)
      : in_dim(in), out_dim(out), weight(Shape{in, out}), bias(Shape{out}) {}

  std::vector<Tensor *> tensors() { return {&weight, &bias}; }
  std::vector<const Tensor *> tensors() const { return {&weight, &bias}; }
};

class Layer {
 public:
  Layer(GruLayer gru) : body_(std::move(gru)) { set_frozen(false); }
  Layer(DenseLayer dense) : body_(std::move(dense)) { set_frozen(false); }

  LayerKind kind() const {
    return std::holds_alternative<GruLayer>(body_) ? LayerKind::kGru : LayerKind::kDense;
  }
  std::size_t in_dim() const {
    return kind() == LayerKind::kGru ? gru().input_dim : dense().in_dim;
  }
  std::size_t out_dim() const {
    return kind() == LayerKind::kGru ? gru().hidden_dim : dense().out_dim;
  }

  GruLayer &gru() { return std::get<GruLayer>(body_); }
  const GruLayer &gru() const { return std::get<GruLayer>(body_); }
  DenseLayer &dense() { return std::get<DenseLayer>(body_); }
  const DenseLayer &dense() const { return std::get<DenseLayer>(body_); }

  std::vector<Tensor *> tensors() {
    return std::visit([](auto &l) { return l.tensors(); }, body_);
  }
  std::vector<const Tensor *> tensors() const {
    return std::visit([](const auto &l) { return l.tensors(); }, body_);
  }

  bool frozen() const { return frozen_; }
  void set_frozen(bool frozen) {
    frozen_ = frozen;
    for (Tensor *t : tensors()) t->set_requires_grad(!frozen);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor *t : tensors()) n += t->size();
    return n;
  }

 private:
  std::variant<GruLayer, DenseLayer> body_;
  bool frozen_ = false;
};

/// Ordered layers plus the settings needed to run them.
///
/// Parameter tensors are referenced by address during training, so a Model
/// must stay put while an optimizer or graph refers to it.
struct Model {
  ModelKind kind = ModelKind::kPretrain;
  ModelDims dims;
  Pooling pooling = Pooling::kLast;
  std::vector<Layer> layers;

  /// GRU stack plus the reconstruction dense layer.
  std::size_t backbone_size() const { return dims.gru_layers + 1; }
  bool has_head() const { return kind != ModelKind::kPretrain; }

  std::vector<Tensor *> parameters() {
    std::vector<Tensor *> out;
    for (Layer &l : layers)
      for (Tensor *t : l.tensors()) out.push_back(t);
    return out;
  }
  std::vector<const Tensor *> parameters() const {
    std::vector<const Tensor *> out;
    for (const Layer &l : layers)
      for (const Tensor *t : l.tensors()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Layer &l : layers) n += l.parameter_count();
    return n;
  }
  std::size_t trainable_parameter_count() const {
    std::size_t n = 0;
    for (const Layer &l : layers)
      if (!l.frozen()) n += l.parameter_count();
    return n;
  }
};

namespace detail {

inline void init_uniform(Tensor &t, double bound, Rng &rng) {
  for (double &v : t.data()) v = rng.uniform(-bound, bound);
}

inline GruLayer make_gru(std::size_t in, std::size_t hidden, Rng &rng) {
  GruLayer l(in, hidden);
  const double wb = 1.0 / std::sqrt(static_cast<double>(in));
  const double ub = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Tensor *w : {&l.w_z, &l.w_r, &l.w_h}) init_uniform(*w, wb, rng);
  for (Tensor *u : {&l.u_z, &l.u_r, &l.u_h}) init_uniform(*u, ub, rng);
  return l;
}

inline DenseLayer make_dense(std::size_t in, std::size_t out, Rng &rng) {
  DenseLayer l(in, out);
  init_uniform(l.weight, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  return l;
}

inline void check_dims(const ModelDims &d) {
  if (d.input_dim == 0 || d.hidden_dim == 0 || d.gru_layers == 0 || d.label_dim == 0)
    throw ContractError("model dimensions must be positive");
}

inline std::vector<Layer> make_backbone(const ModelDims &dims, Rng &rng) {
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < dims.gru_layers; ++i)
    layers.emplace_back(make_gru(i == 0 ? dims.input_dim : dims.hidden_dim, dims.hidden_dim, rng));
  layers.emplace_back(make_dense(dims.hidden_dim, dims.input_dim, rng));
  return layers;
}

}  // namespace detail

/// Weights uniform in +-1/sqrt(fan_in), biases zero.
inline Model make_pretrain_model(const ModelDims &dims, std::uint64_t seed) {
  detail::check_dims(dims);
  Rng rng(seed);
  Model m;
  m.kind = ModelKind::kPretrain;
  m.dims = dims;
  m.layers = detail::make_backbone(dims, rng);
  return m;
}

inline Model make_baseline_model(const ModelDims &dims, std::uint64_t seed,
                                 Pooling pooling = Pooling::kLast) {
  detail::check_dims(dims);
  Rng rng(seed);
  Model m;
  m.kind = ModelKind::kBaseline;
  m.dims = dims;
  m.pooling = pooling;
  m.layers = detail::make_backbone(dims, rng);
  m.layers.emplace_back(detail::make_dense(dims.input_dim, dims.label_dim, rng));
  return m;
}

/// Marks every backbone layer frozen, leaving only the head trainable.
inline void freeze_backbone(Model &model) {
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    model.layers[i].set_frozen(i < model.backbone_size());
}

/// Adopts the layers of a pretrained model, freezes them and adds a freshly
/// initialised label head.
inline Model make_finetune_model(const Model &pretrained, std::uint64_t head_seed,
                                 Pooling pooling = Pooling::kLast) {
  if (pretrained.kind != ModelKind::kPretrain ||
      pretrained.layers.size() != pretrained.backbone_size())
    throw ContractError("make_finetune_model: expected a pretrain model layout");
  Rng rng(head_seed);
  Model m;
  m.kind = ModelKind::kFinetune;
  m.dims = pretrained.dims;
  m.pooling = pooling;
  m.layers = pretrained.layers;
  m.layers.emplace_back(detail::make_dense(m.dims.input_dim, m.dims.label_dim, rng));
  freeze_backbone(m);
  return m;
}

/// Checks the layer layout against the declared kind and dimensions.
inline void validate_layout(const Model &m) {
  const ModelDims &d = m.dims;
  const std::size_t expected = m.backbone_size() + (m.has_head() ? 1 : 0);
  if (m.layers.size() != expected)
    throw ContractError("model layout: expected " + std::to_string(expected) + " layers, found " +
                        std::to_string(m.layers.size()));
  for (std::size_t i = 0; i < d.gru_layers; ++i) {
    const Layer &l = m.layers[i];
    const std::size_t in = i == 0 ? d.input_dim : d.hidden_dim;
    if (l.kind() != LayerKind::kGru || l.in_dim() != in || l.out_dim() != d.hidden_dim)
      throw ContractError("model layout: layer " + std::to_string(i) + " is not GRU(" +
                          std::to_string(in) + "->" + std::to_string(d.hidden_dim) + ")");
  }
  const Layer &recon = m.layers[d.gru_layers];
  if (recon.kind() != LayerKind::kDense || recon.in_dim() != d.hidden_dim ||
      recon.out_dim() != d.input_dim)
    throw ContractError("model layout: reconstruction layer mismatch");
  if (m.has_head()) {
    const Layer &head = m.layers.back();
    if (head.kind() != LayerKind::kDense || head.in_dim() != d.input_dim ||
        head.out_dim() != d.label_dim)
      throw ContractError("model layout: head layer mismatch");
  }
}

// ---------------------------------------------------------------------------
// Graph-level forward passes.

/// Gate update given precomputed input projections (biases included).
inline Var gru_recurrence(Graph &g, const GruLayer &p, Var xz, Var xr, Var xh, Var h_prev) {
  Var z = sigmoid(add(xz, matmul(h_prev, g.parameter(p.u_z))));
  Var r = sigmoid(add(xr, matmul(h_prev, g.parameter(p.u_r))));
  Var c = tanh(add(xh, matmul(mul(r, h_prev), g.parameter(p.u_h))));
  return add(mul(sub(1.0, z), h_prev), mul(z, c));
}

/// One GRU step on a [B x input_dim] input and [B x hidden_dim] state.
inline Var gru_cell_step(Graph &g, const GruLayer &p, Var x_t, Var h_prev) {
  if (x_t.value().rank() != 2 || x_t.value().cols() != p.input_dim ||
      h_prev.value().rank() != 2 || h_prev.value().cols() != p.hidden_dim ||
      h_prev.value().rows() != x_t.value().rows())
    throw ContractError("gru_cell_step: input " + shape_string(x_t.shape()) + " / state " +
                        shape_string(h_prev.shape()) + " do not fit GRU(" +
                        std::to_string(p.input_dim) + "->" + std::to_string(p.hidden_dim) + ")");
  Var xz = add_rowwise(matmul(x_t, g.parameter(p.w_z)), g.parameter(p.b_z));
  Var xr = add_rowwise(matmul(x_t, g.parameter(p.w_r)), g.parameter(p.b_r));
  Var xh = add_rowwise(matmul(x_t, g.parameter(p.w_h)), g.parameter(p.b_h));
  return gru_recurrence(g, p, xz, xr, xh, h_prev);
}

/// Runs a GRU over a time-major [T*B x input_dim] batch from a zero state.
inline Var gru_forward(Graph &g, const GruLayer &p, Var x, std::size_t steps, std::size_t batch) {
  // Input projections for all timesteps in one product each.
  Var xz = add_rowwise(matmul(x, g.parameter(p.w_z)), g.parameter(p.b_z));
  Var xr = add_rowwise(matmul(x, g.parameter(p.w_r)), g.parameter(p.b_r));
  Var xh = add_rowwise(matmul(x, g.parameter(p.w_h)), g.parameter(p.b_h));
  Var h = g.constant(Tensor(Shape{batch, p.hidden_dim}));
  std::vector<Var> states;
  states.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t lo = t * batch, hi = lo + batch;
    h = gru_recurrence(g, p, slice_rows(xz, lo, hi), slice_rows(xr, lo, hi),
                       slice_rows(xh, lo, hi), h);
    states.push_back(h);
  }
  return concat_rows(states);
}

inline Var dense_forward(Graph &g, const DenseLayer &p, Var x) {
  return add_rowwise(matmul(x, g.parameter(p.weight)), g.parameter(p.bias));
}

/// Backbone output [T*B x input_dim]: the reconstruction for a pretrain
/// model, the head input for the others.
inline Var backbone_forward(Graph &g, const Model &m, Var x, std::size_t steps,
                            std::size_t batch) {
  if (steps == 0 || batch == 0) throw ContractError("forward: empty input sequence");
  if (x.value().rank() != 2 || x.value().rows() != steps * batch ||
      x.value().cols() != m.dims.input_dim)
    throw DimensionError("forward: input " + shape_string(x.shape()) + " does not match " +
                         std::to_string(steps) + " steps x " + std::to_string(batch) +
                         " sequences x " + std::to_string(m.dims.input_dim) + " features");
  Var h = x;
  for (std::size_t i = 0; i < m.dims.gru_layers; ++i)
    h = gru_forward(g, m.layers[i].gru(), h, steps, batch);
  return dense_forward(g, m.layers[m.dims.gru_layers].dense(), h);
}

/// Collapses the time axis of a time-major batch to [B x D].
inline Var pool(Graph &g, Var seq, std::size_t steps, std::size_t batch, Pooling pooling) {
  if (pooling == Pooling::kLast) return slice_rows(seq, (steps - 1) * batch, steps * batch);
  // Averaging expressed as a product with a constant [B x T*B] matrix.
  Tensor avg(Shape{batch, steps * batch});
  const double w = 1.0 / static_cast<double>(steps);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t) avg.at(b, t * batch + b) = w;
  return matmul(g.constant(std::move(avg)), seq);
}

/// Label head applied to pooled backbone output: [B x label_dim].
inline Var head_forward(Graph &g, const Model &m, Var backbone_out, std::size_t steps,
                        std::size_t batch) {
  if (!m.has_head()) throw ContractError("model has no label head");
  return dense_forward(g, m.layers.back().dense(), pool(g, backbone_out, steps, batch, m.pooling));
}

// ---------------------------------------------------------------------------
// Losses.

/// MSE over the masked rows only. starts[b] is the first masked timestep of
/// sequence b; each sequence masks `length` consecutive timesteps.
inline Var masked_reconstruction_loss(Var pred, const Tensor &original,
                                      std::span<const std::size_t> starts, std::size_t length,
                                      std::size_t steps, std::size_t batch) {
  if (length == 0) throw ContractError("masked_reconstruction_loss: empty mask range");
  if (starts.size() != batch) throw ContractError("masked_reconstruction_loss: one start per sequence");
  if (pred.shape() != original.shape())
    throw DimensionError("masked_reconstruction_loss: prediction " + shape_string(pred.shape()) +
                         " vs original " + shape_string(original.shape()));
  std::vector<std::size_t> rows;
  rows.reserve(batch * length);
  for (std::size_t b = 0; b < batch; ++b) {
    if (starts[b] + length > steps)
      throw ContractError("masked_reconstruction_loss: mask range exceeds sequence length");
    for (std::size_t t = starts[b]; t < starts[b] + length; ++t) rows.push_back(t * batch + b);
  }
  Tensor target(Shape{rows.size(), original.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = original.row(rows[i]);
    std::copy(src.begin(), src.end(), target.row(i).begin());
  }
  return mse(gather_rows(pred, std::move(rows)), target);
}

/// Single-sequence form on plain tensors: [T x D] prediction and original,
/// mask covering timesteps [start, start + length).
inline double masked_reconstruction_loss(const Tensor &pred, const Tensor &original,
                                         std::size_t start, std::size_t length) {
  Graph g;
  const std::size_t steps = original.rank() == 2 ? original.rows() : 0;
  const std::size_t starts[] = {start};
  return masked_reconstruction_loss(g.constant(pred), original, starts, length, steps, 1)
      .value()
      .item();
}

/// Mean squared error between predicted and true intensities.
inline Var label_loss(Var pred, const Tensor &labels) { return mse(pred, labels); }

inline double label_loss(std::span<const double> pred, std::span<const double> label) {
  if (pred.size() != label.size()) throw DimensionError("label_loss: length mismatch");
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - label[i]) * (pred[i] - label[i]);
  return s / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Inference on plain tensors.

/// Stacks B equal-length [T x D] sequences time-major into [T*B x D].
inline Tensor stack_time_major(std::span<const Tensor *const> seqs) {
  if (seqs.empty()) throw ContractError("stack_time_major: no sequences");
  const std::size_t steps = seqs.front()->rows(), dim = seqs.front()->cols();
  const std::size_t batch = seqs.size();
  Tensor out(Shape{steps * batch, dim});
  for (std::size_t b = 0; b < batch; ++b) {
    if (seqs[b]->rows() != steps || seqs[b]->cols() != dim)
      throw DimensionError("stack_time_major: sequences differ in shape");
    for (std::size_t t = 0; t < steps; ++t) {
      auto src = seqs[b]->row(t);
      std::copy(src.begin(), src.end(), out.row(t * batch + b).begin());
    }
  }
  return out;
}

/// Per-timestep backbone output for one [T x D] sequence.
inline Tensor forward_sequence(const Model &m, const Tensor &seq) {
  if (seq.rank() != 2 || seq.rows() == 0) throw ContractError("forward_sequence: empty input");
  Graph g;
  Var out = backbone_forward(g, m, g.constant(Tensor(seq.shape(), seq.storage())), seq.rows(), 1);
  return Tensor(out.shape(), out.value().storage());
}

/// Label predictions [B x label_dim] for a batch of equal-length sequences.
inline Tensor predict_labels(const Model &m, std::span<const Tensor *const> seqs) {
  if (seqs.empty() || seqs.front()->rank() != 2 || seqs.front()->rows() == 0)
    throw ContractError("predict_labels: empty input");
  const std::size_t steps = seqs.front()->rows();
  Graph g;
  Var x = g.constant(stack_time_major(seqs));
  Var out = head_forward(g, m, backbone_forward(g, m, x, steps, seqs.size()), steps, seqs.size());
  return Tensor(out.shape(), out.value().storage());
}

/// Raw (unclamped) label prediction for one sequence.
inline std::vector<double> predict_label(const Model &m, const Tensor &seq) {
  const Tensor *one[] = {&seq};
  return predict_labels(m, one).storage();
}

}  // namespace msq
