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

// Define-by-run reverse-mode differentiation. A Graph records every
// operation applied to its variables in creation order, which is already a
// topological order, so backward() is a single reverse sweep.
//
// backward() may be called repeatedly on the same graph: it clears all
// intermediate gradients first, so repeated calls return identical maps.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "msq/error.hpp"
#include "msq/tensor.hpp"

namespace msq {

/// Gradients keyed by the parameter tensor they belong to.
using GradientMap = std::unordered_map<const Tensor *, Tensor>;

class Graph;

/// Handle to one node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph *graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph &graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor &value() const;
  const Shape &shape() const { return value().shape(); }
  bool tracks() const;

 private:
  Graph *graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  /// Receives the output gradient and pushes contributions to inputs.
  using BackwardFn = std::function<void(Graph &, std::span<const double>)>;

  Graph() = default;
  Graph(const Graph &) = delete;
  Graph &operator=(const Graph &) = delete;

  /// Untracked input.
  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
    return Var(this, nodes_.size() - 1);
  }

  /// Leaf bound to a parameter tensor. Tracks iff the tensor requires grad.
  /// Repeated calls with the same tensor return the same node.
  Var parameter(const Tensor &param) {
    auto it = leaf_index_.find(&param);
    if (it != leaf_index_.end()) return Var(this, it->second);
    Tensor copy(param.shape(), param.storage());
    nodes_.push_back(Node{std::move(copy), {}, param.requires_grad(), &param, {}});
    leaf_index_.emplace(&param, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
  }

  /// Records an op result. The backward rule is kept only if some input tracks.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool tracks = false;
    for (const Var &v : inputs) tracks = tracks || v.tracks();
    return record(std::move(value), tracks, std::move(fn));
  }

  Var record(Tensor value, bool tracks, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), {}, tracks, nullptr,
                          tracks ? std::move(fn) : BackwardFn{}});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor &value(std::size_t id) const { return nodes_[id].value; }
  bool tracks(std::size_t id) const { return nodes_[id].tracks; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds g into the gradient of node id; ignored for untracked nodes.
  void accumulate(std::size_t id, std::span<const double> g) {
    Node &n = nodes_[id];
    if (!n.tracks) return;
    if (n.grad.empty()) {
      n.grad.assign(g.begin(), g.end());
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }

  /// Mutable gradient buffer of a tracked node, allocated zeroed on demand.
  /// Returns an empty span for untracked nodes.
  std::span<double> grad_buffer(std::size_t id) {
    Node &n = nodes_[id];
    if (!n.tracks) return {};
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  }

  /// Gradients of a scalar loss w.r.t. every tracked parameter leaf.
  GradientMap backward(Var loss) {
    if (&loss.graph() != this)
      throw ContractError("backward: loss belongs to a different graph");
    if (loss.value().size() != 1)
      throw ContractError("backward: loss must be scalar, got shape " +
                          shape_string(loss.shape()));
    GradientMap grads;
    if (!loss.tracks()) {
      log_warning("backward: loss has no tracked ancestors; no gradients");
      return grads;
    }
    for (Node &n : nodes_) n.grad.clear();
    nodes_[loss.id()].grad.assign(1, 1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node &n = nodes_[i];
      if (!n.tracks || n.grad.empty()) continue;
      if (n.leaf != nullptr) {
        grads.emplace(n.leaf, Tensor(n.value.shape(), n.grad));
        continue;
      }
      if (n.backward) {
        // Move the gradient out so the callback may resize the node table.
        std::vector<double> g = std::move(n.grad);
        n.backward(*this, g);
      }
    }
    return grads;
  }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool tracks = false;
    const Tensor *leaf = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor *, std::size_t> leaf_index_;
};

inline const Tensor &Var::value() const { return graph_->value(id_); }
inline bool Var::tracks() const { return graph_->tracks(id_); }

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

inline ConstMatrixMap as_matrix(std::span<const double> d, std::size_t r, std::size_t c) {
  return ConstMatrixMap(d.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline MatrixMap as_matrix(std::span<double> d, std::size_t r, std::size_t c) {
  return MatrixMap(d.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

inline void check_same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw ContractError("operands belong to different graphs");
}

/// Copy into an Eigen-owned matrix. Eigen peels unaligned leading elements
/// in some kernels, so products over raw vector storage could round
/// differently from run to run with wide vector units; owned matrices are
/// always fully aligned.
inline RowMatrix aligned_copy(std::span<const double> d, std::size_t r, std::size_t c) {
  return as_matrix(d, r, c);
}

}  // namespace detail

/// [m x k] * [k x n] -> [m x n].
inline Var matmul(Var a, Var b) {
  detail::check_same_graph(a, b);
  const Tensor &av = a.value();
  const Tensor &bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
    throw DimensionError("matmul: incompatible shapes " + shape_string(av.shape()) +
                         " and " + shape_string(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out(Shape{m, n});
  const detail::RowMatrix prod = detail::aligned_copy(av.data(), m, k) * detail::aligned_copy(bv.data(), k, n);
  detail::as_matrix(out.data(), m, n) = prod;
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b},
                          [ia, ib, m, k, n](Graph &g, std::span<const double> dc) {
                            const detail::RowMatrix dC = detail::aligned_copy(dc, m, n);
                            if (auto ga = g.grad_buffer(ia); !ga.empty()) {
                              const detail::RowMatrix d =
                                  dC * detail::aligned_copy(g.value(ib).data(), k, n).transpose();
                              detail::as_matrix(ga, m, k) += d;
                            }
                            if (auto gb = g.grad_buffer(ib); !gb.empty()) {
                              const detail::RowMatrix d =
                                  detail::aligned_copy(g.value(ia).data(), m, k).transpose() * dC;
                              detail::as_matrix(gb, k, n) += d;
                            }
                          });
}

enum class ElementwiseOp { kAdd, kSub, kMul };

/// Elementwise add/sub/mul. Shapes must match, except that either operand may
/// be a single-element tensor, which is broadcast.
inline Var elementwise(ElementwiseOp op, Var a, Var b) {
  detail::check_same_graph(a, b);
  const Tensor &av = a.value();
  const Tensor &bv = b.value();
  const bool a_scalar = av.size() == 1 && bv.size() != 1;
  const bool b_scalar = bv.size() == 1 && av.size() != 1;
  if (!a_scalar && !b_scalar && av.shape() != bv.shape())
    throw DimensionError("elementwise: shape mismatch " + shape_string(av.shape()) +
                         " vs " + shape_string(bv.shape()));
  const Shape &shape = a_scalar ? bv.shape() : av.shape();
  const std::size_t n = shape_size(shape);
  Tensor out(shape);
  auto ad = av.data();
  auto bd = bv.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ad[a_scalar ? 0 : i];
    const double y = bd[b_scalar ? 0 : i];
    switch (op) {
      case ElementwiseOp::kAdd: out[i] = x + y; break;
      case ElementwiseOp::kSub: out[i] = x - y; break;
      case ElementwiseOp::kMul: out[i] = x * y; break;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(
      std::move(out), {a, b},
      [op, ia, ib, n, a_scalar, b_scalar](Graph &g, std::span<const double> dc) {
        auto ga = g.grad_buffer(ia);
        auto gb = g.grad_buffer(ib);
        auto av = g.value(ia).data();
        auto bv = g.value(ib).data();
        for (std::size_t i = 0; i < n; ++i) {
          double da = dc[i], db = dc[i];
          if (op == ElementwiseOp::kSub) db = -dc[i];
          if (op == ElementwiseOp::kMul) {
            da = dc[i] * bv[b_scalar ? 0 : i];
            db = dc[i] * av[a_scalar ? 0 : i];
          }
          if (!ga.empty()) ga[a_scalar ? 0 : i] += da;
          if (!gb.empty()) gb[b_scalar ? 0 : i] += db;
        }
      });
}

inline Var add(Var a, Var b) { return elementwise(ElementwiseOp::kAdd, a, b); }
inline Var sub(Var a, Var b) { return elementwise(ElementwiseOp::kSub, a, b); }
inline Var mul(Var a, Var b) { return elementwise(ElementwiseOp::kMul, a, b); }

/// s - a, with s a plain number.
inline Var sub(double s, Var a) {
  const Tensor &av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = s - av[i];
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph &g, std::span<const double> dc) {
    auto ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < dc.size(); ++i) ga[i] -= dc[i];
  });
}

/// s * a, with s a plain number.
inline Var scale(Var a, double s) {
  const Tensor &av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = s * av[i];
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia, s](Graph &g, std::span<const double> dc) {
    auto ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < dc.size(); ++i) ga[i] += s * dc[i];
  });
}

enum class ActivationOp { kSigmoid, kTanh };

inline double sigmoid_value(double x) {
  // Split on sign so exp never overflows.
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var activation(ActivationOp op, Var a) {
  const Tensor &av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i)
    out[i] = op == ActivationOp::kSigmoid ? sigmoid_value(av[i]) : std::tanh(av[i]);
  Graph &graph = a.graph();
  const std::size_t ia = a.id();
  const std::size_t io = graph.size();  // id the output will receive
  return graph.record(std::move(out), {a}, [op, ia, io](Graph &g, std::span<const double> dc) {
    auto ga = g.grad_buffer(ia);
    auto y = g.value(io).data();
    for (std::size_t i = 0; i < dc.size(); ++i) {
      const double d = op == ActivationOp::kSigmoid ? y[i] * (1.0 - y[i]) : 1.0 - y[i] * y[i];
      ga[i] += dc[i] * d;
    }
  });
}

inline Var sigmoid(Var a) { return activation(ActivationOp::kSigmoid, a); }
inline Var tanh(Var a) { return activation(ActivationOp::kTanh, a); }

/// Sum of all entries as a scalar.
inline Var sum(Var a) {
  const Tensor &av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v;
  const std::size_t ia = a.id();
  return a.graph().record(Tensor::scalar(s), {a}, [ia](Graph &g, std::span<const double> dc) {
    auto ga = g.grad_buffer(ia);
    for (double &x : ga) x += dc[0];
  });
}

inline Var mean(Var a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

/// Adds a bias vector [C] to every row of a matrix [R x C].
inline Var add_rowwise(Var m, Var bias) {
  detail::check_same_graph(m, bias);
  const Tensor &mv = m.value();
  const Tensor &bv = bias.value();
  if (mv.rank() != 2 || bv.size() != mv.cols())
    throw DimensionError("add_rowwise: bias " + shape_string(bv.shape()) +
                         " does not fit matrix " + shape_string(mv.shape()));
  const std::size_t r = mv.rows(), c = mv.cols();
  Tensor out(mv.shape(), mv.storage());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  const std::size_t im = m.id(), ib = bias.id();
  return m.graph().record(std::move(out), {m, bias},
                          [im, ib, r, c](Graph &g, std::span<const double> dc) {
                            g.accumulate(im, dc);
                            if (auto gb = g.grad_buffer(ib); !gb.empty())
                              for (std::size_t i = 0; i < r; ++i)
                                for (std::size_t j = 0; j < c; ++j) gb[j] += dc[i * c + j];
                          });
}

/// Rows [begin, end) of a matrix.
inline Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor &av = a.value();
  if (av.rank() != 2 || begin >= end || end > av.rows())
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_string(av.shape()));
  const std::size_t c = av.cols();
  auto src = av.data().subspan(begin * c, (end - begin) * c);
  Tensor out(Shape{end - begin, c}, std::vector<double>(src.begin(), src.end()));
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a},
                          [ia, begin, c](Graph &g, std::span<const double> dc) {
                            auto ga = g.grad_buffer(ia);
                            for (std::size_t i = 0; i < dc.size(); ++i) ga[begin * c + i] += dc[i];
                          });
}

/// Stacks matrices with equal column counts vertically.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  Graph &graph = parts.front().graph();
  const std::size_t c = parts.front().value().cols();
  std::size_t total = 0;
  bool tracks = false;
  for (const Var &p : parts) {
    if (&p.graph() != &graph) throw ContractError("operands belong to different graphs");
    if (p.value().rank() != 2 || p.value().cols() != c)
      throw DimensionError("concat_rows: column mismatch " + shape_string(p.shape()));
    total += p.value().rows();
    tracks = tracks || p.tracks();
  }
  std::vector<double> data;
  data.reserve(total * c);
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  for (const Var &p : parts) {
    auto d = p.value().data();
    data.insert(data.end(), d.begin(), d.end());
    ids.push_back(p.id());
  }
  return graph.record(Tensor(Shape{total, c}, std::move(data)), tracks,
                      [ids = std::move(ids)](Graph &g, std::span<const double> dc) {
                        std::size_t offset = 0;
                        for (std::size_t id : ids) {
                          const std::size_t n = g.value(id).size();
                          g.accumulate(id, dc.subspan(offset, n));
                          offset += n;
                        }
                      });
}

/// Selects rows by index (repeats allowed); backward scatter-adds.
inline Var gather_rows(Var a, std::vector<std::size_t> rows) {
  const Tensor &av = a.value();
  if (av.rank() != 2) throw DimensionError("gather_rows: expected a matrix");
  const std::size_t c = av.cols();
  Tensor out(Shape{rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.rows())
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                           shape_string(av.shape()));
    auto src = av.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a},
                          [ia, c, rows = std::move(rows)](Graph &g, std::span<const double> dc) {
                            auto ga = g.grad_buffer(ia);
                            for (std::size_t i = 0; i < rows.size(); ++i)
                              for (std::size_t j = 0; j < c; ++j) ga[rows[i] * c + j] += dc[i * c + j];
                          });
}

inline Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a},
                          [ia](Graph &g, std::span<const double> dc) { g.accumulate(ia, dc); });
}

/// Mean of squared differences between a prediction and a constant target.
inline Var mse(Var pred, const Tensor &target) {
  if (pred.shape() != target.shape())
    throw DimensionError("mse: shape mismatch " + shape_string(pred.shape()) + " vs " +
                         shape_string(target.shape()));
  Var diff = sub(pred, pred.graph().constant(Tensor(target.shape(), target.storage())));
  return mean(mul(diff, diff));
}

}  // namespace msq
