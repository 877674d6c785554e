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

// Training procedures. Every run is a deterministic function of its data,
// config and seed. Sequences are bucketed by length and each batch holds
// sequences of one length, so no padding enters the math.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msq/data.hpp"
#include "msq/data_io.hpp"
#include "msq/nn.hpp"
#include "msq/optimizer.hpp"
#include "msq/random.hpp"

namespace msq {

enum class ReconLoss { kMasked, kFull };

inline const char *to_string(ReconLoss r) { return r == ReconLoss::kMasked ? "masked" : "full"; }

struct TrainConfig {
  std::size_t epochs = 30;  // fine-tune and baseline
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::size_t pretrain_epochs = 10;
  std::uint64_t seed = 0;
  ReconLoss recon_loss = ReconLoss::kMasked;
  Pooling pooling = Pooling::kLast;
  MaskSpec mask;
  ModelDims dims;

  void validate() const {
    if (epochs == 0 || batch_size == 0 || pretrain_epochs == 0)
      throw ContractError("train config: epochs, batch_size and pretrain_epochs must be positive");
    if (!(learning_rate > 0)) throw ContractError("train config: learning_rate must be positive");
    if (mask.mask_length == 0) throw ContractError("train config: mask length must be >= 1");
  }
};

struct TrainingTrace {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_seconds;
  std::vector<std::uint64_t> epoch_order;  // digest of the batch order
  TrainConfig config;
  std::uint64_t seed = 0;
};

/// Writes `epoch,loss`. Wall-clock time is kept out of the CSV so that reruns
/// produce identical bytes; see write_trace_timing.
inline void write_trace_csv(const std::filesystem::path &path, const TrainingTrace &trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < trace.epoch_loss.size(); ++e)
    out << e + 1 << ',' << format_double(trace.epoch_loss[e]) << '\n';
}

/// One `epoch <k>: <seconds> s` line per epoch.
inline void write_trace_timing(const std::filesystem::path &path, const TrainingTrace &trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (std::size_t e = 0; e < trace.epoch_seconds.size(); ++e)
    out << "epoch " << e + 1 << ": " << format_double(trace.epoch_seconds[e]) << " s\n";
}

struct TrainedModel {
  Model model;
  TrainingTrace trace;
};

/// Sequences without labels, as consumed by pretraining.
struct UnlabeledView {
  std::span<const FeatureSequence> sequences;
  bool standardized = false;
};

inline UnlabeledView unlabeled_view(const Dataset &ds) {
  return UnlabeledView{ds.sequences, ds.standardized()};
}

// Seed tags keep the random streams of different consumers apart.
namespace seed_tag {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kMask = 2;
inline constexpr std::uint64_t kOrder = 3;
inline constexpr std::uint64_t kHead = 4;
inline constexpr std::uint64_t kBaseline = 5;
}  // namespace seed_tag

/// Groups item indices by length, shuffles inside each bucket, cuts batches of
/// at most batch_size and shuffles the batch order.
inline std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> lengths,
                                                          std::size_t batch_size, Rng &rng) {
  std::map<std::size_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < lengths.size(); ++i) buckets[lengths[i]].push_back(i);
  std::vector<std::vector<std::size_t>> batches;
  for (auto &[len, items] : buckets) {
    rng.shuffle(items);
    for (std::size_t i = 0; i < items.size(); i += batch_size)
      batches.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i),
                           items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), i + batch_size)));
  }
  rng.shuffle(batches);
  return batches;
}

inline std::uint64_t order_digest(const std::vector<std::vector<std::size_t>> &batches) {
  std::uint64_t h = 0;
  for (const auto &b : batches)
    for (std::size_t i : b) h = splitmix64(h ^ i);
  return h;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline Tensor label_matrix(const Dataset &ds, std::span<const std::size_t> items) {
  Tensor y(Shape{items.size(), kNumEmotions});
  for (std::size_t b = 0; b < items.size(); ++b) {
    const auto &lab = ds.label(ds.sequences[items[b]].id);
    std::copy(lab.intensities.begin(), lab.intensities.end(), y.row(b).begin());
  }
  return y;
}

inline void require_labeled(const Dataset &ds, const char *what) {
  if (ds.sequences.empty()) throw ContractError(std::string(what) + ": empty labeled set");
  for (const auto &s : ds.sequences)
    if (!ds.has_label(s.id))
      throw ContractError(std::string(what) + ": sample '" + s.id + "' has no label");
}

inline std::vector<std::size_t> lengths_of(const Dataset &ds) {
  std::vector<std::size_t> out;
  for (const auto &s : ds.sequences) out.push_back(s.length());
  return out;
}

}  // namespace detail

/// Masked-timestep pretraining. Each epoch draws a fresh mask for every
/// sequence of at least mask_length steps; shorter ones are skipped.
inline TrainedModel pretrain(UnlabeledView data, const TrainConfig &cfg) {
  cfg.validate();
  if (!data.standardized) throw ContractError("pretrain: dataset must be standardized first");
  std::vector<const FeatureSequence *> eligible;
  for (const auto &s : data.sequences)
    if (s.length() >= cfg.mask.mask_length) eligible.push_back(&s);
  if (eligible.empty()) throw ContractError("pretrain: no sequence is long enough to mask");
  if (eligible.size() < data.sequences.size())
    log_info("pretrain: skipped " + std::to_string(data.sequences.size() - eligible.size()) +
             " sequence(s) shorter than the mask");

  TrainedModel out{make_pretrain_model(cfg.dims, derive_seed(cfg.seed, {seed_tag::kInit})), {}};
  out.trace.config = cfg;
  out.trace.seed = cfg.seed;
  Model &model = out.model;
  auto params = model.parameters();
  Adam adam(params, AdamOptions{cfg.learning_rate});

  std::vector<std::size_t> lengths;
  for (const auto *s : eligible) lengths.push_back(s->length());

  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng mask_rng(derive_seed(cfg.seed, {seed_tag::kMask, epoch}));
    std::vector<MaskedSequence> masked;
    masked.reserve(eligible.size());
    for (const auto *s : eligible) masked.push_back(mask_sequence(*s, cfg.mask, mask_rng));
    Rng order_rng(derive_seed(cfg.seed, {seed_tag::kOrder, epoch}));
    const auto batches = make_batches(lengths, cfg.batch_size, order_rng);

    double total = 0;
    for (const auto &batch : batches) {
      const std::size_t steps = lengths[batch.front()], bsz = batch.size();
      std::vector<const Tensor *> inputs, originals;
      std::vector<std::size_t> starts;
      for (std::size_t i : batch) {
        inputs.push_back(&masked[i].masked);
        originals.push_back(&eligible[i]->features);
        starts.push_back(masked[i].start);
      }
      Graph g;
      Var pred = backbone_forward(g, model, g.constant(stack_time_major(inputs)), steps, bsz);
      const Tensor target = stack_time_major(originals);
      Var loss = cfg.recon_loss == ReconLoss::kMasked
                     ? masked_reconstruction_loss(pred, target, starts, cfg.mask.mask_length, steps, bsz)
                     : mse(pred, target);
      total += loss.value().item() * static_cast<double>(bsz);
      adam.step(g.backward(loss));
    }
    out.trace.epoch_loss.push_back(total / static_cast<double>(eligible.size()));
    out.trace.epoch_seconds.push_back(detail::seconds_since(t0));
    out.trace.epoch_order.push_back(order_digest(batches));
  }
  return out;
}

/// Pooled backbone output [n x input_dim] for every sample, one batch per
/// length bucket, in dataset order.
inline Tensor backbone_features(const Model &model, const Dataset &ds) {
  Tensor feats(Shape{ds.size(), model.dims.input_dim});
  std::map<std::size_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < ds.size(); ++i) buckets[ds.sequences[i].length()].push_back(i);
  for (const auto &[steps, items] : buckets) {
    std::vector<const Tensor *> seqs;
    for (std::size_t i : items) seqs.push_back(&ds.sequences[i].features);
    Graph g;
    Var out = backbone_forward(g, model, g.constant(stack_time_major(seqs)), steps, items.size());
    Var pooled = pool(g, out, steps, items.size(), model.pooling);
    for (std::size_t b = 0; b < items.size(); ++b) {
      auto src = pooled.value().row(b);
      std::copy(src.begin(), src.end(), feats.row(items[b]).begin());
    }
  }
  return feats;
}

/// Trains a fresh label head on top of a frozen copy of `pretrained`.
///
/// The backbone is frozen, so its pooled output is computed once per sample
/// and reused for every epoch; only the head sees gradients.
inline TrainedModel finetune(const Model &pretrained, const Dataset &labeled, const TrainConfig &cfg) {
  cfg.validate();
  detail::require_labeled(labeled, "finetune");
  TrainedModel out{make_finetune_model(pretrained, derive_seed(cfg.seed, {seed_tag::kHead}), cfg.pooling), {}};
  out.trace.config = cfg;
  out.trace.seed = cfg.seed;
  Model &model = out.model;
  auto params = model.parameters();
  Adam adam(params, AdamOptions{cfg.learning_rate});

  const Tensor feats = backbone_features(model, labeled);
  const auto lengths = detail::lengths_of(labeled);
  const DenseLayer &head = model.layers.back().dense();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng order_rng(derive_seed(cfg.seed, {seed_tag::kOrder, epoch}));
    const auto batches = make_batches(lengths, cfg.batch_size, order_rng);
    double total = 0;
    for (const auto &batch : batches) {
      Tensor x(Shape{batch.size(), feats.cols()});
      for (std::size_t b = 0; b < batch.size(); ++b) {
        auto src = feats.row(batch[b]);
        std::copy(src.begin(), src.end(), x.row(b).begin());
      }
      Graph g;
      Var pred = dense_forward(g, head, g.constant(std::move(x)));
      Var loss = label_loss(pred, detail::label_matrix(labeled, batch));
      total += loss.value().item() * static_cast<double>(batch.size());
      adam.step(g.backward(loss));
    }
    out.trace.epoch_loss.push_back(total / static_cast<double>(labeled.size()));
    out.trace.epoch_seconds.push_back(detail::seconds_since(t0));
    out.trace.epoch_order.push_back(order_digest(batches));
  }
  return out;
}

/// Supervised training of the full finetune-shaped network from a random
/// initialisation, with nothing frozen.
inline TrainedModel train_baseline(const Dataset &labeled, const TrainConfig &cfg) {
  cfg.validate();
  detail::require_labeled(labeled, "train_baseline");
  TrainedModel out{make_baseline_model(cfg.dims, derive_seed(cfg.seed, {seed_tag::kBaseline}), cfg.pooling), {}};
  out.trace.config = cfg;
  out.trace.seed = cfg.seed;
  Model &model = out.model;
  auto params = model.parameters();
  Adam adam(params, AdamOptions{cfg.learning_rate});
  const auto lengths = detail::lengths_of(labeled);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng order_rng(derive_seed(cfg.seed, {seed_tag::kOrder, epoch}));
    const auto batches = make_batches(lengths, cfg.batch_size, order_rng);
    double total = 0;
    for (const auto &batch : batches) {
      const std::size_t steps = lengths[batch.front()];
      std::vector<const Tensor *> seqs;
      for (std::size_t i : batch) seqs.push_back(&labeled.sequences[i].features);
      Graph g;
      Var x = g.constant(stack_time_major(seqs));
      Var pred = head_forward(g, model, backbone_forward(g, model, x, steps, batch.size()), steps,
                              batch.size());
      Var loss = label_loss(pred, detail::label_matrix(labeled, batch));
      total += loss.value().item() * static_cast<double>(batch.size());
      adam.step(g.backward(loss));
    }
    out.trace.epoch_loss.push_back(total / static_cast<double>(labeled.size()));
    out.trace.epoch_seconds.push_back(detail::seconds_since(t0));
    out.trace.epoch_order.push_back(order_digest(batches));
  }
  return out;
}

/// Predictions and truths, row k = val.sequences[k].
struct Evaluation {
  Tensor predictions;  // [n x 6]
  Tensor truth;        // [n x 6]
};

inline Evaluation evaluate(const Model &model, const Dataset &val) {
  if (val.sequences.empty()) throw ContractError("evaluate: empty validation set");
  detail::require_labeled(val, "evaluate");
  if (!model.has_head()) throw ContractError("evaluate: model has no label head");
  const Tensor feats = backbone_features(model, val);
  Graph g;
  Var pred = dense_forward(g, model.layers.back().dense(), g.constant(feats));
  std::vector<std::size_t> all(val.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return Evaluation{Tensor(pred.shape(), pred.value().storage()), detail::label_matrix(val, all)};
}

}  // namespace msq
