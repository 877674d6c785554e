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

// JSON run configuration. Every key is optional; unknown keys and wrongly
// typed values are rejected with ConfigError.
//
//   {
//     "seed": 0,
//     "data_dir": "", "output_dir": "",
//     "split": {"ratio": 0.8},
//     "model": {"hidden_dim": 256, "gru_layers": 2},
//     "mask": {"length": 30, "sentinel": -30.0},
//     "train": {"epochs": 30, "pretrain_epochs": 10, "batch_size": 16,
//               "learning_rate": 0.001, "recon_loss": "masked",
//               "pooling": "last"},
//     "sweep": {"budgets": [20, 35, ...], "repeats": 3, "workers": 1,
//               "checkpoint": ""}
//   }
//
// Seeds used by a run all derive from "seed":
//   split      derive_seed(seed, {11})
//   pretrain   derive_seed(seed, {12})
//   sweep      derive_seed(seed, {13}), then cell_seed(sweep, budget, repeat)

#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "msq/experiment.hpp"

namespace msq {

namespace seed_tag {
inline constexpr std::uint64_t kSplit = 11;
inline constexpr std::uint64_t kPretrain = 12;
inline constexpr std::uint64_t kSweep = 13;
}  // namespace seed_tag

struct RunConfig {
  std::uint64_t seed = 0;
  std::string data_dir;
  std::string output_dir;
  double split_ratio = 0.8;
  TrainConfig train;
  std::vector<std::size_t> budgets = default_budgets();
  std::size_t repeats = 3;
  std::size_t workers = 1;
  std::string checkpoint;

  std::uint64_t split_seed() const { return derive_seed(seed, {seed_tag::kSplit}); }
  std::uint64_t pretrain_seed() const { return derive_seed(seed, {seed_tag::kPretrain}); }
  std::uint64_t sweep_seed() const { return derive_seed(seed, {seed_tag::kSweep}); }

  TrainConfig pretrain_config() const {
    TrainConfig tc = train;
    tc.seed = pretrain_seed();
    return tc;
  }

  SweepConfig sweep_config() const {
    SweepConfig sc;
    sc.budgets = budgets;
    sc.repeats = repeats;
    sc.workers = workers;
    sc.base_seed = sweep_seed();
    sc.train = train;
    return sc;
  }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json &obj, const std::string &where,
                           std::initializer_list<const char *> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto &[key, _] : obj.items())
    if (!ok.count(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
}

template <typename T>
void read_key(const json &obj, const char *key, const std::string &where, T &out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string path = where + "." + key;
  if constexpr (std::is_same_v<T, double>) {
    if (!it->is_number()) throw ConfigError(path + ": expected a number");
    out = it->template get<double>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) throw ConfigError(path + ": expected a string");
    out = it->template get<std::string>();
  } else {
    if (!it->is_number_unsigned()) throw ConfigError(path + ": expected a non-negative integer");
    out = it->template get<T>();
  }
}

inline Pooling parse_pooling(const std::string &s) {
  if (s == "last") return Pooling::kLast;
  if (s == "mean") return Pooling::kMean;
  throw ConfigError("train.pooling: expected 'last' or 'mean', got '" + s + "'");
}

inline ReconLoss parse_recon_loss(const std::string &s) {
  if (s == "masked") return ReconLoss::kMasked;
  if (s == "full") return ReconLoss::kFull;
  throw ConfigError("train.recon_loss: expected 'masked' or 'full', got '" + s + "'");
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json &j) {
  using detail::read_key;
  using detail::reject_unknown;
  RunConfig c;
  reject_unknown(j, "config", {"seed", "data_dir", "output_dir", "split", "model", "mask", "train", "sweep"});
  read_key(j, "seed", "config", c.seed);
  read_key(j, "data_dir", "config", c.data_dir);
  read_key(j, "output_dir", "config", c.output_dir);
  if (j.contains("split")) {
    const auto &s = j["split"];
    reject_unknown(s, "split", {"ratio"});
    read_key(s, "ratio", "split", c.split_ratio);
  }
  if (j.contains("model")) {
    const auto &m = j["model"];
    reject_unknown(m, "model", {"hidden_dim", "gru_layers"});
    read_key(m, "hidden_dim", "model", c.train.dims.hidden_dim);
    read_key(m, "gru_layers", "model", c.train.dims.gru_layers);
  }
  if (j.contains("mask")) {
    const auto &m = j["mask"];
    reject_unknown(m, "mask", {"length", "sentinel"});
    read_key(m, "length", "mask", c.train.mask.mask_length);
    read_key(m, "sentinel", "mask", c.train.mask.sentinel);
  }
  if (j.contains("train")) {
    const auto &t = j["train"];
    reject_unknown(t, "train",
                   {"epochs", "pretrain_epochs", "batch_size", "learning_rate", "recon_loss", "pooling"});
    read_key(t, "epochs", "train", c.train.epochs);
    read_key(t, "pretrain_epochs", "train", c.train.pretrain_epochs);
    read_key(t, "batch_size", "train", c.train.batch_size);
    read_key(t, "learning_rate", "train", c.train.learning_rate);
    std::string s = to_string(c.train.recon_loss);
    read_key(t, "recon_loss", "train", s);
    c.train.recon_loss = detail::parse_recon_loss(s);
    s = to_string(c.train.pooling);
    read_key(t, "pooling", "train", s);
    c.train.pooling = detail::parse_pooling(s);
  }
  if (j.contains("sweep")) {
    const auto &s = j["sweep"];
    reject_unknown(s, "sweep", {"budgets", "repeats", "workers", "checkpoint"});
    if (s.contains("budgets")) {
      const auto &b = s["budgets"];
      if (!b.is_array()) throw ConfigError("sweep.budgets: expected an array");
      c.budgets.clear();
      for (const auto &v : b) {
        if (!v.is_number_unsigned()) throw ConfigError("sweep.budgets: expected non-negative integers");
        c.budgets.push_back(v.get<std::size_t>());
      }
    }
    read_key(s, "repeats", "sweep", c.repeats);
    read_key(s, "workers", "sweep", c.workers);
    read_key(s, "checkpoint", "sweep", c.checkpoint);
  }

  if (!(c.split_ratio > 0.0 && c.split_ratio < 1.0)) throw ConfigError("split.ratio must be in (0, 1)");
  if (c.train.dims.hidden_dim == 0 || c.train.dims.gru_layers == 0)
    throw ConfigError("model: hidden_dim and gru_layers must be positive");
  if (c.repeats == 0) throw ConfigError("sweep.repeats must be >= 1");
  if (c.workers == 0) throw ConfigError("sweep.workers must be >= 1");
  try {
    c.train.validate();
  } catch (const ContractError &e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline RunConfig parse_run_config(const std::string &text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error &e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

inline RunConfig load_run_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

/// Fully resolved config; parse_run_config(to_json(c)) == c.
inline nlohmann::json to_json(const RunConfig &c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["data_dir"] = c.data_dir;
  j["output_dir"] = c.output_dir;
  j["split"] = {{"ratio", c.split_ratio}};
  j["model"] = {{"hidden_dim", c.train.dims.hidden_dim}, {"gru_layers", c.train.dims.gru_layers}};
  j["mask"] = {{"length", c.train.mask.mask_length}, {"sentinel", c.train.mask.sentinel}};
  j["train"] = {{"epochs", c.train.epochs},
                {"pretrain_epochs", c.train.pretrain_epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"recon_loss", to_string(c.train.recon_loss)},
                {"pooling", to_string(c.train.pooling)}};
  j["sweep"] = {{"budgets", c.budgets},
                {"repeats", c.repeats},
                {"workers", c.workers},
                {"checkpoint", c.checkpoint}};
  return j;
}

inline void write_run_config(const std::filesystem::path &path, const RunConfig &c) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << to_json(c).dump(2) << '\n';
}

}  // namespace msq
