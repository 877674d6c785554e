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

// Command-line front end. run_cli() is the whole program; tools/msq.cpp only
// forwards argv, which lets the tests drive commands in-process.

#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msq/checkpoint.hpp"
#include "msq/config.hpp"
#include "msq/gradcheck_suite.hpp"
#include "msq/synthetic.hpp"

namespace msq::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Bad flags, missing inputs, refusing to overwrite.
class UsageError : public Error {
 public:
  using Error::Error;
};

inline const char *kUsageText =
    "Masked-timestep pretraining and emotion-intensity fine-tuning.\n"
    "\n"
    "Usage:  msq <command> [options]\n"
    "e.g.:\n"
    "  msq gen-data --out data --samples 2000 --seed 1\n"
    "  msq pretrain --data data --config run.json --out pre.ckpt\n"
    "  msq finetune --data data --labels 20 --seed 3 --ckpt pre.ckpt --out ft20\n"
    "  msq baseline --data data --labels 20 --seed 3 --out bl20\n"
    "  msq sweep --data data --config run.json --out sweep\n"
    "  msq gradcheck --seed 0\n";

namespace detail {

/// An output directory must be absent or empty unless --force is given.
inline void prepare_output_dir(const fs::path &dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw UsageError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw UsageError("output directory " + dir.string() + " is not empty; use --force to overwrite");
  }
  fs::create_directories(dir);
}

inline void prepare_output_file(const fs::path &file, bool force) {
  if (fs::exists(file) && !force)
    throw UsageError("output " + file.string() + " exists; use --force to overwrite");
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

inline fs::path sibling(const fs::path &file, const std::string &suffix) {
  return fs::path(file.string() + suffix);
}

inline RunConfig config_or_default(const std::string &path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

inline Dataset load_data_dir(const fs::path &dir) {
  if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist");
  return load_dataset(dir / kManifestName);
}

inline void require_labels(const Dataset &ds) {
  if (ds.labels.empty()) throw DataError("dataset has no " + std::string(kLabelsName));
}

inline void write_metrics_csv(const fs::path &path, const std::string &model, std::size_t budget,
                              std::size_t repeat, const MetricsReport &r) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << kMetricsCsvHeader << '\n' << metrics_csv_row(model, budget, repeat, r) << '\n';
}

inline void write_training_outputs(const fs::path &dir, const TrainedModel &tm, const RunConfig &cfg) {
  save_checkpoint(tm.model, dir / "model.ckpt");
  write_trace_csv(dir / "trace.csv", tm.trace);
  write_trace_timing(dir / "timing.txt", tm.trace);
  write_run_config(dir / "config.json", cfg);
}

}  // namespace detail

struct GenDataArgs {
  std::string out;
  SyntheticConfig synth;
  bool force = false;
};

inline int cmd_gen_data(const GenDataArgs &a) {
  detail::prepare_output_dir(a.out, a.force);
  const Dataset ds = generate_synthetic(a.synth);
  write_dataset(a.out, ds);
  nlohmann::json j = {{"samples", a.synth.num_samples}, {"min_steps", a.synth.min_steps},
                      {"max_steps", a.synth.max_steps}, {"noise", a.synth.noise_scale},
                      {"zero_fraction", a.synth.zero_fraction}, {"seed", a.synth.seed}};
  std::ofstream(fs::path(a.out) / "generator.json") << j.dump(2) << '\n';
  log_info("wrote " + std::to_string(ds.size()) + " sequences to " + a.out);
  return kOk;
}

struct PretrainArgs {
  std::string data, config, out;
  bool force = false;
};

/// Writes CKPT, CKPT.trace.csv, CKPT.timing.txt and CKPT.config.json.
inline int cmd_pretrain(const PretrainArgs &a) {
  RunConfig cfg = load_run_config(a.config);
  cfg.data_dir = a.data;
  cfg.output_dir = fs::path(a.out).parent_path().string();
  const fs::path ckpt(a.out);
  detail::prepare_output_file(ckpt, a.force);
  const Dataset ds = detail::load_data_dir(a.data);
  const PreparedSplits splits = prepare_splits(ds, cfg.split_ratio, cfg.split_seed());
  const TrainedModel tm = pretrain(unlabeled_view(splits.train), cfg.pretrain_config());
  save_checkpoint(tm.model, ckpt);
  write_trace_csv(detail::sibling(ckpt, ".trace.csv"), tm.trace);
  write_trace_timing(detail::sibling(ckpt, ".timing.txt"), tm.trace);
  write_run_config(detail::sibling(ckpt, ".config.json"), cfg);
  log_info("pretrained on " + std::to_string(splits.train.size()) + " sequences; final loss " +
           format_double(tm.trace.epoch_loss.back()));
  return kOk;
}

struct LabeledRunArgs {
  std::string data, config, ckpt, out;
  std::size_t labels = 0;
  std::uint64_t seed = 0;
  bool force = false;
};

/// Shared by finetune and baseline: out/{model.ckpt, metrics.csv, trace.csv,
/// timing.txt, config.json}.
inline int cmd_labeled_run(const LabeledRunArgs &a, ArmKind kind) {
  if (kind == ArmKind::kPretrained && a.ckpt.empty())
    throw UsageError("finetune requires --ckpt <pretrained checkpoint>");
  RunConfig cfg = detail::config_or_default(a.config);
  cfg.data_dir = a.data;
  cfg.output_dir = a.out;
  cfg.checkpoint = a.ckpt;
  std::optional<Model> pretrained;
  if (kind == ArmKind::kPretrained) {
    if (!fs::exists(a.ckpt)) throw UsageError("checkpoint " + a.ckpt + " does not exist");
    pretrained = load_checkpoint(a.ckpt);
    if (pretrained->kind != ModelKind::kPretrain)
      throw UsageError("checkpoint " + a.ckpt + " is not a pretrain checkpoint");
  }
  const Dataset ds = detail::load_data_dir(a.data);
  detail::require_labels(ds);
  const PreparedSplits splits = prepare_splits(ds, cfg.split_ratio, cfg.split_seed());
  const Dataset subset = sample_labeled_subset(splits.train, a.labels, a.seed);
  detail::prepare_output_dir(a.out, a.force);

  TrainConfig tc = cfg.train;
  tc.seed = a.seed;
  const TrainedModel tm = kind == ArmKind::kPretrained ? finetune(*pretrained, subset, tc)
                                                       : train_baseline(subset, tc);
  const Evaluation ev = evaluate(tm.model, labeled_only(splits.val));
  const MetricsReport r = compute_metrics(ev.predictions, ev.truth);
  detail::write_training_outputs(a.out, tm, cfg);
  detail::write_metrics_csv(fs::path(a.out) / "metrics.csv", to_string(kind), a.labels, 0, r);
  log_info(std::string(to_string(kind)) + " with " + std::to_string(a.labels) +
           " labels: overall_mae " + format_double(r.overall_mae) + ", acc4 " +
           format_double(r.overall_acc4));
  return kOk;
}

struct SweepArgs {
  std::string data, config, ckpt, out;
  bool force = false;
};

/// Without a checkpoint (flag or sweep.checkpoint) the backbone is pretrained
/// first and saved as out/pretrained.ckpt.
inline int cmd_sweep(const SweepArgs &a) {
  RunConfig cfg = load_run_config(a.config);
  cfg.data_dir = a.data;
  cfg.output_dir = a.out;
  if (!a.ckpt.empty()) cfg.checkpoint = a.ckpt;
  const Dataset ds = detail::load_data_dir(a.data);
  detail::require_labels(ds);
  const PreparedSplits splits = prepare_splits(ds, cfg.split_ratio, cfg.split_seed());
  const Dataset val = labeled_only(splits.val);
  const SweepConfig sc = cfg.sweep_config();
  validate_sweep(sc, splits.train);
  if (val.sequences.empty()) throw DataError("validation split holds no labeled samples");
  std::optional<Model> pretrained;
  if (!cfg.checkpoint.empty()) {
    if (!fs::exists(cfg.checkpoint)) throw UsageError("checkpoint " + cfg.checkpoint + " does not exist");
    pretrained = load_checkpoint(cfg.checkpoint);
    if (pretrained->kind != ModelKind::kPretrain)
      throw UsageError("checkpoint " + cfg.checkpoint + " is not a pretrain checkpoint");
  }
  detail::prepare_output_dir(a.out, a.force);
  const fs::path out(a.out);
  write_run_config(out / "config.json", cfg);

  if (!pretrained) {
    log_info("no checkpoint given; pretraining on " + std::to_string(splits.train.size()) + " sequences");
    TrainedModel tm = pretrain(unlabeled_view(splits.train), cfg.pretrain_config());
    save_checkpoint(tm.model, out / "pretrained.ckpt");
    write_trace_csv(out / "pretrain_trace.csv", tm.trace);
    write_trace_timing(out / "pretrain_timing.txt", tm.trace);
    pretrained = std::move(tm.model);
  }
  const SweepReport report = run_sweep(sc, *pretrained, splits.train, val);
  write_sweep_report_csv(out / "sweep_report.csv", report);
  write_sweep_aggregates_csv(out / "sweep_aggregates.csv", report);
  log_info("sweep wrote " + std::to_string(report.records.size()) + " records");
  return kOk;
}

inline int cmd_gradcheck(std::uint64_t seed, std::ostream &os) {
  const GradcheckReport rep = run_gradcheck_suite(seed);
  char line[160];
  std::snprintf(line, sizeof(line), "%-32s %7s %14s  %s\n", "check", "trials", "max_rel_err", "result");
  os << line;
  for (const auto &e : rep.entries) {
    std::snprintf(line, sizeof(line), "%-32s %7zu %14.3e  %s\n", e.name.c_str(), e.trials, e.max_error,
                  e.passed ? "PASS" : "FAIL");
    os << line;
  }
  os << (rep.all_passed() ? "all gradient checks passed" : "gradient check FAILED") << " (tolerance "
     << kGradcheckTolerance << ")\n";
  return rep.all_passed() ? kOk : kNumeric;
}

/// Parses args (args[0] is the program name) and runs one command.
inline int run_cli(std::vector<std::string> args) {
  CLI::App app{kUsageText, "msq"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto *c_gen = app.add_subcommand("gen-data", "Write a synthetic labeled dataset");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--samples", gen.synth.num_samples, "Number of sequences")->capture_default_str();
  c_gen->add_option("--seed", gen.synth.seed, "Generator seed")->capture_default_str();
  c_gen->add_option("--noise", gen.synth.noise_scale, "Noise scale")->capture_default_str();
  c_gen->add_option("--min-steps", gen.synth.min_steps, "Shortest sequence")->capture_default_str();
  c_gen->add_option("--max-steps", gen.synth.max_steps, "Longest sequence")->capture_default_str();
  c_gen->add_option("--zero-fraction", gen.synth.zero_fraction, "Chance of a zero intensity")
      ->capture_default_str();
  c_gen->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  PretrainArgs pre;
  auto *c_pre = app.add_subcommand("pretrain", "Masked-timestep pretraining on the train split");
  c_pre->add_option("--data", pre.data, "Dataset directory")->required();
  c_pre->add_option("--config", pre.config, "JSON run config")->required();
  c_pre->add_option("--out", pre.out, "Checkpoint path")->required();
  c_pre->add_flag("--force", pre.force, "Overwrite existing outputs");

  LabeledRunArgs ft, bl;
  auto add_labeled = [](CLI::App *c, LabeledRunArgs &a) {
    c->add_option("--data", a.data, "Dataset directory")->required();
    c->add_option("--labels", a.labels, "Label budget N")->required();
    c->add_option("--seed", a.seed, "Subset and training seed")->required();
    c->add_option("--out", a.out, "Output directory")->required();
    c->add_option("--config", a.config, "JSON run config (optional)");
    c->add_flag("--force", a.force, "Overwrite a non-empty output directory");
  };
  auto *c_ft = app.add_subcommand("finetune", "Train a label head on a frozen pretrained backbone");
  add_labeled(c_ft, ft);
  c_ft->add_option("--ckpt", ft.ckpt, "Pretrain checkpoint");
  auto *c_bl = app.add_subcommand("baseline", "Train the same network from scratch");
  add_labeled(c_bl, bl);
  c_bl->add_option("--ckpt", bl.ckpt, "Ignored for the baseline");

  SweepArgs sw;
  auto *c_sw = app.add_subcommand("sweep", "Label-budget sweep: pretrained vs baseline");
  c_sw->add_option("--data", sw.data, "Dataset directory")->required();
  c_sw->add_option("--config", sw.config, "JSON run config")->required();
  c_sw->add_option("--out", sw.out, "Output directory")->required();
  c_sw->add_option("--ckpt", sw.ckpt, "Pretrain checkpoint (else pretrain first)");
  c_sw->add_flag("--force", sw.force, "Overwrite a non-empty output directory");

  std::uint64_t gc_seed = 0;
  auto *c_gc = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  c_gc->add_option("--seed", gc_seed, "Seed")->capture_default_str();

  std::vector<const char *> argv;
  for (const auto &s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (c_gen->parsed()) return cmd_gen_data(gen);
    if (c_pre->parsed()) return cmd_pretrain(pre);
    if (c_ft->parsed()) return cmd_labeled_run(ft, ArmKind::kPretrained);
    if (c_bl->parsed()) return cmd_labeled_run(bl, ArmKind::kBaseline);
    if (c_sw->parsed()) return cmd_sweep(sw);
    if (c_gc->parsed()) return cmd_gradcheck(gc_seed, std::cout);
  } catch (const UsageError &e) {
    std::cerr << "ERROR: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError &e) {
    std::cerr << "ERROR: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractError &e) {
    std::cerr << "ERROR: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError &e) {
    std::cerr << "ERROR: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception &e) {
    // DataError, FormatError, DimensionError and I/O failures.
    std::cerr << "ERROR: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace msq::cli
