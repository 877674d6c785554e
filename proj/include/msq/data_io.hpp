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

// On-disk dataset layout:
//
//   manifest.txt   one line per sample: <id>,<feature file relative to the
//                  manifest>,<T>
//   labels.csv     header id,happy,sad,anger,surprise,disgust,fear
//                  (optional; absent for unlabeled data)
//   *.fsq          "FSQ1" | u32 T | u32 D (= 74) | T*D f32, row-major, LE

#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "msq/checkpoint.hpp"
#include "msq/data.hpp"

namespace msq {

inline constexpr char kFeatureMagic[4] = {'F', 'S', 'Q', '1'};
inline constexpr const char *kManifestName = "manifest.txt";
inline constexpr const char *kLabelsName = "labels.csv";
inline constexpr const char *kLabelsHeader = "id,happy,sad,anger,surprise,disgust,fear";

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, const std::string &context) {
  // std::from_chars for double is available in libstdc++ 11.
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError(context + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_uint(std::string_view s, const std::string &context) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError(context + ": cannot parse integer '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct FeatureFile {
  std::size_t steps = 0;
  std::size_t dim = 0;
  std::vector<float> values;
};

inline FeatureFile read_feature_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing feature file " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw DataError("feature file " + path.string() + ": bad magic, expected \"FSQ1\"");
  FeatureFile f;
  try {
    f.steps = io::read_le<std::uint32_t>(in, "T");
    f.dim = io::read_le<std::uint32_t>(in, "D");
    f.values.resize(f.steps * f.dim);
    for (float &v : f.values) v = io::read_le<float>(in, "features");
  } catch (const FormatError &e) {
    throw DataError("feature file " + path.string() + ": " + e.what());
  }
  return f;
}

/// Writes a [T x D] tensor as f32.
inline void write_feature_file(const std::filesystem::path &path, const Tensor &features) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(kFeatureMagic, 4);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.rows()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.cols()));
  for (double v : features.data()) io::write_le<float>(out, static_cast<float>(v));
  if (!out) throw Error("write failed: " + path.string());
}

inline std::map<std::string, EmotionLabel> read_labels_csv(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing labels file " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kLabelsHeader)
    throw DataError("labels file " + path.string() + ": header must be '" + kLabelsHeader + "'");
  std::map<std::string, EmotionLabel> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const std::string ctx = path.filename().string() + ":" + std::to_string(lineno);
    auto fields = detail::split_commas(line);
    if (fields.size() != 1 + kNumEmotions)
      throw DataError(ctx + ": expected 7 fields, found " + std::to_string(fields.size()));
    const std::string id(fields[0]);
    std::array<double, kNumEmotions> v{};
    for (std::size_t i = 0; i < kNumEmotions; ++i) v[i] = detail::parse_double(fields[i + 1], ctx);
    if (!labels.emplace(id, EmotionLabel::checked(v, id)).second)
      throw DataError(ctx + ": duplicate label for '" + id + "'");
  }
  return labels;
}

inline void write_labels_csv(const std::filesystem::path &path,
                             const std::vector<std::pair<std::string, EmotionLabel>> &rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << kLabelsHeader << '\n';
  for (const auto &[id, lab] : rows) {
    out << id;
    for (double v : lab.intensities) out << ',' << format_double(v);
    out << '\n';
  }
}

/// Loads every sample named by a manifest. Labels come from labels_path, or
/// from labels.csv next to the manifest when that file exists.
///
/// Non-finite feature values are replaced by the dataset-wide mean of the
/// finite values in their column (0 after standardization) and counted in
/// Dataset::repaired_values.
inline Dataset load_dataset(const std::filesystem::path &manifest_path,
                            std::optional<std::filesystem::path> labels_path = std::nullopt) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("missing manifest " + manifest_path.string());
  const auto base = manifest_path.parent_path();
  Dataset ds;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const std::string ctx = manifest_path.filename().string() + ":" + std::to_string(lineno);
    auto fields = detail::split_commas(line);
    if (fields.size() != 3) throw DataError(ctx + ": expected '<id>,<file>,<T>'");
    std::string id(fields[0]);
    if (id.empty()) throw DataError(ctx + ": empty sample id");
    if (!seen.insert(id).second) throw DataError(ctx + ": duplicate sample id '" + id + "'");
    const auto steps = detail::parse_uint(fields[2], ctx);
    FeatureFile f = read_feature_file(base / std::string(fields[1]));
    if (f.dim != kFeatureDim)
      throw DataError("sample '" + id + "': expected " + std::to_string(kFeatureDim) +
                      " feature columns, found " + std::to_string(f.dim));
    if (f.steps != steps)
      throw DataError("sample '" + id + "': manifest says T=" + std::to_string(steps) +
                      " but the feature file holds " + std::to_string(f.steps));
    if (steps == 0) throw DataError("sample '" + id + "': zero timesteps");
    Tensor feats(Shape{f.steps, f.dim});
    for (std::size_t i = 0; i < f.values.size(); ++i) feats[i] = static_cast<double>(f.values[i]);
    ds.sequences.push_back(FeatureSequence{std::move(id), std::move(feats)});
  }

  // Repair non-finite entries with finite column means.
  std::vector<double> colsum(kFeatureDim, 0.0);
  std::vector<std::size_t> colcount(kFeatureDim, 0);
  for (const auto &s : ds.sequences)
    for (std::size_t t = 0; t < s.length(); ++t) {
      auto r = s.features.row(t);
      for (std::size_t c = 0; c < kFeatureDim; ++c)
        if (std::isfinite(r[c])) {
          colsum[c] += r[c];
          ++colcount[c];
        }
    }
  for (auto &s : ds.sequences)
    for (double &v : s.features.data())
      if (!std::isfinite(v)) {
        const std::size_t c = static_cast<std::size_t>(&v - s.features.data().data()) % kFeatureDim;
        v = colcount[c] ? colsum[c] / static_cast<double>(colcount[c]) : 0.0;
        ++ds.repaired_values;
      }
  if (ds.repaired_values)
    log_warning("load_dataset: replaced " + std::to_string(ds.repaired_values) +
                " non-finite feature value(s) with column means");

  if (!labels_path && std::filesystem::exists(base / kLabelsName)) labels_path = base / kLabelsName;
  if (labels_path) ds.labels = read_labels_csv(*labels_path);
  validate_dataset(ds);
  return ds;
}

/// Writes manifest, feature files and (if any) labels under dir.
inline void write_dataset(const std::filesystem::path &dir, const Dataset &ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  std::ofstream manifest(dir / kManifestName, std::ios::trunc);
  if (!manifest) throw Error("cannot write manifest in " + dir.string());
  std::vector<std::pair<std::string, EmotionLabel>> rows;
  for (const auto &s : ds.sequences) {
    const std::string rel = "features/" + s.id + ".fsq";
    write_feature_file(dir / rel, s.features);
    manifest << s.id << ',' << rel << ',' << s.length() << '\n';
    if (auto it = ds.labels.find(s.id); it != ds.labels.end()) rows.emplace_back(s.id, it->second);
  }
  if (!rows.empty()) write_labels_csv(dir / kLabelsName, rows);
}

}  // namespace msq
