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

// Model checkpoint file, all integers and floats little-endian:
//
//   "MSQ1" | u32 version | u32 layer count
//   per layer: u8 kind (0 GRU, 1 Dense) | u32 in_dim | u32 out_dim | u8 frozen
//              | f64 arrays in layer field order
//
// GRU field order: W_z W_r W_h U_z U_r U_h b_z b_r b_h. Dense: weight bias.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "msq/nn.hpp"

namespace msq {

inline constexpr char kCheckpointMagic[4] = {'M', 'S', 'Q', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace io {

template <typename T>
void write_le(std::ostream &out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  out.write(reinterpret_cast<const char *>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream &in, const char *what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char *>(bytes), sizeof(T)))
    throw FormatError(std::string("unexpected end of file reading ") + what);
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace io

inline void write_checkpoint(std::ostream &out, const Model &model) {
  out.write(kCheckpointMagic, 4);
  io::write_le<std::uint32_t>(out, kCheckpointVersion);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.layers.size()));
  for (const Layer &l : model.layers) {
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(l.kind()));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_dim()));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_dim()));
    io::write_le<std::uint8_t>(out, l.frozen() ? 1 : 0);
    for (const Tensor *t : l.tensors())
      for (double v : t->data()) io::write_le<double>(out, v);
  }
}

/// Reads a checkpoint and infers the model kind: a final dense layer that maps
/// back to the input width is a pretrain model, otherwise the extra head
/// layer makes it a finetune model (frozen backbone) or a baseline.
inline Model read_checkpoint(std::istream &in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic bytes, expected \"MSQ1\"");
  const auto version = io::read_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version, expected " +
                      std::to_string(kCheckpointVersion) + ", found " + std::to_string(version));
  const auto count = io::read_le<std::uint32_t>(in, "layer count");
  if (count < 2 || count > 1024) throw FormatError("checkpoint: implausible layer count " +
                                                   std::to_string(count));
  Model m;
  std::vector<bool> frozen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto kind = io::read_le<std::uint8_t>(in, "layer kind");
    const auto in_dim = io::read_le<std::uint32_t>(in, "in_dim");
    const auto out_dim = io::read_le<std::uint32_t>(in, "out_dim");
    const auto fr = io::read_le<std::uint8_t>(in, "frozen flag");
    if (kind > 1) throw FormatError("checkpoint: unknown layer kind " + std::to_string(kind));
    if (in_dim == 0 || out_dim == 0 || in_dim > (1u << 16) || out_dim > (1u << 16))
      throw FormatError("checkpoint: implausible layer dimensions");
    Layer layer = kind == 0 ? Layer(GruLayer(in_dim, out_dim)) : Layer(DenseLayer(in_dim, out_dim));
    for (Tensor *t : layer.tensors())
      for (double &v : t->data()) v = io::read_le<double>(in, "parameters");
    m.layers.push_back(std::move(layer));
    frozen.push_back(fr != 0);
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("checkpoint: trailing bytes after last layer");

  std::size_t grus = 0;
  while (grus < m.layers.size() && m.layers[grus].kind() == LayerKind::kGru) ++grus;
  if (grus == 0 || grus + 1 > m.layers.size())
    throw FormatError("checkpoint: layer layout is not GRU stack + dense");
  m.dims.gru_layers = grus;
  m.dims.input_dim = m.layers.front().in_dim();
  m.dims.hidden_dim = m.layers.front().out_dim();
  if (m.layers.size() == grus + 1) {
    m.kind = ModelKind::kPretrain;
  } else {
    m.dims.label_dim = m.layers.back().out_dim();
    m.kind = frozen.front() ? ModelKind::kFinetune : ModelKind::kBaseline;
  }
  for (std::size_t i = 0; i < m.layers.size(); ++i) m.layers[i].set_frozen(frozen[i]);
  try {
    validate_layout(m);
  } catch (const ContractError &e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return m;
}

inline void save_checkpoint(const Model &model, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_checkpoint(out, model);
  if (!out) throw Error("write failed: " + path.string());
}

inline Model load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace msq
