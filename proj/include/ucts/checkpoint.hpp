// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_CHECKPOINT_HPP
#define UCTS_CHECKPOINT_HPP

// Model checkpoint (.ckpt) and low-rank adapter (.lora) files.
//
// .ckpt layout (little-endian):
//   magic "UCTCKP1\0"
//   u32 tensor count
//   per tensor: u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims,
//               f32 data (row-major)
//   metadata block: u32 byte length, then UTF-8 "key=value\n" lines
//
// .lora layout: magic "UCTLRA1\0", u32 rank, f32 alpha, then the same tensor
// container holding "<layer>.A" / "<layer>.B" pairs (no metadata block).
//
// Round-trips are bit-exact: values pass through untouched as f32 and the
// tensor order is the insertion order of the ParamSet.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ucts/attuct.hpp"
#include "ucts/common.hpp"

namespace ucts {

namespace detail {

inline constexpr char kCkptMagic[8] = {'U', 'C', 'T', 'C', 'K', 'P', '1', '\0'};
inline constexpr char kLoraMagic[8] = {'U', 'C', 'T', 'L', 'R', 'A', '1', '\0'};

inline void write_tensor_container(std::ostream& os, const ParamSet& params) {
  write_le<std::uint32_t>(os, std::uint32_t(params.size()));
  for (std::size_t t = 0; t < params.size(); ++t) {
    const std::string& name = params.names()[t];
    const ad::Tensor<float>& tensor = params.tensors()[t];
    if (name.size() > 0xffff)
      throw IoError("tensor name too long: " + name.substr(0, 40) + "...");
    write_le<std::uint16_t>(os, std::uint16_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    const auto& shape = tensor.shape();
    if (shape.size() > 0xff) throw IoError("tensor rank too large");
    write_le<std::uint8_t>(os, std::uint8_t(shape.size()));
    for (int d : shape) write_le<std::uint32_t>(os, std::uint32_t(d));
    os.write(reinterpret_cast<const char*>(tensor.value().data()),
             std::streamsize(tensor.numel() * sizeof(float)));
  }
}

inline ParamSet read_tensor_container(std::istream& is,
                                      const std::string& path) {
  ParamSet params;
  const std::uint32_t count = read_le<std::uint32_t>(is);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint16_t name_len = read_le<std::uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint8_t ndim = read_le<std::uint8_t>(is);
    std::vector<int> shape(ndim);
    std::size_t n = 1;
    for (auto& d : shape) {
      const std::uint32_t dim = read_le<std::uint32_t>(is);
      if (dim == 0 || dim > 0x7fffffffu)
        throw IoError("bad tensor dimension in " + path);
      d = int(dim);
      n *= dim;
    }
    std::vector<float> data(n);
    is.read(reinterpret_cast<char*>(data.data()),
            std::streamsize(n * sizeof(float)));
    if (!is) throw IoError("truncated tensor data in " + path);
    params.add(name, ad::Tensor<float>(std::move(shape), std::move(data)));
  }
  return params;
}

}  // namespace detail

struct Checkpoint {
  ParamSet params;
  /// Free-form "key=value" metadata: model config, RF normalization constant,
  /// training provenance.
  std::map<std::string, std::string> metadata;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  detail::require_little_endian();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_magic(os, detail::kCkptMagic);
  detail::write_tensor_container(os, ckpt.params);
  std::string meta;
  for (const auto& [k, v] : ckpt.metadata) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
        v.find('\n') != std::string::npos)
      throw IoError("metadata key/value contains '=' or newline: " + k);
    meta += k + "=" + v + "\n";
  }
  write_le<std::uint32_t>(os, std::uint32_t(meta.size()));
  os.write(meta.data(), std::streamsize(meta.size()));
  if (!os) throw IoError("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  detail::require_little_endian();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  expect_magic(is, detail::kCkptMagic, path);
  Checkpoint ckpt;
  ckpt.params = detail::read_tensor_container(is, path);
  const std::uint32_t meta_len = read_le<std::uint32_t>(is);
  std::string meta(meta_len, '\0');
  is.read(meta.data(), meta_len);
  if (!is) throw IoError("truncated metadata in " + path);
  std::istringstream ms(meta);
  std::string line;
  while (std::getline(ms, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("malformed metadata line in " + path + ": " + line);
    ckpt.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return ckpt;
}

/// Record the model architecture in checkpoint metadata so inference can
/// rebuild the network from the file alone.
inline void put_model_metadata(Checkpoint& ckpt, const AttUctConfig& cfg) {
  auto& m = ckpt.metadata;
  m["model.nt"] = std::to_string(cfg.nt);
  m["model.n_tx"] = std::to_string(cfg.n_tx);
  m["model.n_rx"] = std::to_string(cfg.n_rx);
  m["model.nx"] = std::to_string(cfg.nx);
  m["model.nz"] = std::to_string(cfg.nz);
  m["model.head_channels"] = std::to_string(cfg.head_channels);
  std::string levels;
  for (std::size_t i = 0; i < cfg.level_channels.size(); ++i)
    levels += (i ? "," : "") + std::to_string(cfg.level_channels[i]);
  m["model.level_channels"] = levels;
  m["model.attn_heads"] = std::to_string(cfg.attn_heads);
  m["model.use_channel_attention"] = cfg.use_channel_attention ? "1" : "0";
  m["model.use_attention_gates"] = cfg.use_attention_gates ? "1" : "0";
  m["model.use_self_attention"] = cfg.use_self_attention ? "1" : "0";
  m["model.out_offset"] = std::to_string(cfg.out_offset);
  m["model.out_scale"] = std::to_string(cfg.out_scale);
}

inline AttUctConfig model_from_metadata(const Checkpoint& ckpt) {
  const auto& m = ckpt.metadata;
  auto req = [&](const std::string& key) -> const std::string& {
    auto it = m.find(key);
    if (it == m.end())
      throw IoError("checkpoint metadata is missing key: " + key);
    return it->second;
  };
  AttUctConfig cfg;
  cfg.nt = std::stoi(req("model.nt"));
  cfg.n_tx = std::stoi(req("model.n_tx"));
  cfg.n_rx = std::stoi(req("model.n_rx"));
  cfg.nx = std::stoi(req("model.nx"));
  cfg.nz = std::stoi(req("model.nz"));
  cfg.head_channels = std::stoi(req("model.head_channels"));
  cfg.level_channels.clear();
  std::istringstream ls(req("model.level_channels"));
  std::string item;
  while (std::getline(ls, item, ','))
    cfg.level_channels.push_back(std::stoi(item));
  cfg.attn_heads = std::stoi(req("model.attn_heads"));
  cfg.use_channel_attention = req("model.use_channel_attention") == "1";
  cfg.use_attention_gates = req("model.use_attention_gates") == "1";
  cfg.use_self_attention = req("model.use_self_attention") == "1";
  cfg.out_offset = std::stod(req("model.out_offset"));
  cfg.out_scale = std::stod(req("model.out_scale"));
  cfg.validate();
  return cfg;
}

inline void save_lora(const std::string& path, const LoraAdapter& adapter) {
  detail::require_little_endian();
  if (adapter.rank < 1) throw ConfigError("LoRA rank must be >= 1");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_magic(os, detail::kLoraMagic);
  write_le<std::uint32_t>(os, std::uint32_t(adapter.rank));
  write_le<float>(os, float(adapter.alpha));
  detail::write_tensor_container(os, adapter.matrices);
  if (!os) throw IoError("write failed: " + path);
}

inline LoraAdapter load_lora(const std::string& path) {
  detail::require_little_endian();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  expect_magic(is, detail::kLoraMagic, path);
  LoraAdapter a;
  a.rank = int(read_le<std::uint32_t>(is));
  if (a.rank < 1) throw IoError("bad LoRA rank in " + path);
  a.alpha = double(read_le<float>(is));
  a.matrices = detail::read_tensor_container(is, path);
  // recover the target list from the "<layer>.A" entries (container order)
  for (const auto& name : a.matrices.names())
    if (name.size() > 2 && name.compare(name.size() - 2, 2, ".A") == 0)
      a.targets.push_back(name.substr(0, name.size() - 2));
  for (const auto& t : a.targets) {
    if (!a.matrices.has(t + ".B"))
      throw IoError("adapter missing B matrix for target " + t + " in " + path);
    const auto& sa = a.matrices.at(t + ".A").shape();
    const auto& sb = a.matrices.at(t + ".B").shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[0] != a.rank ||
        sb[1] != a.rank)
      throw IoError("adapter matrix shapes inconsistent with rank for " + t +
                    " in " + path);
  }
  return a;
}

}  // namespace ucts

#endif  // UCTS_CHECKPOINT_HPP
