// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_ATTUCT_HPP
#define UCTS_ATTUCT_HPP

// AttUCT: attention U-Net mapping an RF cube (nt x n_tx x n_rx, time as
// channels) to a square SOS map. Three components: a signal input head with
// squeeze-excitation channel attention over the temporal dimension, an
// encoder-decoder backbone with additive attention gates on skip connections
// and multi-head self-attention at the bottleneck, and an expand module of
// transposed convolutions with a sigmoid+affine output head in m/s.

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ucts/common.hpp"
#include "ucts/tensor.hpp"

namespace ucts {

template <typename T>
using Tensor = ad::Tensor<T>;

struct AttUctConfig {
  // input RF cube shape
  int nt = 256;
  int n_tx = 16;
  int n_rx = 16;
  // output map shape (square)
  int nx = 64;
  int nz = 64;
  int head_channels = 32;
  std::vector<int> level_channels = {32, 64, 128};  // encoder top to bottleneck
  int attn_heads = 2;
  bool use_channel_attention = true;
  bool use_attention_gates = true;
  bool use_self_attention = true;
  double out_offset = 1400.0;  // output = offset + scale * sigmoid(.)
  double out_scale = 1600.0;
  static constexpr int se_reduction = 8;

  int levels() const { return int(level_channels.size()); }
  int bottleneck_size() const { return n_tx >> (levels() - 1); }
  int expand_stages() const {
    int e = 0, s = n_tx;
    while (s < nx) {
      s *= 2;
      ++e;
    }
    return e;
  }
  /// Channel width entering expand stage j (halving, floor 8).
  int expand_channels(int j) const {
    return std::max(level_channels[0] >> j, 8);
  }

  void validate() const {
    if (nt < 1 || n_tx < 1 || n_rx < 1)
      throw ConfigError("AttUCT: non-positive input dimension");
    if (n_tx != n_rx)
      throw ConfigError("AttUCT: input element grid must be square");
    if (nx != nz) throw ConfigError("AttUCT: output map must be square");
    if (level_channels.empty())
      throw ConfigError("AttUCT: at least one U-Net level required");
    for (int c : level_channels)
      if (c < 1) throw ConfigError("AttUCT: non-positive channel count");
    int s = n_tx;
    for (int l = 1; l < levels(); ++l) {
      if (s % 2 != 0)
        throw ConfigError("AttUCT: element grid not divisible by 2^levels");
      s /= 2;
    }
    if (s < 2) throw ConfigError("AttUCT: bottleneck smaller than 2x2");
    int e = n_tx;
    while (e < nx) e *= 2;
    if (e != nx)
      throw ConfigError(
          "AttUCT: output size must be a power-of-two multiple of the input "
          "element grid");
    if (use_channel_attention && head_channels % se_reduction != 0)
      throw ConfigError("AttUCT: head channels must be divisible by the SE "
                        "reduction (8)");
    if (use_self_attention && level_channels.back() % attn_heads != 0)
      throw ConfigError(
          "AttUCT: bottleneck channels must be divisible by attention heads");
    if (!(out_scale > 0.0)) throw ConfigError("AttUCT: output scale must be > 0");
  }
};

/// Ordered parameter collection: insertion order fixes initialization and
/// serialization order; lookup is by unique name.
template <typename T>
class ParamSetT {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    if (index_.count(name))
      throw ConfigError("duplicate parameter name: " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.push_back(std::move(t));
    return tensors_.back();
  }
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return tensors_[it->second];
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return tensors_[it->second];
  }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor<T>>& tensors() { return tensors_; }
  const std::vector<Tensor<T>>& tensors() const { return tensors_; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }
  void set_requires_grad(bool b) {
    for (auto& t : tensors_) t.set_requires_grad(b);
  }
  void zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::map<std::string, std::size_t> index_;
};

using ParamSet = ParamSetT<float>;

/// Low-rank adapter (Eq. W = W0 + (alpha/r) B A) over named conv layers whose
/// weight [d, cin, kh, kw] is treated as d x k with k = cin*kh*kw.
template <typename T>
struct LoraAdapterT {
  int rank = 16;
  double alpha = 16.0;
  // per target layer: A [r, k], B [d, r]
  std::vector<std::string> targets;
  ParamSetT<T> matrices;  // entries "<target>.A" and "<target>.B"
};

using LoraAdapter = LoraAdapterT<float>;

namespace detail {

template <typename T>
ad::Tensor<T> he_conv(std::vector<int> shape, std::mt19937_64& rng) {
  std::size_t fan_in = 1;
  for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= std::size_t(shape[d]);
  return ad::Tensor<T>::randn(std::move(shape), rng,
                              std::sqrt(2.0 / double(fan_in)));
}

}  // namespace detail

/// The default LoRA target set: every convolution in the U-Net backbone
/// (encoder blocks, decoder up- and fuse-convolutions), not the head, the
/// attention projections, or the expand module.
inline std::vector<std::string> default_lora_targets(const AttUctConfig& cfg) {
  std::vector<std::string> t;
  for (int i = 0; i < cfg.levels(); ++i)
    t.push_back("enc" + std::to_string(i) + ".conv");
  for (int i = cfg.levels() - 2; i >= 0; --i) {
    t.push_back("dec" + std::to_string(i) + ".up");
    t.push_back("dec" + std::to_string(i) + ".fuse");
  }
  return t;
}

/// Deterministic parameter initialization (He for convolutions, unit/zero for
/// norms, zero biases) in a fixed name order.
template <typename T = float>
ParamSetT<T> build_attuct(const AttUctConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamSetT<T> p;
  using ad::Tensor;

  auto conv = [&](const std::string& name, int cout, int cin, int k) {
    p.add(name + ".w", detail::he_conv<T>({cout, cin, k, k}, rng));
    p.add(name + ".b", Tensor<T>::zeros({cout}));
  };
  auto tconv = [&](const std::string& name, int cin, int cout, int k) {
    p.add(name + ".w", detail::he_conv<T>({cin, cout, k, k}, rng));
    p.add(name + ".b", Tensor<T>::zeros({cout}));
  };
  auto norm = [&](const std::string& name, int c) {
    p.add(name + ".g", Tensor<T>::full({c}, T(1)));
    p.add(name + ".b", Tensor<T>::zeros({c}));
  };

  // signal input head: 1x1 temporal-mixing convolution + SE channel attention
  const int hc = cfg.head_channels;
  conv("head.conv", hc, cfg.nt, 1);
  norm("head.norm", hc);
  if (cfg.use_channel_attention) {
    const int mid = hc / AttUctConfig::se_reduction;
    conv("head.se.fc1", mid, hc, 1);
    conv("head.se.fc2", hc, mid, 1);
  }

  // encoder
  int prev = hc;
  for (int i = 0; i < cfg.levels(); ++i) {
    const int c = cfg.level_channels[i];
    conv("enc" + std::to_string(i) + ".conv", c, prev, 3);
    norm("enc" + std::to_string(i) + ".norm", c);
    prev = c;
  }

  // bottleneck self-attention projections
  if (cfg.use_self_attention) {
    const int c = cfg.level_channels.back();
    const double stddev = std::sqrt(1.0 / double(c));
    for (const char* nm : {"wq", "wk", "wv", "wo"})
      p.add(std::string("bottleneck.attn.") + nm,
            Tensor<T>::randn({c, c}, rng, stddev));
    for (const char* nm : {"bq", "bk", "bv", "bo"})
      p.add(std::string("bottleneck.attn.") + nm, Tensor<T>::zeros({c}));
  }

  // decoder with attention gates
  for (int i = cfg.levels() - 2; i >= 0; --i) {
    const int c = cfg.level_channels[i];
    const int deeper = cfg.level_channels[i + 1];
    const std::string d = "dec" + std::to_string(i);
    conv(d + ".up", c, deeper, 3);
    norm(d + ".upnorm", c);
    if (cfg.use_attention_gates) {
      const int inter = std::max(c / 2, 1);
      conv(d + ".gate.wg", inter, c, 1);
      conv(d + ".gate.wx", inter, c, 1);
      conv(d + ".gate.psi", 1, inter, 1);
    }
    conv(d + ".fuse", c, 2 * c, 3);
    norm(d + ".fusenorm", c);
  }

  // expand module: transposed convolutions doubling resolution
  int ch = cfg.level_channels[0];
  for (int j = 0; j < cfg.expand_stages(); ++j) {
    const int next = cfg.expand_channels(j + 1);
    const std::string e = "expand" + std::to_string(j);
    tconv(e + ".tconv", ch, next, 2);
    norm(e + ".norm", next);
    ch = next;
  }
  conv("out.conv", 1, ch, 3);
  return p;
}

namespace detail {

/// Effective convolution weight: W0, or W0 + (alpha/r) B A when the layer is
/// a LoRA target. The low-rank product participates in the tape, so gradients
/// flow into A/B whenever they require grad.
template <typename T>
ad::Tensor<T> effective_weight(const ParamSetT<T>& params,
                               const std::string& layer,
                               const LoraAdapterT<T>* adapter) {
  const ad::Tensor<T>& w0 = params.at(layer + ".w");
  if (!adapter) return w0;
  bool targeted = false;
  for (const auto& t : adapter->targets) targeted = targeted || t == layer;
  if (!targeted) return w0;
  const ad::Tensor<T>& A = adapter->matrices.at(layer + ".A");
  const ad::Tensor<T>& B = adapter->matrices.at(layer + ".B");
  ad::Tensor<T> delta = ad::reshape(
      ad::mul_scalar(ad::matmul(B, A), adapter->alpha / adapter->rank),
      w0.shape());
  return ad::add(w0, delta);
}

}  // namespace detail

/// Optional forward-pass instrumentation: the attention-gate masks (one
/// [1,1,H,W] tensor per decoder level, sigmoid outputs) and the bottleneck
/// attention weight matrices (one [S,S] row-stochastic tensor per head).
template <typename T>
struct AttUctProbe {
  std::vector<ad::Tensor<T>> gate_masks;
  std::vector<ad::Tensor<T>> attn_weights;
};

/// Forward pass. `rf` has shape [nt, n_tx, n_rx] and must already be
/// normalized (see trainer). Returns the [nx, nz] SOS map in m/s.
template <typename T>
ad::Tensor<T> attuct_forward(const AttUctConfig& cfg,
                             const ParamSetT<T>& params,
                             const ad::Tensor<T>& rf,
                             const LoraAdapterT<T>* adapter = nullptr,
                             AttUctProbe<T>* probe = nullptr) {
  cfg.validate();
  using ad::Tensor;
  if (rf.shape() != std::vector<int>{cfg.nt, cfg.n_tx, cfg.n_rx})
    throw ShapeError("AttUCT: RF input " + ad::shape_str(rf.shape()) +
                     " does not match config [" + std::to_string(cfg.nt) +
                     "," + std::to_string(cfg.n_tx) + "," +
                     std::to_string(cfg.n_rx) + "]");
  for (T v : rf.value())
    if (!std::isfinite(double(v)))
      throw NumericalError("AttUCT: non-finite RF input");

  auto W = [&](const std::string& layer) {
    return detail::effective_weight(params, layer, adapter);
  };
  auto B = [&](const std::string& layer) { return params.at(layer + ".b"); };
  auto conv_in_lrelu = [&](const Tensor<T>& x, const std::string& conv_name,
                           const std::string& norm_name, int k, int pad) {
    Tensor<T> y = ad::conv2d(x, W(conv_name), B(conv_name), 1, pad);
    y = ad::instance_norm(y, params.at(norm_name + ".g"),
                          params.at(norm_name + ".b"));
    return ad::leaky_relu(y, 0.2);
  };

  // ---- signal head ----
  Tensor<T> x = ad::reshape(rf, {1, cfg.nt, cfg.n_tx, cfg.n_rx});
  x = conv_in_lrelu(x, "head.conv", "head.norm", 1, 0);
  if (cfg.use_channel_attention) {
    Tensor<T> s = ad::global_avg_pool(x);
    s = ad::relu(ad::conv2d(s, W("head.se.fc1"), B("head.se.fc1")));
    s = ad::sigmoid(ad::conv2d(s, W("head.se.fc2"), B("head.se.fc2")));
    x = ad::channel_mul(x, s);
  }

  // ---- encoder ----
  std::vector<Tensor<T>> skips;
  for (int i = 0; i < cfg.levels(); ++i) {
    const std::string e = "enc" + std::to_string(i);
    x = conv_in_lrelu(x, e + ".conv", e + ".norm", 3, 1);
    skips.push_back(x);
    if (i + 1 < cfg.levels()) x = ad::max_pool2d(x, 2);
  }

  // ---- bottleneck self-attention (residual) ----
  if (cfg.use_self_attention) {
    const int c = cfg.level_channels.back();
    const int h = x.shape()[2], w = x.shape()[3];
    const int S = h * w;
    const int dh = c / cfg.attn_heads;
    Tensor<T> tokens = ad::transpose(ad::reshape(x, {c, S}));  // [S, c]
    auto proj = [&](const char* wn, const char* bn) {
      return ad::add_rowvec(
          ad::matmul(tokens, params.at(std::string("bottleneck.attn.") + wn)),
          params.at(std::string("bottleneck.attn.") + bn));
    };
    Tensor<T> q = proj("wq", "bq"), k = proj("wk", "bk"), v = proj("wv", "bv");
    std::vector<Tensor<T>> heads;
    for (int hd = 0; hd < cfg.attn_heads; ++hd) {
      Tensor<T> qh = ad::slice(q, 1, hd * dh, dh);
      Tensor<T> kh = ad::slice(k, 1, hd * dh, dh);
      Tensor<T> vh = ad::slice(v, 1, hd * dh, dh);
      Tensor<T> scores = ad::mul_scalar(ad::matmul(qh, ad::transpose(kh)),
                                        1.0 / std::sqrt(double(dh)));
      Tensor<T> weights = ad::softmax(scores, 1);
      if (probe) probe->attn_weights.push_back(weights);
      heads.push_back(ad::matmul(weights, vh));
    }
    Tensor<T> attn = ad::add_rowvec(
        ad::matmul(ad::concat(heads, 1), params.at("bottleneck.attn.wo")),
        params.at("bottleneck.attn.bo"));
    x = ad::add(x, ad::reshape(ad::transpose(attn), {1, c, h, w}));
  }

  // ---- decoder with attention gates on skips ----
  for (int i = cfg.levels() - 2; i >= 0; --i) {
    const std::string d = "dec" + std::to_string(i);
    x = ad::nearest_upsample2d(x, 2);
    x = conv_in_lrelu(x, d + ".up", d + ".upnorm", 3, 1);
    Tensor<T> skip = skips[std::size_t(i)];
    if (cfg.use_attention_gates) {
      Tensor<T> g = ad::conv2d(x, W(d + ".gate.wg"), B(d + ".gate.wg"));
      Tensor<T> xg = ad::conv2d(skip, W(d + ".gate.wx"), B(d + ".gate.wx"));
      Tensor<T> psi = ad::sigmoid(ad::conv2d(
          ad::relu(ad::add(g, xg)), W(d + ".gate.psi"), B(d + ".gate.psi")));
      if (probe) probe->gate_masks.push_back(psi);
      skip = ad::spatial_mul(skip, psi);
    }
    x = ad::concat<T>({x, skip}, 1);
    x = conv_in_lrelu(x, d + ".fuse", d + ".fusenorm", 3, 1);
  }

  // ---- expand module and output head ----
  for (int j = 0; j < cfg.expand_stages(); ++j) {
    const std::string e = "expand" + std::to_string(j);
    x = ad::transposed_conv2d(x, W(e + ".tconv"), B(e + ".tconv"), 2, 0);
    x = ad::instance_norm(x, params.at(e + ".norm.g"),
                          params.at(e + ".norm.b"));
    x = ad::relu(x);
  }
  x = ad::conv2d(x, W("out.conv"), B("out.conv"), 1, 1);
  x = ad::add_scalar(ad::mul_scalar(ad::sigmoid(x), cfg.out_scale),
                     cfg.out_offset);
  return ad::reshape(x, {cfg.nx, cfg.nz});
}

/// Fresh adapter for the given targets: A ~ N(0, 0.01), B = 0, so the initial
/// low-rank update is exactly zero.
template <typename T = float>
LoraAdapterT<T> build_lora(const AttUctConfig& cfg, const ParamSetT<T>& params,
                           std::vector<std::string> targets, int rank,
                           double alpha, std::uint64_t seed) {
  if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
  if (targets.empty()) targets = default_lora_targets(cfg);
  std::mt19937_64 rng(seed);
  LoraAdapterT<T> a;
  a.rank = rank;
  a.alpha = alpha;
  a.targets = targets;
  for (const auto& t : targets) {
    if (!params.has(t + ".w"))
      throw ConfigError("LoRA target does not name a conv layer: " + t);
    const auto& shape = params.at(t + ".w").shape();
    if (shape.size() != 4)
      throw ConfigError("LoRA target is not a convolution: " + t);
    const int d = shape[0];
    const int k = shape[1] * shape[2] * shape[3];
    if (rank > std::min(d, k))
      throw ConfigError("LoRA rank " + std::to_string(rank) +
                        " exceeds min(d,k) for target " + t);
    a.matrices.add(t + ".A",
                   ad::Tensor<T>::randn({rank, k}, rng, 0.01));
    a.matrices.add(t + ".B", ad::Tensor<T>::zeros({d, rank}));
  }
  return a;
}

struct LoraCount {
  std::size_t adapter_params = 0;
  std::size_t base_params = 0;
  double fraction = 0.0;
};

/// Adapter parameter arithmetic: sum of r*(d+k) over targets vs base size.
template <typename T>
LoraCount lora_param_count(const AttUctConfig& cfg, const ParamSetT<T>& params,
                           const std::vector<std::string>& targets_in,
                           int rank) {
  if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
  std::vector<std::string> targets =
      targets_in.empty() ? default_lora_targets(cfg) : targets_in;
  LoraCount c;
  c.base_params = params.param_count();
  for (const auto& t : targets) {
    if (!params.has(t + ".w"))
      throw ConfigError("LoRA target does not name a conv layer: " + t);
    const auto& shape = params.at(t + ".w").shape();
    const std::size_t d = std::size_t(shape[0]);
    const std::size_t k = std::size_t(shape[1]) * shape[2] * shape[3];
    c.adapter_params += std::size_t(rank) * (d + k);
  }
  c.fraction = double(c.adapter_params) / double(c.base_params);
  return c;
}

}  // namespace ucts

#endif  // UCTS_ATTUCT_HPP
