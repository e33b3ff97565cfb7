// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_TRAIN_HPP
#define UCTS_TRAIN_HPP

// Two-stage training orchestration:
//   stage 1 — supervised regression of SOS maps from simulated RF cubes
//             (MSE, AdamW, cosine decay, best-validation selection);
//   stage 2 — physics-informed self-supervised fine-tuning: the network
//             prediction is pushed through the wave solver, and the adjoint
//             misfit gradient is spliced into backpropagation via a
//             custom-gradient tape node;
//   LoRA    — the stage-2 loop with the base frozen and only adapter
//             matrices A/B updated.
//
// RF normalization: each cube is divided by its own 99th-percentile absolute
// amplitude before entering the network (raw RF spans orders of magnitude);
// checkpoints record the scheme in metadata so inference applies the same
// transform.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ucts/adjoint.hpp"
#include "ucts/attuct.hpp"
#include "ucts/checkpoint.hpp"
#include "ucts/common.hpp"
#include "ucts/geometry.hpp"
#include "ucts/optim.hpp"
#include "ucts/tensor.hpp"
#include "ucts/wave.hpp"

namespace ucts {

/// Speed bounds applied to stage-2 predictions before simulation; matches the
/// output head's affine range, so the projection is almost always a no-op but
/// guards the solver against corrupt checkpoints.
inline constexpr double kTrainCMin = 1400.0;
inline constexpr double kTrainCMax = 3000.0;

/// Metadata value identifying the RF normalization scheme.
inline constexpr const char* kRfNormScheme = "per-cube-p99-abs";

struct TrainSample {
  RfCube rf;
  SosMap map;  // ground truth; unused (may be empty) in stage 2
};

struct TrainConfig {
  int epochs = 200;
  int batch = 4;
  double lr0 = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  int checkpoint_cadence = 0;     // epochs between snapshots; 0 disables
  std::string checkpoint_dir;     // required when cadence > 0

  void validate() const {
    if (epochs < 1) throw ConfigError("training epochs must be >= 1");
    if (batch < 1) throw ConfigError("batch size must be >= 1");
    if (!(lr0 >= 0.0)) throw ConfigError("lr0 must be >= 0");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
      throw ConfigError("validation fraction must lie in [0, 1)");
    if (checkpoint_cadence < 0)
      throw ConfigError("checkpoint cadence must be >= 0");
    if (checkpoint_cadence > 0 && checkpoint_dir.empty())
      throw ConfigError("checkpoint cadence requires a checkpoint directory");
  }

  static TrainConfig stage1_defaults() { return TrainConfig{}; }
  static TrainConfig stage2_defaults() {
    TrainConfig c;
    c.epochs = 100;
    c.batch = 1;
    c.lr0 = 1e-4;
    return c;
  }
  static TrainConfig lora_defaults() {
    TrainConfig c;
    c.epochs = 60;
    c.batch = 1;
    c.lr0 = 1e-4;
    return c;
  }
};

struct EpochLog {
  std::vector<double> train_loss;
  std::vector<double> val_loss;  // mirrors train loss when no val split
  std::vector<double> lr;
  std::vector<double> seconds;

  void write_csv(std::ostream& os) const {
    os << "epoch,train_loss,val_loss,lr,seconds\n";
    for (std::size_t e = 0; e < train_loss.size(); ++e)
      os << e << ',' << train_loss[e] << ',' << val_loss[e] << ',' << lr[e]
         << ',' << seconds[e] << '\n';
  }
};

/// Fixed-grid physics context for stage-2/LoRA fine-tuning: the acquisition
/// that produced the observed RF cubes.
struct PhysicsContext {
  RingArray array;
  Wavelet wavelet;
  AcquisitionConfig cfg;
  Grid2D grid;
};

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

/// 99th-percentile absolute amplitude of a cube (normalization divisor);
/// returns 1 for an all-zero cube so normalization is a no-op.
inline double rf_norm_constant(const RfCube& cube) {
  if (cube.data.empty()) throw ShapeError("rf_norm_constant: empty cube");
  std::vector<double> mag(cube.data.size());
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(cube.data[i]);
  const std::size_t k = std::size_t(0.99 * double(mag.size() - 1));
  std::nth_element(mag.begin(), mag.begin() + k, mag.end());
  const double q = mag[k];
  return q > 0.0 ? q : 1.0;
}

/// Normalized network input [nt, n_tx, n_rx] from a raw cube.
template <typename T = float>
ad::Tensor<T> rf_to_tensor(const RfCube& cube) {
  const double inv = 1.0 / rf_norm_constant(cube);
  std::vector<T> v(cube.data.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = T(cube.data[i] * inv);
  return ad::Tensor<T>({cube.nt, cube.n_tx, cube.n_rx}, std::move(v));
}

template <typename T = float>
ad::Tensor<T> sos_to_tensor(const SosMap& map) {
  std::vector<T> v(map.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = T(map.values[i]);
  return ad::Tensor<T>({map.grid.nx, map.grid.nz}, std::move(v));
}

/// Deep copy: fresh nodes, same names/shapes/values (no grad state shared).
template <typename T>
ParamSetT<T> clone_params(const ParamSetT<T>& src) {
  ParamSetT<T> dst;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto& t = src.tensors()[i];
    dst.add(src.names()[i], ad::Tensor<T>(t.shape(), t.value()));
  }
  return dst;
}

namespace detail {

inline void check_sample_shapes(const AttUctConfig& model, const RfCube& rf,
                                const SosMap* map) {
  if (rf.nt != model.nt || rf.n_tx != model.n_tx || rf.n_rx != model.n_rx)
    throw ShapeError("dataset cube " + std::to_string(rf.nt) + "x" +
                     std::to_string(rf.n_tx) + "x" + std::to_string(rf.n_rx) +
                     " does not match model input");
  if (map && (map->grid.nx != model.nx || map->grid.nz != model.nz))
    throw ShapeError("dataset map grid does not match model output");
}

/// Deterministic train/validation index split: the trailing `val_fraction`
/// of a seeded shuffle becomes validation (empty for tiny datasets).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_dataset(std::size_t n, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed ^ 0x517377ULL);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_val = std::size_t(val_fraction * double(n));
  std::vector<std::size_t> val(idx.end() - n_val, idx.end());
  idx.resize(n - n_val);
  return {std::move(idx), std::move(val)};
}

inline void maybe_checkpoint(const TrainConfig& cfg, int epoch,
                             const ParamSet& params,
                             const std::string& stage) {
  if (cfg.checkpoint_cadence <= 0) return;
  if ((epoch + 1) % cfg.checkpoint_cadence != 0) return;
  Checkpoint ckpt;
  ckpt.params = clone_params(params);
  ckpt.metadata["rf_norm"] = kRfNormScheme;
  ckpt.metadata["stage"] = stage;
  ckpt.metadata["epoch"] = std::to_string(epoch);
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
  save_checkpoint(cfg.checkpoint_dir + "/" + name, ckpt);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// stage 1: supervised
// ---------------------------------------------------------------------------

/// Supervised training on (RF, SOS) pairs. Returns the best-validation
/// parameters (by value; the input set is left at the final epoch's state).
inline std::pair<ParamSet, EpochLog> train_stage1(
    const AttUctConfig& model, ParamSet& params,
    const std::vector<TrainSample>& dataset, const TrainConfig& cfg) {
  model.validate();
  cfg.validate();
  if (dataset.empty()) throw ConfigError("stage 1: empty dataset");
  for (const auto& s : dataset)
    detail::check_sample_shapes(model, s.rf, &s.map);

  // normalize inputs once; targets stay in m/s
  std::vector<ad::Tensor<float>> inputs, targets;
  inputs.reserve(dataset.size());
  for (const auto& s : dataset) {
    inputs.push_back(rf_to_tensor<float>(s.rf));
    targets.push_back(sos_to_tensor<float>(s.map));
  }
  auto [train_idx, val_idx] =
      detail::split_dataset(dataset.size(), cfg.val_fraction, cfg.seed);
  if (train_idx.empty()) throw ConfigError("stage 1: empty training split");

  params.set_requires_grad(true);
  ad::AdamW<float> opt(params.tensors(), cfg.beta1, cfg.beta2, cfg.adam_eps,
                       cfg.weight_decay);
  std::mt19937_64 shuffle_rng(cfg.seed);

  auto eval_loss = [&](const std::vector<std::size_t>& idx) {
    double total = 0.0;
    for (std::size_t i : idx) {
      ad::Tensor<float> pred = attuct_forward(model, params, inputs[i]);
      total += double(ad::mse_loss(pred, targets[i]).value()[0]);
    }
    return total / double(idx.size());
  };

  EpochLog log;
  ParamSet best = clone_params(params);
  double best_val = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = ad::cosine_lr(epoch, cfg.epochs, cfg.lr0);
    std::vector<std::size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double train_total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += std::size_t(cfg.batch)) {
      const std::size_t hi =
          std::min(order.size(), b + std::size_t(cfg.batch));
      ad::Tensor<float> batch_loss;
      for (std::size_t k = b; k < hi; ++k) {
        ad::Tensor<float> pred =
            attuct_forward(model, params, inputs[order[k]]);
        ad::Tensor<float> l = ad::mse_loss(pred, targets[order[k]]);
        batch_loss = batch_loss.defined() ? ad::add(batch_loss, l) : l;
      }
      batch_loss = ad::mul_scalar(batch_loss, 1.0 / double(hi - b));
      const double lv = double(batch_loss.value()[0]);
      if (!std::isfinite(lv))
        throw NumericalError("stage 1: NaN loss at epoch " +
                             std::to_string(epoch));
      train_total += lv * double(hi - b);
      opt.zero_grad();
      ad::backward(batch_loss);
      opt.step(lr);
    }
    const double train_loss = train_total / double(order.size());
    const double val_loss = val_idx.empty() ? train_loss : eval_loss(val_idx);
    if (!std::isfinite(val_loss))
      throw NumericalError("stage 1: NaN validation loss at epoch " +
                           std::to_string(epoch));
    if (val_loss < best_val) {
      best_val = val_loss;
      best = clone_params(params);
    }
    detail::maybe_checkpoint(cfg, epoch, params, "supervised");
    const auto t1 = std::chrono::steady_clock::now();
    log.train_loss.push_back(train_loss);
    log.val_loss.push_back(val_loss);
    log.lr.push_back(lr);
    log.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  return {std::move(best), std::move(log)};
}

// ---------------------------------------------------------------------------
// stage 2: physics-informed self-supervised
// ---------------------------------------------------------------------------

/// One stage-2 sample loss as a tape scalar: forward the network, project the
/// prediction to [kTrainCMin, kTrainCMax], run the wave-equation misfit
/// against d_obs, and splice the adjoint gradient into the tape. The
/// projection's subgradient is pass-through inside the bounds and zero
/// outside. Pixels inside the absorbing boundary layer are pinned to the
/// 1500 m/s water background before simulation: the adjoint gradient is
/// masked there, so pinning keeps the loss genuinely independent of those
/// predictions and the spliced gradient exact.
template <typename T>
ad::Tensor<T> stage2_sample_loss(const AttUctConfig& model,
                                 const ParamSetT<T>& params,
                                 const ad::Tensor<T>& rf_norm,
                                 const RfCube& obs, const PhysicsContext& phys,
                                 const LoraAdapterT<T>* adapter = nullptr) {
  if (phys.grid.nx != model.nx || phys.grid.nz != model.nz)
    throw ShapeError("stage 2: physics grid does not match model output");
  ad::Tensor<T> pred = attuct_forward(model, params, rf_norm, adapter);

  const auto sponge = detail::sponge_mask(phys.grid, phys.cfg.sponge_cells);
  SosMap pred_map(phys.grid, 1500.0);
  std::vector<bool> active(pred.numel());
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double v = double(pred.value()[i]);
    active[i] = !sponge[i] && v > kTrainCMin && v < kTrainCMax;
    if (!sponge[i]) pred_map.values[i] = std::clamp(v, kTrainCMin, kTrainCMax);
  }
  auto [loss, grad_c] =
      misfit_vjp(pred_map, obs, phys.array, phys.wavelet, phys.cfg);
  std::vector<T> grad(pred.numel());
  for (std::size_t i = 0; i < grad.size(); ++i)
    grad[i] = active[i] ? T(grad_c[i]) : T(0);
  return ad::external_scalar(pred, loss, std::move(grad));
}

namespace detail {

/// Shared stage-2 loop: `trainable` is the tensor list handed to AdamW (all
/// parameters for full fine-tuning, A/B only for LoRA).
template <typename RunSample>
EpochLog stage2_loop(const std::vector<ad::Tensor<float>>& inputs,
                     const TrainConfig& cfg,
                     std::vector<ad::Tensor<float>> trainable,
                     const RunSample& sample_loss,
                     const std::function<void(int)>& on_epoch_end) {
  ad::AdamW<float> opt(std::move(trainable), cfg.beta1, cfg.beta2,
                       cfg.adam_eps, cfg.weight_decay);
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);

  EpochLog log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = ad::cosine_lr(epoch, cfg.epochs, cfg.lr0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += std::size_t(cfg.batch)) {
      const std::size_t hi = std::min(order.size(), b + std::size_t(cfg.batch));
      ad::Tensor<float> batch_loss;
      for (std::size_t k = b; k < hi; ++k) {
        ad::Tensor<float> l;
        try {
          l = sample_loss(order[k]);
        } catch (const NumericalError& e) {
          throw NumericalError("stage 2: sample " +
                               std::to_string(order[k]) + " at epoch " +
                               std::to_string(epoch) + ": " + e.what());
        }
        batch_loss = batch_loss.defined() ? ad::add(batch_loss, l) : l;
      }
      batch_loss = ad::mul_scalar(batch_loss, 1.0 / double(hi - b));
      const double lv = double(batch_loss.value()[0]);
      if (!std::isfinite(lv))
        throw NumericalError("stage 2: NaN loss at epoch " +
                             std::to_string(epoch));
      total += lv * double(hi - b);
      opt.zero_grad();
      ad::backward(batch_loss);
      opt.step(lr);
    }
    on_epoch_end(epoch);
    const auto t1 = std::chrono::steady_clock::now();
    const double mean_loss = total / double(order.size());
    log.train_loss.push_back(mean_loss);
    log.val_loss.push_back(mean_loss);  // stage 2 has no labeled validation
    log.lr.push_back(lr);
    log.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  return log;
}

}  // namespace detail

/// Physics-informed fine-tuning on unlabeled RF cubes; `params` is updated in
/// place and the EpochLog returned.
inline EpochLog train_stage2(const AttUctConfig& model, ParamSet& params,
                             const std::vector<RfCube>& cubes,
                             const PhysicsContext& phys,
                             const TrainConfig& cfg) {
  model.validate();
  cfg.validate();
  phys.cfg.validate();
  if (cubes.empty()) throw ConfigError("stage 2: empty dataset");
  std::vector<ad::Tensor<float>> inputs;
  for (const auto& c : cubes) {
    detail::check_sample_shapes(model, c, nullptr);
    inputs.push_back(rf_to_tensor<float>(c));
  }
  params.set_requires_grad(true);
  return detail::stage2_loop(
      inputs, cfg, params.tensors(),
      [&](std::size_t i) {
        return stage2_sample_loss<float>(model, params, inputs[i], cubes[i],
                                         phys);
      },
      [&](int epoch) {
        detail::maybe_checkpoint(cfg, epoch, params, "self_supervised");
      });
}

/// LoRA fine-tuning: identical loop to stage 2 with the base frozen; only the
/// adapter matrices receive gradients and optimizer updates. The base
/// ParamSet is bitwise unchanged on return.
inline EpochLog train_lora(const AttUctConfig& model, ParamSet& params,
                           LoraAdapter& adapter,
                           const std::vector<RfCube>& cubes,
                           const PhysicsContext& phys,
                           const TrainConfig& cfg) {
  model.validate();
  cfg.validate();
  phys.cfg.validate();
  if (cubes.empty()) throw ConfigError("lora: empty dataset");
  std::vector<ad::Tensor<float>> inputs;
  for (const auto& c : cubes) {
    detail::check_sample_shapes(model, c, nullptr);
    inputs.push_back(rf_to_tensor<float>(c));
  }
  // freeze the base: values are never touched, only grad flags
  params.set_requires_grad(false);
  adapter.matrices.set_requires_grad(true);
  return detail::stage2_loop(
      inputs, cfg, adapter.matrices.tensors(),
      [&](std::size_t i) {
        return stage2_sample_loss<float>(model, params, inputs[i], cubes[i],
                                         phys, &adapter);
      },
      [](int) {});
}

// ---------------------------------------------------------------------------
// learning-rate sweep
// ---------------------------------------------------------------------------

struct LrSweepRow {
  double lr = 0.0;
  double final_loss = 0.0;
  bool ok = false;
  std::string error;
};

/// Run train_stage2 once per learning rate from the same initial parameters,
/// seed, and budget. Per-run failures are recorded and the sweep continues.
inline std::vector<LrSweepRow> lr_sweep(const AttUctConfig& model,
                                        const ParamSet& base,
                                        const std::vector<RfCube>& cubes,
                                        const PhysicsContext& phys,
                                        TrainConfig cfg,
                                        const std::vector<double>& lrs) {
  std::vector<LrSweepRow> rows;
  for (double lr : lrs) {
    LrSweepRow row;
    row.lr = lr;
    try {
      ParamSet params = clone_params(base);
      cfg.lr0 = lr;
      EpochLog log = train_stage2(model, params, cubes, phys, cfg);
      row.final_loss = log.train_loss.back();
      row.ok = true;
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_lr_sweep_csv(std::ostream& os,
                               const std::vector<LrSweepRow>& rows) {
  os << "lr,final_loss,status\n";
  for (const auto& r : rows) {
    os << r.lr << ',';
    if (r.ok)
      os << r.final_loss << ",ok\n";
    else
      os << "nan,failed\n";
  }
}

}  // namespace ucts

#endif  // UCTS_TRAIN_HPP
