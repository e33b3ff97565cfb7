// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_ADJOINT_HPP
#define UCTS_ADJOINT_HPP

#include <cmath>
#include <optional>
#include <vector>

#include "ucts/common.hpp"
#include "ucts/geometry.hpp"
#include "ucts/wave.hpp"

namespace ucts {

/// Data misfit between observed and simulated RF plus (optionally) its
/// gradient with respect to the sound-speed map.
struct MisfitReport {
  double value = 0.0;
  std::vector<double> per_shot;            // n_tx entries, summing to value
  std::optional<std::vector<double>> gradient;  // dL/dc, nx*nz
};

namespace detail {

/// Forward + exact discrete adjoint for one shot. Returns the shot's misfit
/// contribution and, when grad != nullptr, accumulates dL/dc into it.
///
/// The adjoint is the literal transpose of the forward recurrence
///   p' = W (2 p + V Lp - q) + W e_src wav,   q' = W p,
/// recorded traces decimated by a symmetric FIR. With mu = dL/dp, nu = dL/dq:
///   mu_n = 2 W mu_{n+1} + L(v .* W mu_{n+1}) + w .* nu_{n+1} + e_rec g_n
///   nu_n = -W mu_{n+1}
///   dL/dv[i] += (W mu_{n+1})[i] * (L p_n)[i]
/// and dL/dc = dL/dv * 2 c (dt/dx)^2.
inline double shot_misfit_adjoint(const SosMap& map, const RingArray& array,
                                  int tx, const Wavelet& wavelet,
                                  const AcquisitionConfig& cfg,
                                  const RfCube& obs, std::vector<double>* grad,
                                  int history_decimation = 1) {
  const Grid2D& g = map.grid;
  const int k = steps_per_sample(map, cfg);
  const double dt = cfg.dt_out() / k;
  const int n_steps = (cfg.nt_out - 1) * k;
  const int n_rx = array.n_elem;
  const double dt_out = cfg.dt_out();

  ShotResult shot =
      forward_shot(map, array, tx, wavelet, cfg, grad != nullptr,
                   history_decimation);

  // Misfit and residual at the output rate.
  double loss = 0.0;
  std::vector<std::vector<double>> resid(n_rx,
                                         std::vector<double>(cfg.nt_out));
  for (int r = 0; r < n_rx; ++r) {
    for (int t = 0; t < cfg.nt_out; ++t) {
      const double d_pre = shot.traces[std::size_t(t) * n_rx + r];
      const double d_obs = obs.at(t, tx, r);
      const double e = d_obs - d_pre;
      loss += e * e * dt_out / n_rx;
      resid[r][t] = 2.0 * (d_pre - d_obs) * dt_out / n_rx;  // dL/dd_pre
    }
  }
  if (grad == nullptr) return loss;

  if (!shot.history)
    throw NumericalError("wavefield history unavailable for adjoint pass");
  const WavefieldHistory& hist = *shot.history;

  // Scatter output-rate residuals back to internal-rate injection series.
  const auto kernel = decimation_kernel(k);
  std::vector<std::vector<double>> g_int(n_rx);
  for (int r = 0; r < n_rx; ++r)
    g_int[r] = decimate_transpose(resid[r], k, n_steps + 1, kernel);

  std::vector<double> v(g.size());
  const double r_dx = dt / g.dx;
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = map.values[i] * map.values[i] * r_dx * r_dx;
  const auto w = sponge_weights(g, cfg.sponge_cells, cfg.sponge_strength, k);
  const auto nodes = array.nodes(g);

  std::vector<double> mu(g.size(), 0.0), nu(g.size(), 0.0);
  std::vector<double> w_mu(g.size()), tmp(g.size()), lap(g.size());
  std::vector<double> dv(g.size(), 0.0);

  // Terminal condition: trace sample N feeds mu_N.
  for (int r = 0; r < n_rx; ++r) {
    const auto [ix, iz] = nodes[r];
    mu[g.index(ix, iz)] += g_int[r][n_steps];
  }

  for (int n = n_steps - 1; n >= 0; --n) {
    for (std::size_t i = 0; i < mu.size(); ++i) w_mu[i] = w[i] * mu[i];
    // gradient accumulation uses the pre-step forward field p_n
    const std::vector<double> p_n = hist.reconstruct(n);
    laplacian(p_n, g, cfg.fourth_order, lap);
    for (std::size_t i = 0; i < dv.size(); ++i) dv[i] += w_mu[i] * lap[i];

    for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] = v[i] * w_mu[i];
    laplacian(tmp, g, cfg.fourth_order, lap);
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double next_nu = -w_mu[i];
      mu[i] = 2.0 * w_mu[i] + lap[i] + w[i] * nu[i];
      nu[i] = next_nu;
    }
    for (int r = 0; r < n_rx; ++r) {
      const auto [ix, iz] = nodes[r];
      mu[g.index(ix, iz)] += g_int[r][n];
    }
  }

  const auto mask = sponge_mask(g, cfg.sponge_cells);
  for (std::size_t i = 0; i < dv.size(); ++i) {
    if (mask[i]) continue;
    (*grad)[i] += dv[i] * 2.0 * map.values[i] * r_dx * r_dx;
  }
  return loss;
}

}  // namespace detail

inline void check_obs_shape(const RfCube& obs, const AcquisitionConfig& cfg) {
  if (obs.nt != cfg.nt_out || obs.n_tx != cfg.n_tx || obs.n_rx != cfg.n_rx)
    throw ShapeError("observed cube shape does not match acquisition config");
}

/// Discretized stage-2 misfit: (1/N_r) sum_r sum_t (d_obs - d_pre)^2 * dt_out,
/// summed over all shots, with d_pre simulated from pred_map.
inline double rf_misfit(const SosMap& pred_map, const RfCube& obs,
                        const RingArray& array, const Wavelet& wavelet,
                        const AcquisitionConfig& cfg) {
  check_obs_shape(obs, cfg);
  std::vector<double> per_shot(cfg.n_tx, 0.0);
  parallel_for(0, std::size_t(cfg.n_tx), [&](std::size_t s) {
    per_shot[s] = detail::shot_misfit_adjoint(pred_map, array, int(s), wavelet,
                                              cfg, obs, nullptr);
  });
  double total = 0.0;
  for (double x : per_shot) total += x;  // fixed shot order
  return total;
}

/// Misfit plus its gradient dL/dc via the adjoint-state method. Per-shot
/// passes run in parallel; accumulation into the shared gradient follows a
/// fixed shot order so results are reproducible across thread counts.
inline MisfitReport misfit_gradient(const SosMap& pred_map, const RfCube& obs,
                                    const RingArray& array,
                                    const Wavelet& wavelet,
                                    const AcquisitionConfig& cfg,
                                    int history_decimation = 1) {
  check_obs_shape(obs, cfg);
  const std::size_t n = pred_map.grid.size();
  std::vector<std::vector<double>> shot_grads(cfg.n_tx,
                                              std::vector<double>(n, 0.0));
  std::vector<double> per_shot(cfg.n_tx, 0.0);
  parallel_for(0, std::size_t(cfg.n_tx), [&](std::size_t s) {
    per_shot[s] = detail::shot_misfit_adjoint(pred_map, array, int(s), wavelet,
                                              cfg, obs, &shot_grads[s],
                                              history_decimation);
  });
  MisfitReport report;
  report.per_shot = per_shot;
  report.gradient = std::vector<double>(n, 0.0);
  for (int s = 0; s < cfg.n_tx; ++s) {
    report.value += per_shot[s];
    for (std::size_t i = 0; i < n; ++i)
      (*report.gradient)[i] += shot_grads[s][i];
  }
  for (double x : *report.gradient)
    if (!std::isfinite(x)) throw NumericalError("non-finite gradient entry");
  return report;
}

/// Vector-Jacobian product form consumed by the trainer: the loss value and
/// dL/dc packaged as a flat array.
inline std::pair<double, std::vector<double>> misfit_vjp(
    const SosMap& pred_map, const RfCube& obs, const RingArray& array,
    const Wavelet& wavelet, const AcquisitionConfig& cfg) {
  MisfitReport report = misfit_gradient(pred_map, obs, array, wavelet, cfg);
  return {report.value, std::move(*report.gradient)};
}

}  // namespace ucts

#endif  // UCTS_ADJOINT_HPP
