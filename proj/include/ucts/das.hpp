// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_DAS_HPP
#define UCTS_DAS_HPP

#include <cmath>
#include <complex>
#include <vector>

#include "ucts/common.hpp"
#include "ucts/fft.hpp"
#include "ucts/geometry.hpp"
#include "ucts/wave.hpp"

namespace ucts {

/// B-mode-style reflectivity image: non-negative envelope amplitudes.
struct DasImage {
  Grid2D grid;
  std::vector<double> values;
};

/// Subtract a reference acquisition (e.g. a homogeneous water-bath scan of
/// the same ring) from a data cube, leaving only the scattered field. This is
/// the standard calibration step for tomographic rings: in 2D the transmitted
/// wave trails a slowly decaying wake (no sharp trailing edge), so no time
/// gate can separate weak echoes from it — but the wake is identical in the
/// reference scan and cancels exactly.
inline RfCube subtract_reference(const RfCube& data, const RfCube& reference) {
  if (data.nt != reference.nt || data.n_tx != reference.n_tx ||
      data.n_rx != reference.n_rx)
    throw ShapeError("data and reference cube shapes differ");
  RfCube out = data;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] -= reference.data[i];
  return out;
}

/// Textbook delay-and-sum under a constant assumed speed c0: for each pixel,
/// the analytic-signal value of every (tx, rx) trace is sampled at the
/// two-way straight-ray time and summed coherently; magnitude after the sum.
/// No apodization, no transmit subsetting. Samples earlier than 1.05x the
/// straight tx->rx path (plus the source onset delay) are zeroed first to
/// suppress the leading edge of the transmitted wave; for quantitative
/// focusing, subtract a reference scan first (see subtract_reference).
inline DasImage das_reconstruct(const RfCube& data, const RingArray& array,
                                double c0, const Grid2D& grid,
                                double system_delay = -1.0) {
  if (!(c0 >= 1000.0 && c0 <= 5000.0))
    throw ConfigError("assumed speed must lie in [1000, 5000] m/s");
  if (data.n_tx != array.n_elem || data.n_rx != array.n_elem)
    throw ShapeError("cube element counts do not match the array");

  const double dt = data.dt_out;
  const int nt = data.nt;
  // system delay: the source wavelet peaks 1.5/f0 after the trace origin and
  // the scattered envelope skews ~0.3/f0 later still (2D response tail);
  // calibrated against simulated point echoes over six positions
  const double t0 = system_delay >= 0.0
                        ? system_delay
                        : (data.f0 > 0.0 ? 1.8 / data.f0 : 0.0);

  // analytic signal per trace, with direct-arrival samples removed
  std::vector<std::vector<std::complex<double>>> env(
      std::size_t(data.n_tx) * data.n_rx);
  parallel_for(0, env.size(), [&](std::size_t i) {
    const int tx = int(i) / data.n_rx;
    const int rx = int(i) % data.n_rx;
    std::vector<double> trace(nt);
    for (int t = 0; t < nt; ++t) trace[t] = data.at(t, tx, rx);
    const auto& [ax, az] = array.positions[tx];
    const auto& [bx, bz] = array.positions[rx];
    const double direct = std::hypot(ax - bx, az - bz) / c0;
    const int cut = int((1.05 * direct + t0) / dt);
    for (int t = 0; t < std::min(cut, nt); ++t) trace[t] = 0.0;
    env[i] = analytic_signal(trace);
  });

  DasImage img{grid, std::vector<double>(grid.size(), 0.0)};
  parallel_for(0, grid.size(), [&](std::size_t pix) {
    const int iz = int(pix) / grid.nx;
    const int ix = int(pix) % grid.nx;
    const double px = grid.x_of(ix);
    const double pz = grid.z_of(iz);
    std::complex<double> acc = 0.0;
    for (int tx = 0; tx < data.n_tx; ++tx) {
      const auto& [axp, azp] = array.positions[tx];
      const double d_tx = std::hypot(px - axp, pz - azp);
      for (int rx = 0; rx < data.n_rx; ++rx) {
        const auto& [bxp, bzp] = array.positions[rx];
        const double t = (d_tx + std::hypot(px - bxp, pz - bzp)) / c0 + t0;
        const double s = t / dt;
        const int k = int(std::floor(s));
        if (k < 0 || k + 1 >= nt) continue;  // out-of-window delays add 0
        const double frac = s - k;
        const auto& e = env[std::size_t(tx) * data.n_rx + rx];
        acc += (1.0 - frac) * e[k] + frac * e[k + 1];
      }
    }
    img.values[pix] = std::abs(acc);
  });
  return img;
}

}  // namespace ucts

#endif  // UCTS_DAS_HPP
