// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_WAVE_HPP
#define UCTS_WAVE_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ucts/common.hpp"
#include "ucts/geometry.hpp"

namespace ucts {

/// Acquisition protocol binding simulation and training together.
struct AcquisitionConfig {
  double fs = 2.0e6;        // receiver sampling rate, Hz
  int nt_out = 128;         // recorded samples per trace
  double f0 = 150.0e3;      // source center frequency, Hz
  int n_tx = 16;
  int n_rx = 16;
  double cfl_safety = 0.9;
  int sponge_cells = 3;  // desk-scale default; use auto_sponge_cells per grid
  double sponge_strength = 0.15;  // d0 in d(i) = d0*(i/L)^2 per step
  bool fourth_order = false;      // optional 4th-order Laplacian

  double dt_out() const { return 1.0 / fs; }

  void validate() const {
    if (!(fs > 2.0 * f0)) throw ConfigError("fs must exceed 2*f0");
    if (nt_out < 64) throw ConfigError("nt_out must be at least 64");
    if (!(cfl_safety > 0.0 && cfl_safety <= 1.0))
      throw ConfigError("cfl_safety must lie in (0, 1]");
  }

  /// Full clinical-scale protocol: 25 MHz sampling, 1024 samples, 1 MHz
  /// source, 128 transmit/receive elements.
  static AcquisitionConfig paper_scale() {
    AcquisitionConfig cfg;
    cfg.fs = 25.0e6;
    cfg.nt_out = 1024;
    cfg.f0 = 1.0e6;
    cfg.n_tx = cfg.n_rx = 128;
    return cfg;
  }

  /// Desk-scale protocol matched to a 64x64 @ 1 mm grid: the source
  /// frequency keeps ~10 grid points per wavelength in water.
  static AcquisitionConfig desk_scale() { return AcquisitionConfig{}; }
};

/// Full-matrix RF data, time slowest index, receive fastest.
struct RfCube {
  int nt = 0;
  int n_tx = 0;
  int n_rx = 0;
  double dt_out = 0.0;  // seconds
  double f0 = 0.0;      // Hz, carried for provenance
  std::vector<double> data;

  RfCube() = default;
  RfCube(int nt_, int ntx, int nrx, double dt, double f0_ = 0.0)
      : nt(nt_), n_tx(ntx), n_rx(nrx), dt_out(dt), f0(f0_),
        data(std::size_t(nt_) * ntx * nrx, 0.0) {}

  std::size_t index(int t, int tx, int rx) const {
    return (std::size_t(t) * n_tx + tx) * n_rx + rx;
  }
  double& at(int t, int tx, int rx) { return data[index(t, tx, rx)]; }
  double at(int t, int tx, int rx) const { return data[index(t, tx, rx)]; }
};

/// Stored forward wavefields for one shot, at internal solver timesteps.
/// snapshot m holds the field just before internal step m (snapshot 0 is the
/// zero initial state). A decimation factor > 1 stores every k-th snapshot;
/// reconstruct() linearly interpolates the rest.
struct WavefieldHistory {
  int nx = 0, nz = 0;
  int n_steps = 0;    // number of internal update steps in the shot
  int decimation = 1;
  double dt_internal = 0.0;
  std::vector<std::vector<double>> snapshots;

  std::vector<double> reconstruct(int step) const {
    const int k = decimation;
    const int j = step / k;
    if (step % k == 0 || j + 1 >= int(snapshots.size())) {
      return snapshots[std::min<std::size_t>(j, snapshots.size() - 1)];
    }
    const double frac = double(step % k) / k;
    std::vector<double> out(snapshots[j].size());
    const auto& a = snapshots[j];
    const auto& b = snapshots[j + 1];
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (1.0 - frac) * a[i] + frac * b[i];
    return out;
  }
};

// ---------------------------------------------------------------------------
// Timestep selection

/// 2D second-order FDTD stability limit: cfl_safety * dx / (c_max * sqrt(2)).
inline double cfl_timestep(const SosMap& map, double cfl_safety) {
  const double c_max = map.max_value();
  return cfl_safety * map.grid.dx / (c_max * std::sqrt(2.0));
}

/// Internal steps per output sample: smallest integer k with dt_out/k within
/// the CFL limit.
inline int steps_per_sample(const SosMap& map, const AcquisitionConfig& cfg) {
  const double dt_max = cfl_timestep(map, cfg.cfl_safety);
  return std::max(1, int(std::ceil(cfg.dt_out() / dt_max - 1e-12)));
}

// ---------------------------------------------------------------------------
// Band-limited decimation. Low-pass FIR (windowed sinc, cutoff 0.45*fs,
// zero-phase) at the internal rate, then every k-th sample. The kernel is
// symmetric, so the transpose is zero-stuffing followed by the same
// convolution; adjoint code relies on this.

inline std::vector<double> decimation_kernel(int k) {
  if (k <= 1) return {1.0};
  const int half = 4 * k;
  std::vector<double> h(2 * half + 1);
  const double fc = 0.45 / k;  // cycles per internal sample
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    double v;
    if (i == 0) {
      v = 2.0 * fc;
    } else {
      v = std::sin(2.0 * std::numbers::pi * fc * i) / (std::numbers::pi * i);
    }
    // Hamming window
    v *= 0.54 + 0.46 * std::cos(std::numbers::pi * i / half);
    h[i + half] = v;
    sum += v;
  }
  for (auto& v : h) v /= sum;  // unit DC gain
  return h;
}

/// x: internal-rate trace (length n_int); returns nt_out output samples taken
/// at indices j*k after zero-padded convolution with the kernel.
inline std::vector<double> decimate_trace(const std::vector<double>& x, int k,
                                          int nt_out,
                                          const std::vector<double>& kernel) {
  std::vector<double> y(nt_out, 0.0);
  const int half = int(kernel.size()) / 2;
  const int n = int(x.size());
  for (int j = 0; j < nt_out; ++j) {
    const int m = j * k;
    double acc = 0.0;
    for (int i = -half; i <= half; ++i) {
      const int idx = m + i;
      if (idx >= 0 && idx < n) acc += kernel[i + half] * x[idx];
    }
    y[j] = acc;
  }
  return y;
}

/// Exact transpose of decimate_trace: scatters output-rate values back to the
/// internal rate.
inline std::vector<double> decimate_transpose(const std::vector<double>& g_out,
                                              int k, int n_int,
                                              const std::vector<double>& kernel) {
  std::vector<double> g(n_int, 0.0);
  const int half = int(kernel.size()) / 2;
  for (int j = 0; j < int(g_out.size()); ++j) {
    const int m = j * k;
    for (int i = -half; i <= half; ++i) {
      const int idx = m + i;
      if (idx >= 0 && idx < n_int) g[idx] += kernel[i + half] * g_out[j];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Solver internals shared by the forward and adjoint passes.

namespace detail {

/// Cerjan-style sponge weights, d(i) = d0*(i/L)^2 counted outward from the
/// sponge's inner edge; w = exp(-d/k) applied to both wavefield arrays per
/// internal step, so the damping rate per unit time is independent of the
/// internal refinement k.
inline std::vector<double> sponge_weights(const Grid2D& g, int cells,
                                          double d0, int k) {
  d0 /= k;
  std::vector<double> w(g.size(), 1.0);
  for (int iz = 0; iz < g.nz; ++iz) {
    for (int ix = 0; ix < g.nx; ++ix) {
      const int edge =
          std::min(std::min(ix, g.nx - 1 - ix), std::min(iz, g.nz - 1 - iz));
      if (edge < cells) {
        const double depth = double(cells - edge) / cells;
        w[g.index(ix, iz)] = std::exp(-d0 * depth * depth);
      }
    }
  }
  return w;
}

/// True for cells inside the sponge layer (gradient is masked there).
inline std::vector<std::uint8_t> sponge_mask(const Grid2D& g, int cells) {
  std::vector<std::uint8_t> m(g.size(), 0);
  for (int iz = 0; iz < g.nz; ++iz)
    for (int ix = 0; ix < g.nx; ++ix) {
      const int edge =
          std::min(std::min(ix, g.nx - 1 - ix), std::min(iz, g.nz - 1 - iz));
      if (edge < cells) m[g.index(ix, iz)] = 1;
    }
  return m;
}

/// Unscaled 5-point (or 9-point 4th-order) Laplacian with zero Dirichlet
/// edges; out must be pre-sized and is fully overwritten. Symmetric as an
/// operator on interior nodes.
inline void laplacian(const std::vector<double>& p, const Grid2D& g,
                      bool fourth_order, std::vector<double>& out) {
  const int nx = g.nx, nz = g.nz;
  std::fill(out.begin(), out.end(), 0.0);
  if (!fourth_order) {
    for (int iz = 1; iz < nz - 1; ++iz) {
      const std::size_t row = std::size_t(iz) * nx;
      for (int ix = 1; ix < nx - 1; ++ix) {
        const std::size_t i = row + ix;
        out[i] = p[i - 1] + p[i + 1] + p[i - nx] + p[i + nx] - 4.0 * p[i];
      }
    }
  } else {
    // 4th-order: (-1/12, 4/3, -5/2, 4/3, -1/12) per axis
    for (int iz = 2; iz < nz - 2; ++iz) {
      const std::size_t row = std::size_t(iz) * nx;
      for (int ix = 2; ix < nx - 2; ++ix) {
        const std::size_t i = row + ix;
        out[i] = (-p[i - 2] + 16.0 * p[i - 1] - 30.0 * p[i] + 16.0 * p[i + 1] -
                  p[i + 2]) /
                     12.0 +
                 (-p[i - 2 * std::size_t(nx)] + 16.0 * p[i - nx] -
                  30.0 * p[i] + 16.0 * p[i + nx] - p[i + 2 * std::size_t(nx)]) /
                     12.0;
      }
    }
    // one-cell border falls back to 2nd order
    for (int iz = 1; iz < nz - 1; ++iz)
      for (int ix : {1, nx - 2}) {
        const std::size_t i = std::size_t(iz) * nx + ix;
        out[i] = p[i - 1] + p[i + 1] + p[i - nx] + p[i + nx] - 4.0 * p[i];
      }
    for (int iz : {1, nz - 2})
      for (int ix = 1; ix < nx - 1; ++ix) {
        const std::size_t i = std::size_t(iz) * nx + ix;
        out[i] = p[i - 1] + p[i + 1] + p[i - nx] + p[i + nx] - 4.0 * p[i];
      }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// One transmit event: leapfrog FDTD of the constant-density acoustic wave
/// equation, additive point source at the transmit element's grid node,
/// recording at every element node, band-limited decimation to the output
/// rate. Optionally retains the wavefield history for the adjoint pass.
///
/// Scheme, per internal step n (v = (c*dt/dx)^2 per cell, w = sponge weight):
///   t      = 2*p - p_old + v .* lap(p);  t[src] += wav[n]
///   p_old  = w .* p
///   p      = w .* t
/// The receiver trace samples p after the update (sample 0 is the zero
/// initial state).
struct ShotResult {
  std::vector<double> traces;  // nt_out x n_rx, rx fastest
  std::optional<WavefieldHistory> history;
};

inline ShotResult forward_shot(const SosMap& map, const RingArray& array,
                               int tx, const Wavelet& wavelet,
                               const AcquisitionConfig& cfg,
                               bool keep_history = false,
                               int history_decimation = 1) {
  cfg.validate();
  if (tx < 0 || tx >= array.n_elem)
    throw ConfigError("transmit index out of range");
  const Grid2D& g = map.grid;
  const int k = steps_per_sample(map, cfg);
  const double dt = cfg.dt_out() / k;
  const int n_steps = (cfg.nt_out - 1) * k;
  const Wavelet wav = resample_wavelet(wavelet, dt);

  const auto nodes = array.nodes(g);
  const auto [sx, sz] = nodes[tx];
  const std::size_t src = g.index(sx, sz);

  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double r = map.values[i] * dt / g.dx;
    v[i] = r * r;
  }
  const auto w =
      detail::sponge_weights(g, cfg.sponge_cells, cfg.sponge_strength, k);

  std::vector<double> p(g.size(), 0.0), p_old(g.size(), 0.0), lap(g.size());
  const int n_rx = array.n_elem;
  // internal-rate traces, sample m = field after m steps
  std::vector<std::vector<double>> rec(n_rx, std::vector<double>(n_steps + 1, 0.0));

  ShotResult result;
  if (keep_history) {
    result.history = WavefieldHistory{};
    result.history->nx = g.nx;
    result.history->nz = g.nz;
    result.history->n_steps = n_steps;
    result.history->decimation = history_decimation;
    result.history->dt_internal = dt;
    result.history->snapshots.reserve(n_steps / history_decimation + 2);
  }

  for (int n = 0; n < n_steps; ++n) {
    if (keep_history && n % history_decimation == 0)
      result.history->snapshots.push_back(p);
    detail::laplacian(p, g, cfg.fourth_order, lap);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double t = 2.0 * p[i] - p_old[i] + v[i] * lap[i];
      p_old[i] = w[i] * p[i];
      p[i] = w[i] * t;
    }
    // dt^2 source scaling keeps the injected energy independent of the
    // internal refinement k; amplitudes are normalized to the output rate.
    if (n < int(wav.samples.size()))
      p[src] += w[src] * wav.samples[n] / double(k * k);
    for (int r = 0; r < n_rx; ++r) {
      const auto [rx_i, rz_i] = nodes[r];
      rec[r][n + 1] = p[g.index(rx_i, rz_i)];
    }
    if ((n & 63) == 0) {
      double peak = 0.0;
      for (double x : p) peak = std::max(peak, std::abs(x));
      if (!(peak < 1e12))
        throw NumericalError("wavefield blew up at step " + std::to_string(n) +
                             " (CFL violation or corrupt map)");
    }
  }

  const auto kernel = decimation_kernel(k);
  result.traces.assign(std::size_t(cfg.nt_out) * n_rx, 0.0);
  for (int r = 0; r < n_rx; ++r) {
    const auto out = decimate_trace(rec[r], k, cfg.nt_out, kernel);
    for (int t = 0; t < cfg.nt_out; ++t)
      result.traces[std::size_t(t) * n_rx + r] = out[t];
  }
  for (double x : result.traces)
    if (!std::isfinite(x)) throw NumericalError("non-finite trace sample");
  return result;
}

/// Full-matrix capture: every element transmits in turn, all elements
/// receive. Shots are independent and run in parallel; each writes a
/// disjoint (tx) slab of the cube, so results do not depend on thread count.
inline RfCube forward_full_matrix(const SosMap& map, const RingArray& array,
                                  const Wavelet& wavelet,
                                  const AcquisitionConfig& cfg) {
  cfg.validate();
  if (cfg.n_tx != array.n_elem || cfg.n_rx != array.n_elem)
    throw ShapeError("full-matrix capture requires n_tx = n_rx = n_elem");
  RfCube cube(cfg.nt_out, cfg.n_tx, cfg.n_rx, cfg.dt_out(), cfg.f0);
  parallel_for(0, std::size_t(cfg.n_tx), [&](std::size_t s) {
    ShotResult shot;
    try {
      shot = forward_shot(map, array, int(s), wavelet, cfg);
    } catch (const Error& e) {
      throw NumericalError("shot " + std::to_string(s) + ": " + e.what());
    }
    for (int t = 0; t < cfg.nt_out; ++t)
      for (int r = 0; r < cfg.n_rx; ++r)
        cube.at(t, int(s), r) = shot.traces[std::size_t(t) * cfg.n_rx + r];
  });
  return cube;
}

// ---------------------------------------------------------------------------
// .rfc file format: "UCTRFC1\0", u32 nt, u32 n_tx, u32 n_rx, f32 dt_out,
// f32 f0, then nt*n_tx*n_rx f32 values, [t][tx][rx] with rx fastest.

inline constexpr char kRfcMagic[8] = {'U', 'C', 'T', 'R', 'F', 'C', '1', '\0'};

inline void save_rfc(const RfCube& cube, const std::string& path) {
  detail::require_little_endian();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_magic(os, kRfcMagic);
  write_le<std::uint32_t>(os, std::uint32_t(cube.nt));
  write_le<std::uint32_t>(os, std::uint32_t(cube.n_tx));
  write_le<std::uint32_t>(os, std::uint32_t(cube.n_rx));
  write_le<float>(os, float(cube.dt_out));
  write_le<float>(os, float(cube.f0));
  for (double v : cube.data) write_le<float>(os, float(v));
  if (!os) throw IoError("write failed: " + path);
}

inline RfCube load_rfc(const std::string& path) {
  detail::require_little_endian();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  expect_magic(is, kRfcMagic, path);
  const auto nt = read_le<std::uint32_t>(is);
  const auto ntx = read_le<std::uint32_t>(is);
  const auto nrx = read_le<std::uint32_t>(is);
  const auto dt = read_le<float>(is);
  const auto f0 = read_le<float>(is);
  RfCube cube{int(nt), int(ntx), int(nrx), double(dt), double(f0)};
  for (auto& v : cube.data) v = double(read_le<float>(is));
  return cube;
}

}  // namespace ucts

#endif  // UCTS_WAVE_HPP
