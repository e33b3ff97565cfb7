// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_GEOMETRY_HPP
#define UCTS_GEOMETRY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "ucts/common.hpp"

namespace ucts {

/// Widest absorbing layer the solver will use; narrower grids get the widest
/// layer that still leaves a 4-cell margin to the ring array.
inline constexpr int kMaxSpongeCells = 20;
inline constexpr int kMinSpongeCells = 1;

/// Uniform 2D grid, isotropic spacing. z is the slow (row) index everywhere.
struct Grid2D {
  int nx = 0;
  int nz = 0;
  double dx = 0.0;  // meters

  Grid2D() = default;
  Grid2D(int nx_, int nz_, double dx_) : nx(nx_), nz(nz_), dx(dx_) {
    if (nx < 16 || nz < 16) throw GeometryError("grid must be at least 16x16");
    if (!(dx > 0.0)) throw GeometryError("grid spacing must be positive");
  }

  std::size_t size() const { return std::size_t(nx) * std::size_t(nz); }
  double extent_x() const { return nx * dx; }
  double extent_z() const { return nz * dx; }
  std::size_t index(int ix, int iz) const {
    return std::size_t(iz) * nx + ix;
  }
  /// Grid coordinates of node (ix, iz), origin at the grid corner.
  double x_of(int ix) const { return ix * dx; }
  double z_of(int iz) const { return iz * dx; }

  bool operator==(const Grid2D&) const = default;
};

/// Sound-speed map c(x,z) in m/s on a Grid2D, row-major with z slow.
struct SosMap {
  Grid2D grid;
  std::vector<double> values;  // m/s

  SosMap() = default;
  SosMap(Grid2D g, double fill) : grid(g), values(g.size(), fill) {}
  SosMap(Grid2D g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size())
      throw ShapeError("SosMap value count does not match grid");
  }

  double& at(int ix, int iz) { return values[grid.index(ix, iz)]; }
  double at(int ix, int iz) const { return values[grid.index(ix, iz)]; }

  double max_value() const {
    return *std::max_element(values.begin(), values.end());
  }
  double min_value() const {
    return *std::min_element(values.begin(), values.end());
  }
};

/// Ring-array transducer geometry. Element 0 sits at angle 0 (positive x
/// from the center), ordering is counterclockwise.
struct RingArray {
  int n_elem = 0;
  double radius = 0.0;          // meters
  double center_x = 0.0;        // meters
  double center_z = 0.0;        // meters
  std::vector<std::pair<double, double>> positions;  // (x, z) meters

  /// Nearest grid node per element; sources and receivers snap here.
  std::vector<std::pair<int, int>> nodes(const Grid2D& grid) const {
    std::vector<std::pair<int, int>> out;
    out.reserve(positions.size());
    for (const auto& [x, z] : positions) {
      int ix = int(std::lround(x / grid.dx));
      int iz = int(std::lround(z / grid.dx));
      ix = std::clamp(ix, 0, grid.nx - 1);
      iz = std::clamp(iz, 0, grid.nz - 1);
      out.emplace_back(ix, iz);
    }
    return out;
  }
};

/// Widest sponge that keeps the ring's elements at least 4 cells inside the
/// absorbing boundary; kMinSpongeCells even when the grid is tight, so the
/// caller must still check the geometry via make_ring_array.
inline int auto_sponge_cells(const Grid2D& grid, double diameter) {
  const double half = std::min(grid.nx - 1, grid.nz - 1) * grid.dx / 2.0;
  const double margin = half - diameter / 2.0;
  const int cells = int(std::floor(margin / grid.dx)) - 4;
  return std::clamp(cells, kMinSpongeCells, kMaxSpongeCells);
}

/// Places n_elem elements uniformly on a circle of the given diameter,
/// centered on the grid. Fails if the ring does not keep a 4-cell margin
/// inside the absorbing layer (the widest feasible layer when sponge_cells
/// is negative).
inline RingArray make_ring_array(int n_elem, double diameter,
                                 const Grid2D& grid, int sponge_cells = -1) {
  if (n_elem < 1) throw GeometryError("ring array needs at least one element");
  if (!(diameter > 0.0)) throw GeometryError("ring diameter must be positive");
  if (sponge_cells < 0) sponge_cells = auto_sponge_cells(grid, diameter);
  const double radius = diameter / 2.0;
  const double cx = (grid.nx - 1) * grid.dx / 2.0;
  const double cz = (grid.nz - 1) * grid.dx / 2.0;
  const double margin = (sponge_cells + 4) * grid.dx;
  const double half_x = (grid.nx - 1) * grid.dx / 2.0;
  const double half_z = (grid.nz - 1) * grid.dx / 2.0;
  if (radius + margin > half_x + 1e-12 || radius + margin > half_z + 1e-12)
    throw GeometryError(
        "ring of diameter " + std::to_string(diameter) +
        " m does not fit in the grid with a 4-cell margin beyond the " +
        std::to_string(sponge_cells) + "-cell absorbing layer");

  RingArray arr;
  arr.n_elem = n_elem;
  arr.radius = radius;
  arr.center_x = cx;
  arr.center_z = cz;
  arr.positions.reserve(n_elem);
  for (int i = 0; i < n_elem; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / n_elem;
    arr.positions.emplace_back(cx + radius * std::cos(theta),
                               cz + radius * std::sin(theta));
  }
  return arr;
}

/// Source signature sampled at dt, center frequency f0.
struct Wavelet {
  std::vector<double> samples;
  double dt = 0.0;  // seconds
  double f0 = 0.0;  // Hz
};

/// Ricker pulse (second derivative of a Gaussian), peak delayed by 1.5/f0,
/// normalized to unit peak amplitude. Zero-mean by construction.
inline Wavelet ricker_wavelet(double f0, double dt, int n) {
  if (!(f0 > 0.0) || !(dt > 0.0)) throw ConfigError("f0 and dt must be positive");
  if (dt > 1.0 / (10.0 * f0))
    throw ConfigError("wavelet undersampled: need dt <= 1/(10*f0)");
  if (n < int(4.0 / (f0 * dt)))
    throw ConfigError("wavelet too short to contain its support");
  Wavelet w;
  w.dt = dt;
  w.f0 = f0;
  w.samples.resize(n);
  const double t0 = 1.5 / f0;
  const double pi2f2 = std::numbers::pi * std::numbers::pi * f0 * f0;
  for (int i = 0; i < n; ++i) {
    const double t = i * dt - t0;
    const double a = pi2f2 * t * t;
    w.samples[i] = (1.0 - 2.0 * a) * std::exp(-a);
  }
  return w;
}

/// Linear resampling of a wavelet to a new dt; zero outside the recorded
/// support. Length chosen to cover the original duration.
inline Wavelet resample_wavelet(const Wavelet& w, double new_dt) {
  if (new_dt == w.dt) return w;
  Wavelet out;
  out.dt = new_dt;
  out.f0 = w.f0;
  const double duration = (w.samples.size() - 1) * w.dt;
  const int n = int(std::floor(duration / new_dt)) + 1;
  out.samples.resize(n);
  for (int i = 0; i < n; ++i) {
    const double t = i * new_dt;
    const double s = t / w.dt;
    const int k = int(std::floor(s));
    if (k < 0 || k + 1 >= int(w.samples.size())) {
      out.samples[i] = (k >= 0 && k < int(w.samples.size())) ? w.samples[k] : 0.0;
    } else {
      const double frac = s - k;
      out.samples[i] = (1.0 - frac) * w.samples[k] + frac * w.samples[k + 1];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

enum class AugmentOp { Rot90, Rot180, Rot270, FlipH, FlipV };

inline AugmentOp augment_op_from_name(const std::string& name) {
  if (name == "rot90") return AugmentOp::Rot90;
  if (name == "rot180") return AugmentOp::Rot180;
  if (name == "rot270") return AugmentOp::Rot270;
  if (name == "flip_h") return AugmentOp::FlipH;
  if (name == "flip_v") return AugmentOp::FlipV;
  throw ConfigError("unknown augmentation op: " + name);
}

/// Rotates or flips a map. Rotations require a square grid. Pixels are
/// permuted, never interpolated.
inline SosMap augment(const SosMap& map, AugmentOp op) {
  const Grid2D& g = map.grid;
  const bool rotation =
      op == AugmentOp::Rot90 || op == AugmentOp::Rot180 || op == AugmentOp::Rot270;
  if (rotation && g.nx != g.nz)
    throw GeometryError("rotation requires a square grid");
  SosMap out(g, 0.0);
  const int n = g.nx;
  for (int iz = 0; iz < g.nz; ++iz) {
    for (int ix = 0; ix < g.nx; ++ix) {
      double v = map.at(ix, iz);
      switch (op) {
        case AugmentOp::Rot90:  // (x,z) -> (-z, x), counterclockwise
          out.at(g.nz - 1 - iz, ix) = v;
          break;
        case AugmentOp::Rot180:
          out.at(n - 1 - ix, g.nz - 1 - iz) = v;
          break;
        case AugmentOp::Rot270:
          out.at(iz, n - 1 - ix) = v;
          break;
        case AugmentOp::FlipH:
          out.at(g.nx - 1 - ix, iz) = v;
          break;
        case AugmentOp::FlipV:
          out.at(ix, g.nz - 1 - iz) = v;
          break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// .sos file format: "UCTSOS1\0", u32 nx, u32 nz, f32 dx, then nx*nz f32
// values, z-major row-major, all little-endian.

inline constexpr char kSosMagic[8] = {'U', 'C', 'T', 'S', 'O', 'S', '1', '\0'};

inline void save_sos(const SosMap& map, const std::string& path) {
  detail::require_little_endian();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_magic(os, kSosMagic);
  write_le<std::uint32_t>(os, std::uint32_t(map.grid.nx));
  write_le<std::uint32_t>(os, std::uint32_t(map.grid.nz));
  write_le<float>(os, float(map.grid.dx));
  for (double v : map.values) write_le<float>(os, float(v));
  if (!os) throw IoError("write failed: " + path);
}

inline SosMap load_sos(const std::string& path) {
  detail::require_little_endian();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  expect_magic(is, kSosMagic, path);
  const auto nx = read_le<std::uint32_t>(is);
  const auto nz = read_le<std::uint32_t>(is);
  const auto dx = read_le<float>(is);
  Grid2D grid{int(nx), int(nz), double(dx)};
  std::vector<double> values(grid.size());
  for (auto& v : values) v = double(read_le<float>(is));
  return SosMap(grid, std::move(values));
}

}  // namespace ucts

#endif  // UCTS_GEOMETRY_HPP
