// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_PHANTOM_HPP
#define UCTS_PHANTOM_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "ucts/geometry.hpp"

namespace ucts {

/// Conventional water bath speed at room temperature.
inline constexpr double kCouplingSpeed = 1500.0;  // m/s

/// Tissue speed as a closed range; point values have lo == hi.
struct TissueRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Parameters for procedural phantom generation. The tissue table defaults
/// to the empirical forearm values; the "forearm_shifted" preset perturbs
/// every entry by up to +/-3% to emulate a domain shift.
struct PhantomSpec {
  std::uint64_t seed = 0;
  std::string preset = "forearm";
  std::map<std::string, TissueRange> tissues = default_tissue_table();

  static std::map<std::string, TissueRange> default_tissue_table() {
    return {
        {"bone", {2900.0, 2900.0}},   {"marrow", {1450.0, 1450.0}},
        {"blood", {1584.0, 1584.0}},  {"tendon", {1670.0, 1670.0}},
        {"skin", {1580.0, 1580.0}},   {"fat", {1430.0, 1478.0}},
        {"muscle", {1540.0, 1630.0}},
    };
  }
};

namespace detail {

inline void fill_disc(SosMap& map, double cx, double cz, double r, double v) {
  const Grid2D& g = map.grid;
  for (int iz = 0; iz < g.nz; ++iz)
    for (int ix = 0; ix < g.nx; ++ix) {
      const double dx = g.x_of(ix) - cx;
      const double dz = g.z_of(iz) - cz;
      if (dx * dx + dz * dz <= r * r) map.at(ix, iz) = v;
    }
}

inline void fill_ellipse(SosMap& map, double cx, double cz, double ra,
                         double rb, double angle, double v) {
  const Grid2D& g = map.grid;
  const double c = std::cos(angle), s = std::sin(angle);
  for (int iz = 0; iz < g.nz; ++iz)
    for (int ix = 0; ix < g.nx; ++ix) {
      const double dx = g.x_of(ix) - cx;
      const double dz = g.z_of(iz) - cz;
      const double u = c * dx + s * dz;
      const double w = -s * dx + c * dz;
      if ((u * u) / (ra * ra) + (w * w) / (rb * rb) <= 1.0)
        map.at(ix, iz) = v;
    }
}

}  // namespace detail

/// Procedurally generates a forearm-like cross section: skin annulus over a
/// fat layer over muscle, two bone discs with marrow cores, a few tendons
/// and vessels, all embedded in the coupling medium. Deterministic for a
/// fixed spec.
inline SosMap generate_phantom(const PhantomSpec& spec, const Grid2D& grid) {
  const bool shifted = spec.preset == "forearm_shifted";
  if (spec.preset != "forearm" && !shifted)
    throw ConfigError("unknown phantom preset: " + spec.preset);

  std::mt19937_64 rng(spec.seed);
  auto uniform = [&rng](double lo, double hi) {
    if (lo == hi) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  // One speed draw per contiguous region; shifted preset perturbs the draw.
  auto speed = [&](const std::string& name) {
    auto it = spec.tissues.find(name);
    if (it == spec.tissues.end()) throw ConfigError("missing tissue: " + name);
    double v = uniform(it->second.lo, it->second.hi);
    if (shifted) v *= 1.0 + uniform(-0.03, 0.03);
    return v;
  };

  SosMap map(grid, kCouplingSpeed);
  const double half_x = (grid.nx - 1) * grid.dx / 2.0;
  const double half_z = (grid.nz - 1) * grid.dx / 2.0;
  const double cx0 = half_x, cz0 = half_z;

  // Body outline: a disc filling a bit more than half the grid, with
  // per-seed jitter in size and position.
  const double body_r = std::min(half_x, half_z) * uniform(0.42, 0.52);
  const double body_cx = cx0 + body_r * uniform(-0.08, 0.08);
  const double body_cz = cz0 + body_r * uniform(-0.08, 0.08);

  const double skin_t = std::max(2.0 * grid.dx, body_r * 0.04);
  const double fat_t = body_r * uniform(0.08, 0.14);

  detail::fill_disc(map, body_cx, body_cz, body_r, speed("skin"));
  detail::fill_disc(map, body_cx, body_cz, body_r - skin_t, speed("fat"));
  detail::fill_disc(map, body_cx, body_cz, body_r - skin_t - fat_t,
                    speed("muscle"));

  // Two bones (radius/ulna) with marrow cores, placed on either side of
  // the body center.
  const double bone_gap = body_r * uniform(0.38, 0.5);
  const double bone_angle = uniform(0.0, 2.0 * std::numbers::pi);
  for (int b = 0; b < 2; ++b) {
    const double sign = b == 0 ? 1.0 : -1.0;
    const double br = body_r * uniform(0.14, 0.2);
    const double bx = body_cx + sign * bone_gap * std::cos(bone_angle) +
                      body_r * uniform(-0.04, 0.04);
    const double bz = body_cz + sign * bone_gap * std::sin(bone_angle) +
                      body_r * uniform(-0.04, 0.04);
    detail::fill_disc(map, bx, bz, br, speed("bone"));
    detail::fill_disc(map, bx, bz, br * uniform(0.4, 0.55), speed("marrow"));
  }

  // 1-3 tendons (ellipses), 0-3 vessels (small discs), inside the muscle.
  const int n_tendon = 1 + int(rng() % 3);
  for (int t = 0; t < n_tendon; ++t) {
    const double ang = uniform(0.0, 2.0 * std::numbers::pi);
    const double rad = body_r * uniform(0.45, 0.7);
    detail::fill_ellipse(map, body_cx + rad * std::cos(ang),
                         body_cz + rad * std::sin(ang),
                         body_r * uniform(0.06, 0.12),
                         body_r * uniform(0.03, 0.06),
                         uniform(0.0, std::numbers::pi), speed("tendon"));
  }
  const int n_vessel = int(rng() % 4);
  for (int v = 0; v < n_vessel; ++v) {
    const double ang = uniform(0.0, 2.0 * std::numbers::pi);
    const double rad = body_r * uniform(0.3, 0.65);
    detail::fill_disc(map, body_cx + rad * std::cos(ang),
                      body_cz + rad * std::sin(ang),
                      body_r * uniform(0.025, 0.05), speed("blood"));
  }
  return map;
}

}  // namespace ucts

#endif  // UCTS_PHANTOM_HPP
