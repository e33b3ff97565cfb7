// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ucts/das.hpp"
#include "ucts/wave.hpp"

using namespace ucts;

namespace {

struct Scene {
  Grid2D grid{64, 64, 1.0e-3};
  AcquisitionConfig cfg;
  RingArray array;
  Wavelet wavelet;

  Scene() {
    cfg.n_tx = cfg.n_rx = 16;
    array = make_ring_array(16, 0.048, grid);
    wavelet = ricker_wavelet(cfg.f0, cfg.dt_out(), cfg.nt_out);
  }

  /// Simulate a map and subtract the homogeneous water reference scan, as a
  /// calibrated ring system would; beamforming then sees only echoes.
  RfCube scattered(const SosMap& map) const {
    RfCube raw = forward_full_matrix(map, array, wavelet, cfg);
    RfCube ref =
        forward_full_matrix(SosMap(grid, 1500.0), array, wavelet, cfg);
    return subtract_reference(raw, ref);
  }

  /// Map with a +5% disc scatterer at grid cell (cx, cz).
  SosMap scatterer_map(int cx, int cz, double radius_m = 2.5e-3) const {
    SosMap map(grid, 1500.0);
    for (int iz = 0; iz < grid.nz; ++iz)
      for (int ix = 0; ix < grid.nx; ++ix)
        if (std::hypot((ix - cx) * grid.dx, (iz - cz) * grid.dx) <= radius_m)
          map.at(ix, iz) = 1575.0;
    return map;
  }

  std::pair<int, int> argmax_inside(const DasImage& img) const {
    // search inside the ring only; boundary cells see partial apertures
    double best = -1.0;
    std::pair<int, int> at{0, 0};
    for (int iz = 0; iz < grid.nz; ++iz)
      for (int ix = 0; ix < grid.nx; ++ix) {
        const double r = std::hypot(grid.x_of(ix) - array.center_x,
                                    grid.z_of(iz) - array.center_z);
        if (r > array.radius * 0.8) continue;
        if (img.values[grid.index(ix, iz)] > best) {
          best = img.values[grid.index(ix, iz)];
          at = {ix, iz};
        }
      }
    return at;
  }
};

}  // namespace

TEST_CASE("zero cube beamforms to an all-zero image") {
  Scene sc;
  RfCube cube(sc.cfg.nt_out, 16, 16, sc.cfg.dt_out(), sc.cfg.f0);
  DasImage img = das_reconstruct(cube, sc.array, 1500.0, sc.grid);
  for (double v : img.values) CHECK(v == 0.0);
}

TEST_CASE("point scatterer focuses near its true position") {
  Scene sc;
  const int cx = 36, cz = 28;
  RfCube cube = sc.scattered(sc.scatterer_map(cx, cz));
  DasImage img = das_reconstruct(cube, sc.array, 1500.0, sc.grid);
  auto [ax, az] = sc.argmax_inside(img);
  CHECK(std::abs(ax - cx) <= 2);
  CHECK(std::abs(az - cz) <= 2);
}

TEST_CASE("mismatched assumed speed displaces and weakens the focus") {
  Scene sc;
  const int cx = 36, cz = 28;
  RfCube cube = sc.scattered(sc.scatterer_map(cx, cz));
  DasImage matched = das_reconstruct(cube, sc.array, 1500.0, sc.grid);
  DasImage off = das_reconstruct(cube, sc.array, 1650.0, sc.grid);
  auto [mx, mz] = sc.argmax_inside(matched);
  CHECK(off.values[sc.grid.index(cx, cz)] <
        matched.values[sc.grid.index(mx, mz)]);
}

TEST_CASE("shifting the scatterer shifts the focus") {
  Scene sc;
  RfCube ca = sc.scattered(sc.scatterer_map(30, 30));
  RfCube cb = sc.scattered(sc.scatterer_map(34, 30));  // 4 cells right
  auto [ax, az] = sc.argmax_inside(das_reconstruct(ca, sc.array, 1500.0, sc.grid));
  auto [bx, bz] = sc.argmax_inside(das_reconstruct(cb, sc.array, 1500.0, sc.grid));
  CHECK(std::abs((bx - ax) - 4) <= 2);
  CHECK(std::abs(bz - az) <= 2);
}

TEST_CASE("peak-to-background ratio is maximal at the true speed") {
  Scene sc;
  // off-center: a centered scatterer sees near-equal delays from every pair,
  // which makes the image insensitive to the assumed speed
  const int cx = 38, cz = 32;
  RfCube cube = sc.scattered(sc.scatterer_map(cx, cz));
  double best_ratio = -1.0;
  double best_scale = 0.0;
  for (double scale : {0.9, 0.95, 1.0, 1.05, 1.1}) {
    DasImage img = das_reconstruct(cube, sc.array, 1500.0 * scale, sc.grid);
    // peak near the scatterer vs mean far from it (still inside the ring)
    double peak = 0.0, bg = 0.0;
    int nbg = 0;
    for (int iz = 0; iz < 64; ++iz)
      for (int ix = 0; ix < 64; ++ix) {
        const double r = std::hypot(sc.grid.x_of(ix) - sc.array.center_x,
                                    sc.grid.z_of(iz) - sc.array.center_z);
        if (r > sc.array.radius * 0.8) continue;
        const double d = std::hypot(double(ix - cx), double(iz - cz));
        const double v = img.values[sc.grid.index(ix, iz)];
        if (d <= 3)
          peak = std::max(peak, v);
        else if (d >= 10) {
          bg += v;
          ++nbg;
        }
      }
    const double ratio = peak / (bg / nbg);
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best_scale = scale;
    }
  }
  CHECK(best_scale == 1.0);
}

TEST_CASE("image values are finite and non-negative") {
  Scene sc;
  RfCube cube = sc.scattered(sc.scatterer_map(40, 24));
  DasImage img = das_reconstruct(cube, sc.array, 1500.0, sc.grid);
  for (double v : img.values) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
}

TEST_CASE("out-of-range assumed speed is rejected") {
  Scene sc;
  RfCube cube(sc.cfg.nt_out, 16, 16, sc.cfg.dt_out(), sc.cfg.f0);
  CHECK_THROWS_AS(das_reconstruct(cube, sc.array, 500.0, sc.grid), ConfigError);
}
