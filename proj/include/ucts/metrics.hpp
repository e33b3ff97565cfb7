// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_METRICS_HPP
#define UCTS_METRICS_HPP

// Image-fidelity metrics for reconstructed SOS maps: PSNR (pixel accuracy in
// dB) and SSIM (windowed structural similarity). Both operate on the raw m/s
// values; the data range defaults to max(ref) - min(ref) per pair, since PSNR
// is meaningless without a stated range.

#include <cmath>
#include <vector>

#include "ucts/common.hpp"
#include "ucts/geometry.hpp"

namespace ucts {

/// Hard ceiling returned for (near-)identical images, where RMSE -> 0 sends
/// the logarithm to infinity.
inline constexpr double kPsnrCapDb = 99.0;

/// PSNR = 20 log10(data_range / RMSE), capped at 99 dB. `data_range <= 0`
/// requests the default range max(ref) - min(ref); a reference with zero
/// spread and no explicit range is an error.
inline double psnr(const std::vector<double>& pred,
                   const std::vector<double>& ref, double data_range = -1.0) {
  if (pred.size() != ref.size() || pred.empty())
    throw ShapeError("psnr: image sizes differ or are empty");
  double range = data_range;
  if (range <= 0.0) {
    double lo = ref[0], hi = ref[0];
    for (double v : ref) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    range = hi - lo;
  }
  if (!(range > 0.0))
    throw ConfigError("psnr: data range must be positive (constant reference "
                      "needs an explicit range)");
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - ref[i];
    sq += d * d;
  }
  const double rmse = std::sqrt(sq / double(pred.size()));
  if (rmse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 20.0 * std::log10(range / rmse));
}

inline double psnr(const SosMap& pred, const SosMap& ref,
                   double data_range = -1.0) {
  if (pred.grid.nx != ref.grid.nx || pred.grid.nz != ref.grid.nz)
    throw ShapeError("psnr: map grids differ");
  return psnr(pred.values, ref.values, data_range);
}

namespace detail {

/// 11-tap Gaussian window, sigma 1.5, normalized to unit sum (the standard
/// SSIM window).
inline const std::vector<double>& ssim_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(11);
    double s = 0.0;
    for (int i = 0; i < 11; ++i) {
      const double d = i - 5;
      v[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      s += v[i];
    }
    for (double& x : v) x /= s;
    return v;
  }();
  return w;
}

}  // namespace detail

/// Mean SSIM over all valid (fully interior) 11x11 Gaussian windows,
/// C1 = (0.01 R)^2, C2 = (0.03 R)^2. Images smaller than the window are
/// rejected. Row-major images of width `nx`, height `nz`.
inline double ssim(const std::vector<double>& pred,
                   const std::vector<double>& ref, int nx, int nz,
                   double data_range = -1.0) {
  if (pred.size() != ref.size() ||
      pred.size() != std::size_t(nx) * std::size_t(nz) || nx <= 0 || nz <= 0)
    throw ShapeError("ssim: image sizes inconsistent");
  constexpr int K = 11, H = K / 2;
  if (nx < K || nz < K)
    throw ShapeError("ssim: image smaller than the 11x11 window");
  double range = data_range;
  if (range <= 0.0) {
    double lo = ref[0], hi = ref[0];
    for (double v : ref) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    range = hi - lo;
  }
  if (!(range > 0.0))
    throw ConfigError("ssim: data range must be positive (constant reference "
                      "needs an explicit range)");
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  const auto& w = detail::ssim_window();

  double total = 0.0;
  std::size_t count = 0;
  for (int cz = H; cz < nz - H; ++cz)
    for (int cx = H; cx < nx - H; ++cx) {
      double mx = 0.0, my = 0.0;
      for (int j = -H; j <= H; ++j)
        for (int i = -H; i <= H; ++i) {
          const double wij = w[std::size_t(j + H)] * w[std::size_t(i + H)];
          const std::size_t idx = std::size_t(cz + j) * nx + (cx + i);
          mx += wij * pred[idx];
          my += wij * ref[idx];
        }
      double vx = 0.0, vy = 0.0, cov = 0.0;
      for (int j = -H; j <= H; ++j)
        for (int i = -H; i <= H; ++i) {
          const double wij = w[std::size_t(j + H)] * w[std::size_t(i + H)];
          const std::size_t idx = std::size_t(cz + j) * nx + (cx + i);
          const double dx = pred[idx] - mx;
          const double dy = ref[idx] - my;
          vx += wij * dx * dx;
          vy += wij * dy * dy;
          cov += wij * dx * dy;
        }
      total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / double(count);
}

inline double ssim(const SosMap& pred, const SosMap& ref,
                   double data_range = -1.0) {
  if (pred.grid.nx != ref.grid.nx || pred.grid.nz != ref.grid.nz)
    throw ShapeError("ssim: map grids differ");
  return ssim(pred.values, ref.values, pred.grid.nx, pred.grid.nz, data_range);
}

}  // namespace ucts

#endif  // UCTS_METRICS_HPP
