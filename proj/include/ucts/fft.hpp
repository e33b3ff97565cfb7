// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_FFT_HPP
#define UCTS_FFT_HPP

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "ucts/common.hpp"

namespace ucts {

/// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw ShapeError("fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang =
        2.0 * std::numbers::pi / double(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const auto u = a[i + j];
        const auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= double(n);
}

/// Discrete analytic signal of a real trace (Hilbert transform through the
/// FFT): negative frequencies zeroed, positive doubled. Input is zero-padded
/// to the next power of two; the returned signal is truncated back.
inline std::vector<std::complex<double>> analytic_signal(
    const std::vector<double>& x) {
  std::size_t n = 1;
  while (n < x.size()) n <<= 1;
  std::vector<std::complex<double>> a(n, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = x[i];
  fft_pow2(a, false);
  for (std::size_t k = 1; k < n / 2; ++k) a[k] *= 2.0;
  for (std::size_t k = n / 2 + 1; k < n; ++k) a[k] = 0.0;
  fft_pow2(a, true);
  a.resize(x.size());
  return a;
}

}  // namespace ucts

#endif  // UCTS_FFT_HPP
