// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_COMMON_HPP
#define UCTS_COMMON_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ucts {

/// Base class for all library errors; `what()` is a one-line message.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerical blow-up (CFL violation, corrupt map, NaN loss).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Little-endian binary I/O helpers. The on-disk formats are all little-endian;
// these assume a little-endian host (checked once at stream open).

namespace detail {

inline void require_little_endian() {
  const std::uint32_t probe = 0x01020304u;
  std::uint8_t first;
  std::memcpy(&first, &probe, 1);
  if (first != 0x04) throw IoError("big-endian hosts are not supported");
}

}  // namespace detail

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  static_assert(std::is_trivially_copyable_v<T>);
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw IoError("unexpected end of file");
  return value;
}

inline void write_magic(std::ostream& os, const char magic[8]) {
  os.write(magic, 8);
}

inline void expect_magic(std::istream& is, const char magic[8],
                         const std::string& path) {
  char buf[8];
  is.read(buf, 8);
  if (!is || std::memcmp(buf, magic, 8) != 0)
    throw IoError("bad magic in file: " + path);
}

// ---------------------------------------------------------------------------

/// Runs f(i) for i in [begin, end) across up to `hardware_concurrency` threads.
/// Work is split into contiguous chunks so each index is processed exactly
/// once; results must be written to disjoint locations by the caller.
inline void parallel_for(std::size_t begin, std::size_t end,
                         const std::function<void(std::size_t)>& f) {
  const std::size_t n = end > begin ? end - begin : 0;
  if (n == 0) return;
  std::size_t n_threads = std::thread::hardware_concurrency();
  if (n_threads == 0) n_threads = 1;
  if (n_threads > n) n_threads = n;
  if (n_threads == 1) {
    for (std::size_t i = begin; i < end; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  std::exception_ptr first_error;
  std::mutex err_mutex;
  const std::size_t chunk = (n + n_threads - 1) / n_threads;
  for (std::size_t t = 0; t < n_threads; ++t) {
    const std::size_t lo = begin + t * chunk;
    const std::size_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ucts

#endif  // UCTS_COMMON_HPP
