// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_PNG_HPP
#define UCTS_PNG_HPP

// Minimal 8-bit RGB PNG writer (zlib for compression and CRC) and SOS-map
// rendering: linear [lo, hi] -> colormap mapping with endpoint clamping,
// grayscale or a built-in 256-entry RGB table, integer pixel upscaling.

#include <zlib.h>

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ucts/common.hpp"
#include "ucts/geometry.hpp"

namespace ucts {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

enum class Colormap { grayscale, thermal };

/// Built-in 256-entry table: a black-body "thermal" ramp
/// (black -> red -> orange -> yellow -> white), generated deterministically.
inline const std::array<Rgb, 256>& thermal_table() {
  static const std::array<Rgb, 256> table = [] {
    std::array<Rgb, 256> t{};
    for (int i = 0; i < 256; ++i) {
      const double x = i / 255.0;
      auto ramp = [](double v) {
        return std::uint8_t(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
      };
      t[i] = {ramp(3.0 * x), ramp(3.0 * x - 1.0), ramp(3.0 * x - 2.0)};
    }
    return t;
  }();
  return table;
}

struct RenderSpec {
  double lo = 1400.0;  // m/s mapped to colormap[0]
  double hi = 2900.0;  // m/s mapped to colormap[255]
  Colormap colormap = Colormap::grayscale;
  int pixel_scale = 1;  // integer upscaling factor

  void validate() const {
    if (!(lo < hi)) throw ConfigError("render range must satisfy lo < hi");
    if (pixel_scale < 1) throw ConfigError("pixel scale must be >= 1");
  }
};

/// Clamped linear map of one value to its colormap entry index.
inline int render_index(double v, const RenderSpec& spec) {
  const double t = (v - spec.lo) / (spec.hi - spec.lo);
  return int(std::clamp(t, 0.0, 1.0) * 255.0 + 0.5);
}

inline Rgb render_color(double v, const RenderSpec& spec) {
  const int i = render_index(v, spec);
  if (spec.colormap == Colormap::grayscale) {
    const std::uint8_t g = std::uint8_t(i);
    return {g, g, g};
  }
  return thermal_table()[std::size_t(i)];
}

namespace detail {

inline void png_chunk(std::string& out, const char type[4],
                      const std::string& payload) {
  const std::uint32_t len = std::uint32_t(payload.size());
  for (int i = 3; i >= 0; --i) out.push_back(char((len >> (8 * i)) & 0xff));
  const std::size_t crc_begin = out.size();
  out.append(type, 4);
  out += payload;
  const std::uint32_t crc = std::uint32_t(
      ::crc32(0, reinterpret_cast<const Bytef*>(out.data() + crc_begin),
              uInt(out.size() - crc_begin)));
  for (int i = 3; i >= 0; --i) out.push_back(char((crc >> (8 * i)) & 0xff));
}

}  // namespace detail

/// Encode interleaved RGB8 rows (row-major, y down) as a PNG byte string.
inline std::string png_encode_rgb(const std::vector<Rgb>& pixels, int width,
                                  int height) {
  if (width <= 0 || height <= 0 ||
      pixels.size() != std::size_t(width) * std::size_t(height))
    throw ShapeError("png_encode_rgb: pixel count does not match dimensions");

  // raw scanlines, each prefixed with filter byte 0 (None)
  std::vector<unsigned char> raw;
  raw.reserve(std::size_t(height) * (1 + 3 * std::size_t(width)));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    for (int x = 0; x < width; ++x) {
      const Rgb& p = pixels[std::size_t(y) * width + x];
      raw.push_back(p.r);
      raw.push_back(p.g);
      raw.push_back(p.b);
    }
  }
  uLongf comp_len = ::compressBound(uLong(raw.size()));
  std::vector<unsigned char> comp(comp_len);
  if (::compress2(comp.data(), &comp_len, raw.data(), uLong(raw.size()), 9) !=
      Z_OK)
    throw NumericalError("png_encode_rgb: zlib compression failed");
  comp.resize(comp_len);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  auto be32 = [&](std::string& s, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) s.push_back(char((v >> (8 * i)) & 0xff));
  };
  be32(ihdr, std::uint32_t(width));
  be32(ihdr, std::uint32_t(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor RGB
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  detail::png_chunk(out, "IHDR", ihdr);
  detail::png_chunk(
      out, "IDAT",
      std::string(reinterpret_cast<const char*>(comp.data()), comp.size()));
  detail::png_chunk(out, "IEND", "");
  return out;
}

/// Render a map (or any scalar image in SosMap layout) to PNG bytes.
inline std::string render_png(const SosMap& map, const RenderSpec& spec) {
  spec.validate();
  const int s = spec.pixel_scale;
  const int w = map.grid.nx * s, h = map.grid.nz * s;
  std::vector<Rgb> px(std::size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      px[std::size_t(y) * w + x] = render_color(map.at(x / s, y / s), spec);
  return png_encode_rgb(px, w, h);
}

inline void write_png_file(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(bytes.data(), std::streamsize(bytes.size()));
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace ucts

#endif  // UCTS_PNG_HPP
