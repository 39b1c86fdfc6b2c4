#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "patchflow/errors.hpp"

namespace patchflow {

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) channels.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;
  std::string image_id;

  Raster() = default;
  Raster(int w, int h, int c, std::string id = {})
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0), image_id(std::move(id)) {}

  bool valid() const {
    return width > 0 && height > 0 && (channels == 1 || channels == 3) &&
           data.size() == static_cast<std::size_t>(width) * height * channels;
  }

  std::uint8_t& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  double gray(int x, int y) const {
    if (channels == 1) return at(x, y);
    return 0.299 * at(x, y, 0) + 0.587 * at(x, y, 1) + 0.114 * at(x, y, 2);
  }
};

namespace io {

namespace detail {

inline void skip_pnm_space(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string dummy;
      std::getline(in, dummy);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_pnm_int(std::istream& in, const std::string& path) {
  skip_pnm_space(in);
  int v = -1;
  if (!(in >> v) || v < 0) throw ParseError(path, 0, "malformed PNM header");
  return v;
}

}  // namespace detail

/// PGM/PPM in binary (P5/P6) or ASCII (P2/P3) form, maxval <= 255.
inline Raster load_raster(const std::string& path, std::string image_id = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || (magic[1] != '2' && magic[1] != '3' && magic[1] != '5' && magic[1] != '6'))
    throw UnsupportedFormat(path + ": not a PGM/PPM file");
  const bool color = magic[1] == '3' || magic[1] == '6';
  const bool binary = magic[1] == '5' || magic[1] == '6';
  const int w = detail::read_pnm_int(in, path);
  const int h = detail::read_pnm_int(in, path);
  const int maxval = detail::read_pnm_int(in, path);
  if (w == 0 || h == 0) throw ParseError(path, 0, "zero image size");
  if (maxval == 0 || maxval > 255) throw UnsupportedFormat(path + ": only 8-bit PNM supported");
  Raster r(w, h, color ? 3 : 1, image_id);
  if (binary) {
    in.get();  // single whitespace after maxval
    in.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(r.data.size()));
    if (in.gcount() != static_cast<std::streamsize>(r.data.size())) throw ParseError(path, 0, "truncated pixel data");
  } else {
    for (auto& px : r.data) {
      const int v = detail::read_pnm_int(in, path);
      if (v > maxval) throw ParseError(path, 0, "pixel exceeds maxval");
      px = static_cast<std::uint8_t>(v);
    }
  }
  if (maxval != 255)
    for (auto& px : r.data) px = static_cast<std::uint8_t>((px * 255 + maxval / 2) / maxval);
  return r;
}

/// Binary PGM for gray rasters, PPM for RGB.
inline void write_raster(const std::string& path, const Raster& r) {
  if (!r.valid()) throw InvalidParams("write_raster: invalid raster");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << (r.channels == 1 ? "P5" : "P6") << '\n' << r.width << ' ' << r.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(r.data.data()), static_cast<std::streamsize>(r.data.size()));
  if (!out) throw Error("write failed: " + path);
}

}  // namespace io
}  // namespace patchflow
