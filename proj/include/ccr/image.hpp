#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "ccr/tensor.hpp"

namespace ccr {

// Images live in memory as Tensor[3xHxW] (or [HxW] for grey) with values in
// [0,1]; on disk they are binary PPM (P6) / PGM (P5), 8-bit.

inline std::uint8_t to_byte(double v) {
  double r = std::round(255.0 * v);
  if (r < 0.0) r = 0.0;
  if (r > 255.0) r = 255.0;
  return static_cast<std::uint8_t>(r);
}

inline void write_ppm(const std::string& path, const Tensor& img) {
  require_ndim(img, 3, "write_ppm image");
  if (img.dim(0) != 3) throw ShapeError("write_ppm: expected 3 channels, got " + std::to_string(img.dim(0)));
  const int h = img.dim(1), w = img.dim(2);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open for write: " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  std::string row(static_cast<std::size_t>(w) * 3, '\0');
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<std::size_t>(x) * 3 + c] = static_cast<char>(to_byte(img.at(c, y, x)));
    f.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw std::runtime_error("write_ppm: write failed: " + path);
}

inline void write_pgm(const std::string& path, const Tensor& grey) {
  require_ndim(grey, 2, "write_pgm image");
  const int h = grey.dim(0), w = grey.dim(1);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pgm: cannot open for write: " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  std::string row(static_cast<std::size_t>(w), '\0');
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row[static_cast<std::size_t>(x)] = static_cast<char>(to_byte(grey.at(y, x)));
    f.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw std::runtime_error("write_pgm: write failed: " + path);
}

namespace pnm {

inline int read_token(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments.
  for (;;) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int v;
  if (!(in >> v)) throw std::runtime_error("pnm: malformed header in " + path);
  return v;
}

}  // namespace pnm

inline Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw std::runtime_error("read_ppm: not a binary PPM (P6): " + path);
  int w = pnm::read_token(f, path);
  int h = pnm::read_token(f, path);
  int maxv = pnm::read_token(f, path);
  if (maxv != 255) throw std::runtime_error("read_ppm: only 8-bit images supported: " + path);
  f.get();  // single whitespace after header
  std::string buf(static_cast<std::size_t>(w) * h * 3, '\0');
  f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("read_ppm: truncated pixel data: " + path);
  Tensor img({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = static_cast<unsigned char>(buf[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0;
  return img;
}

inline Tensor read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pgm: cannot open: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5") throw std::runtime_error("read_pgm: not a binary PGM (P5): " + path);
  int w = pnm::read_token(f, path);
  int h = pnm::read_token(f, path);
  int maxv = pnm::read_token(f, path);
  if (maxv != 255) throw std::runtime_error("read_pgm: only 8-bit images supported: " + path);
  f.get();
  std::string buf(static_cast<std::size_t>(w) * h, '\0');
  f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("read_pgm: truncated pixel data: " + path);
  Tensor img({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(y, x) = static_cast<unsigned char>(buf[static_cast<std::size_t>(y) * w + x]) / 255.0;
  return img;
}

// Corner-aligned bilinear sampling of one channel plane.
inline void resample_plane(const double* src, int sh, int sw, double* dst, int dh, int dw) {
  const double sy = dh > 1 ? static_cast<double>(sh - 1) / (dh - 1) : 0.0;
  const double sx = dw > 1 ? static_cast<double>(sw - 1) / (dw - 1) : 0.0;
  for (int y = 0; y < dh; ++y) {
    double fy = y * sy;
    int y0 = static_cast<int>(fy);
    if (y0 >= sh - 1) y0 = sh - 1;
    int y1 = std::min(y0 + 1, sh - 1);
    double wy = fy - y0;
    for (int x = 0; x < dw; ++x) {
      double fx = x * sx;
      int x0 = static_cast<int>(fx);
      if (x0 >= sw - 1) x0 = sw - 1;
      int x1 = std::min(x0 + 1, sw - 1);
      double wx = fx - x0;
      double top = src[static_cast<std::size_t>(y0) * sw + x0] * (1.0 - wx) +
                   src[static_cast<std::size_t>(y0) * sw + x1] * wx;
      double bot = src[static_cast<std::size_t>(y1) * sw + x0] * (1.0 - wx) +
                   src[static_cast<std::size_t>(y1) * sw + x1] * wx;
      dst[static_cast<std::size_t>(y) * dw + x] = top * (1.0 - wy) + bot * wy;
    }
  }
}

// Bilinear resize of a [CxHxW] or [HxW] tensor; exact identity when sizes match.
inline Tensor resize_bilinear(const Tensor& img, int h, int w) {
  if (h < 1 || w < 1) throw ShapeError("resize_bilinear: target size must be positive");
  if (img.ndim() == 2) {
    if (img.dim(0) == h && img.dim(1) == w) return img;
    Tensor out({h, w});
    resample_plane(img.data(), img.dim(0), img.dim(1), out.data(), h, w);
    return out;
  }
  require_ndim(img, 3, "resize_bilinear image");
  if (img.dim(1) == h && img.dim(2) == w) return img;
  const int c = img.dim(0);
  Tensor out({c, h, w});
  const std::size_t sp = static_cast<std::size_t>(img.dim(1)) * img.dim(2);
  const std::size_t dp = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch)
    resample_plane(img.data() + ch * sp, img.dim(1), img.dim(2), out.data() + ch * dp, h, w);
  return out;
}

}  // namespace ccr
