#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "fer/common.hpp"
#include "fer/tensor.hpp"

namespace fer {

/// One grayscale frame: HxWx1 tensor of intensities in [0, 255] plus a
/// timestamp in seconds.
struct Frame {
  Tensor pixels;  // HxWx1
  double timestamp = 0.0;
};

/// ITU-R 601 luma with half-up rounding, HxWx3 -> HxWx1.
inline Tensor to_grayscale(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(2) != 3) {
    throw DimensionError("to_grayscale expects HxWx3, got " + rgb.shape_string());
  }
  const std::int64_t h = rgb.dim(0), w = rgb.dim(1);
  Tensor out({h, w, 1});
  for (std::int64_t p = 0; p < h * w; ++p) {
    const double y = 0.299 * rgb[static_cast<std::size_t>(3 * p)] +
                     0.587 * rgb[static_cast<std::size_t>(3 * p + 1)] +
                     0.114 * rgb[static_cast<std::size_t>(3 * p + 2)];
    out[static_cast<std::size_t>(p)] = std::floor(y + 0.5);
  }
  return out;
}

/// Bilinear resize with corner-aligned sampling; output clamped to [0, 255].
inline Tensor resize(const Tensor& frame, std::int64_t out_h, std::int64_t out_w) {
  if (frame.rank() != 3 || frame.dim(2) != 1) {
    throw DimensionError("resize expects HxWx1, got " + frame.shape_string());
  }
  const std::int64_t h = frame.dim(0), w = frame.dim(1);
  if (h < 2 || w < 2) {
    throw DimensionError("resize needs input extents >= 2, got " + frame.shape_string());
  }
  if (out_h < 1 || out_w < 1) {
    throw DimensionError("resize target extents must be positive");
  }
  Tensor out({out_h, out_w, 1});
  const double sy = out_h > 1 ? static_cast<double>(h - 1) / static_cast<double>(out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(w - 1) / static_cast<double>(out_w - 1) : 0.0;
  for (std::int64_t oy = 0; oy < out_h; ++oy) {
    const double fy = out_h > 1 ? oy * sy : (h - 1) / 2.0;
    const std::int64_t y0 = std::min<std::int64_t>(static_cast<std::int64_t>(fy), h - 2);
    const double wy = fy - static_cast<double>(y0);
    for (std::int64_t ox = 0; ox < out_w; ++ox) {
      const double fx = out_w > 1 ? ox * sx : (w - 1) / 2.0;
      const std::int64_t x0 = std::min<std::int64_t>(static_cast<std::int64_t>(fx), w - 2);
      const double wx = fx - static_cast<double>(x0);
      const double v00 = frame[static_cast<std::size_t>(y0 * w + x0)];
      const double v01 = frame[static_cast<std::size_t>(y0 * w + x0 + 1)];
      const double v10 = frame[static_cast<std::size_t>((y0 + 1) * w + x0)];
      const double v11 = frame[static_cast<std::size_t>((y0 + 1) * w + x0 + 1)];
      // endpoint-exact lerp: identity resizes and constant images stay exact
      auto lerp = [](double a, double b, double t) {
        if (t == 0.0) return a;
        if (t == 1.0) return b;
        return a + t * (b - a);
      };
      const double v = lerp(lerp(v00, v01, wx), lerp(v10, v11, wx), wy);
      out[static_cast<std::size_t>(oy * out_w + ox)] = std::clamp(v, 0.0, 255.0);
    }
  }
  return out;
}

namespace detail {

// Reads the next header token of a netpbm file, skipping whitespace and
// '#' comments.
inline std::string pnm_token(std::istream& in, const std::string& path) {
  std::string tok;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      // skip
    } else {
      break;
    }
    ch = in.get();
  }
  while (ch != EOF && !std::isspace(ch)) {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  if (tok.empty()) throw ParseError(path + ": truncated netpbm header");
  return tok;
}

inline std::int64_t pnm_int(std::istream& in, const std::string& path) {
  const std::string tok = pnm_token(in, path);
  try {
    return std::stoll(tok);
  } catch (...) {
    throw ParseError(path + ": bad netpbm header token \"" + tok + "\"");
  }
}

}  // namespace detail

/// Binary PGM (P5), maxval <= 255, as an HxWx1 tensor of [0, 255] values.
inline Tensor load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  std::string magic = detail::pnm_token(in, path);
  if (magic != "P5") throw ParseError(path + ": expected P5 magic, got \"" + magic + "\"");
  const std::int64_t w = detail::pnm_int(in, path);
  const std::int64_t h = detail::pnm_int(in, path);
  const std::int64_t maxval = detail::pnm_int(in, path);
  if (w <= 0 || h <= 0) throw ParseError(path + ": non-positive image extents");
  if (maxval <= 0 || maxval > 255) {
    throw ParseError(path + ": unsupported maxval " + std::to_string(maxval));
  }
  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw ParseError(path + ": truncated pixel payload");
  }
  Tensor t({h, w, 1});
  for (std::size_t i = 0; i < raw.size(); ++i) t[i] = static_cast<double>(raw[i]);
  return t;
}

/// Binary PPM (P6) as an HxWx3 tensor.
inline Tensor load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  std::string magic = detail::pnm_token(in, path);
  if (magic != "P6") throw ParseError(path + ": expected P6 magic, got \"" + magic + "\"");
  const std::int64_t w = detail::pnm_int(in, path);
  const std::int64_t h = detail::pnm_int(in, path);
  const std::int64_t maxval = detail::pnm_int(in, path);
  if (w <= 0 || h <= 0) throw ParseError(path + ": non-positive image extents");
  if (maxval <= 0 || maxval > 255) {
    throw ParseError(path + ": unsupported maxval " + std::to_string(maxval));
  }
  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * 3));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw ParseError(path + ": truncated pixel payload");
  }
  Tensor t({h, w, 3});
  for (std::size_t i = 0; i < raw.size(); ++i) t[i] = static_cast<double>(raw[i]);
  return t;
}

inline void save_pgm(const Tensor& gray, const std::string& path) {
  if (gray.rank() != 3 || gray.dim(2) != 1) {
    throw DimensionError("save_pgm expects HxWx1, got " + gray.shape_string());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  out << "P5\n" << gray.dim(1) << " " << gray.dim(0) << "\n255\n";
  std::vector<unsigned char> raw(gray.numel());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<unsigned char>(std::clamp(std::floor(gray[i] + 0.5), 0.0, 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

struct RawSize {
  std::int64_t width = 0;
  std::int64_t height = 0;
};

/// Loads an image as grayscale. PGM loads directly, PPM goes through
/// to_grayscale, and headerless ".raw" 8-bit dumps need an explicit size.
inline Tensor load_image_gray(const std::string& path,
                              const std::optional<RawSize>& raw = std::nullopt) {
  auto ends_with = [&path](const char* suf) {
    const std::string s(suf);
    return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
  };
  if (ends_with(".pgm")) return load_pgm(path);
  if (ends_with(".ppm")) return to_grayscale(load_ppm(path));
  if (ends_with(".raw")) {
    if (!raw) {
      throw Error(path + ": raw frame dumps need an explicit --raw-size WxH");
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path);
    std::vector<unsigned char> buf(static_cast<std::size_t>(raw->width * raw->height));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
      throw ParseError(path + ": raw payload shorter than " + std::to_string(raw->width) + "x" +
                       std::to_string(raw->height));
    }
    Tensor t({raw->height, raw->width, 1});
    for (std::size_t i = 0; i < buf.size(); ++i) t[i] = static_cast<double>(buf[i]);
    return t;
  }
  throw ParseError(path + ": unsupported image format (expected .pgm, .ppm or .raw)");
}

}  // namespace fer
