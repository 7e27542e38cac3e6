// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <zlib.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "trivol/losses.hpp"

namespace trivol {

// ---- PFM ("Pf" grayscale, 32-bit little-endian, bottom-up, scale -1) ------

inline void write_pfm(const std::string& path, int height, int width,
                      std::span<const double> data) {
  if (data.size() != static_cast<std::size_t>(height) * width)
    throw std::invalid_argument("write_pfm: size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pfm: cannot open " + path);
  f << "Pf\n" << width << " " << height << "\n-1.0\n";
  std::vector<float> row(width);
  for (int r = height - 1; r >= 0; --r) {  // bottom-up scanlines
    for (int c = 0; c < width; ++c) row[c] = static_cast<float>(data[static_cast<std::size_t>(r) * width + c]);
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(width * sizeof(float)));
  }
  if (!f) throw std::runtime_error("write_pfm: write failed for " + path);
}

inline std::vector<double> read_pfm(const std::string& path, int& height, int& width) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pfm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "Pf") throw std::runtime_error("read_pfm: " + path + " is not grayscale PFM");
  double scale;
  f >> width >> height >> scale;
  f.get();  // single whitespace after the header
  if (width < 1 || height < 1) throw std::runtime_error("read_pfm: bad dimensions in " + path);
  const bool little_endian = scale < 0;
  std::vector<double> out(static_cast<std::size_t>(height) * width);
  std::vector<float> row(width);
  for (int r = height - 1; r >= 0; --r) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(width * sizeof(float)));
    if (!f) throw std::runtime_error("read_pfm: truncated file " + path);
    for (int c = 0; c < width; ++c) {
      float v = row[c];
      if (!little_endian) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        bits = __builtin_bswap32(bits);
        std::memcpy(&v, &bits, 4);
      }
      out[static_cast<std::size_t>(r) * width + c] = v;
    }
  }
  return out;
}

// ---- PNG (8-bit RGB, non-interlaced; zlib for compression and CRC) --------

namespace detail {

inline void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

inline void png_chunk(std::ofstream& f, const char type[4],
                      const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> head;
  push_be32(head, static_cast<std::uint32_t>(data.size()));
  f.write(reinterpret_cast<const char*>(head.data()), 4);
  f.write(type, 4);
  if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
  std::vector<std::uint8_t> tail;
  push_be32(tail, static_cast<std::uint32_t>(crc));
  f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

inline std::uint8_t to_byte(double v) {
  const double s = v <= 0.0 ? 0.0 : (v >= 1.0 ? 1.0 : v);
  return static_cast<std::uint8_t>(s * 255.0 + 0.5);
}

}  // namespace detail

// Color values are clamped to [0,1] and quantized to 8 bits.
inline void write_png_rgb8(const std::string& path, const ImageD& img) {
  if (img.c != 3 || img.h < 1 || img.w < 1)
    throw std::invalid_argument("write_png: need a non-empty rgb image");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_png: cannot open " + path);
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr;
  detail::push_be32(ihdr, static_cast<std::uint32_t>(img.w));
  detail::push_be32(ihdr, static_cast<std::uint32_t>(img.h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  detail::png_chunk(f, "IHDR", ihdr);

  // Filter byte 0 (None) per scanline.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.h) * (1 + 3 * img.w));
  for (int y = 0; y < img.h; ++y) {
    raw.push_back(0);
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < 3; ++ch) raw.push_back(detail::to_byte(img.at(y, x, ch)));
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("write_png: deflate failed");
  compressed.resize(bound);
  detail::png_chunk(f, "IDAT", compressed);
  detail::png_chunk(f, "IEND", {});
  if (!f) throw std::runtime_error("write_png: write failed for " + path);
}

// Minimal reader for the images this tool writes (plus RGBA and all five
// scanline filters, so externally produced 8-bit PNGs load too).
inline ImageD read_png_rgb8(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_png: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
    throw std::runtime_error("read_png: " + path + " is not a PNG file");

  auto be32 = [&](std::size_t off) {
    return (static_cast<std::uint32_t>(bytes[off]) << 24) |
           (static_cast<std::uint32_t>(bytes[off + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[off + 2]) << 8) | bytes[off + 3];
  };

  int w = 0, h = 0, channels = 0;
  std::vector<std::uint8_t> idat;
  std::size_t off = 8;
  while (off + 8 <= bytes.size()) {
    const std::uint32_t len = be32(off);
    const std::string type(reinterpret_cast<const char*>(&bytes[off + 4]), 4);
    const std::size_t data_off = off + 8;
    if (data_off + len + 4 > bytes.size()) throw std::runtime_error("read_png: truncated " + path);
    if (type == "IHDR") {
      w = static_cast<int>(be32(data_off));
      h = static_cast<int>(be32(data_off + 4));
      const int depth = bytes[data_off + 8];
      const int color = bytes[data_off + 9];
      if (depth != 8 || (color != 2 && color != 6) || bytes[data_off + 12] != 0)
        throw std::runtime_error("read_png: unsupported format in " + path);
      channels = color == 2 ? 3 : 4;
    } else if (type == "IDAT") {
      idat.insert(idat.end(), bytes.begin() + static_cast<std::ptrdiff_t>(data_off),
                  bytes.begin() + static_cast<std::ptrdiff_t>(data_off + len));
    } else if (type == "IEND") {
      break;
    }
    off = data_off + len + 4;
  }
  if (w < 1 || h < 1 || idat.empty()) throw std::runtime_error("read_png: missing data in " + path);

  const std::size_t stride = static_cast<std::size_t>(w) * channels;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * (stride + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw std::runtime_error("read_png: inflate failed for " + path);

  // Undo per-scanline filters.
  std::vector<std::uint8_t> pix(static_cast<std::size_t>(h) * stride);
  const int bpp = channels;
  for (int y = 0; y < h; ++y) {
    const std::uint8_t filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
    const std::uint8_t* src = &raw[static_cast<std::size_t>(y) * (stride + 1) + 1];
    std::uint8_t* dst = &pix[static_cast<std::size_t>(y) * stride];
    const std::uint8_t* up = y > 0 ? &pix[static_cast<std::size_t>(y - 1) * stride] : nullptr;
    for (std::size_t x = 0; x < stride; ++x) {
      const int a = x >= static_cast<std::size_t>(bpp) ? dst[x - bpp] : 0;
      const int b = up ? up[x] : 0;
      const int c = (up && x >= static_cast<std::size_t>(bpp)) ? up[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: {
          const int p = a + b - c;
          const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          break;
        }
        default: throw std::runtime_error("read_png: bad filter in " + path);
      }
      dst[x] = static_cast<std::uint8_t>(v & 0xff);
    }
  }

  ImageD img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        img.at(y, x, ch) = pix[static_cast<std::size_t>(y) * stride + static_cast<std::size_t>(x) * channels + ch] / 255.0;
  return img;
}

// ---- CSV -------------------------------------------------------------------

// Deterministic shortest round-trip formatting for report values.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : f_(path, std::ios::binary) {
    if (!f_) throw std::runtime_error("csv: cannot open " + path);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) f_ << ',';
      f_ << cells[i];
    }
    f_ << '\n';  // LF line endings
    if (!f_) throw std::runtime_error("csv: write failed");
  }

 private:
  std::ofstream f_;
};

}  // namespace trivol
