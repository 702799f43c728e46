#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace invpt {

/// Binary PGM, maxval 255. Row-major, h rows of w pixels.
inline void write_pgm8(const std::string& path, int64_t w, int64_t h, std::span<const uint8_t> pixels) {
  if (static_cast<int64_t>(pixels.size()) != w * h) throw std::invalid_argument("write_pgm8: pixel count mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

/// Binary PGM, maxval 65535. Samples are written big-endian per the format.
inline void write_pgm16(const std::string& path, int64_t w, int64_t h, std::span<const uint16_t> pixels) {
  if (static_cast<int64_t>(pixels.size()) != w * h) throw std::invalid_argument("write_pgm16: pixel count mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "P5\n" << w << " " << h << "\n65535\n";
  for (uint16_t v : pixels) {
    const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xFF)};
    f.write(bytes, 2);
  }
}

/// Binary PPM, interleaved RGB, maxval 255.
inline void write_ppm(const std::string& path, int64_t w, int64_t h, std::span<const uint8_t> rgb) {
  if (static_cast<int64_t>(rgb.size()) != 3 * w * h) throw std::invalid_argument("write_ppm: pixel count mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

struct PnmImage {
  int64_t width = 0, height = 0;
  int channels = 1;
  int maxval = 255;
  std::vector<uint16_t> pixels;  // interleaved when channels == 3
};

inline PnmImage read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string magic;
  f >> magic;
  PnmImage img;
  if (magic == "P5") img.channels = 1;
  else if (magic == "P6") img.channels = 3;
  else throw std::runtime_error("unsupported PNM magic in " + path);
  f >> img.width >> img.height >> img.maxval;
  f.get();  // the single whitespace after maxval
  const int64_t n = img.width * img.height * img.channels;
  img.pixels.resize(static_cast<size_t>(n));
  if (img.maxval > 255) {
    for (int64_t i = 0; i < n; ++i) {
      const int hi = f.get(), lo = f.get();
      if (lo < 0) throw std::runtime_error("truncated PNM " + path);
      img.pixels[static_cast<size_t>(i)] = static_cast<uint16_t>((hi << 8) | lo);
    }
  } else {
    for (int64_t i = 0; i < n; ++i) {
      const int v = f.get();
      if (v < 0) throw std::runtime_error("truncated PNM " + path);
      img.pixels[static_cast<size_t>(i)] = static_cast<uint16_t>(v);
    }
  }
  return img;
}

}  // namespace invpt
