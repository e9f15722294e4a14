#pragma once

// Attention maps as binary PGM images.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ler/tensor.hpp"

namespace ler {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// One attention row over a (rows x cols) token grid, min-max scaled to
/// 0..255 and upsampled by `factor` with nearest-neighbour repetition.
/// A constant row maps to all zeros.
inline GrayImage attention_map(std::span<const float> row, std::size_t rows, std::size_t cols, std::size_t factor = 4) {
  if (row.size() != rows * cols) {
    throw DimensionError("attention_map: " + std::to_string(row.size()) + " weights for a " + std::to_string(rows) +
                         "x" + std::to_string(cols) + " grid");
  }
  const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
  const float range = *hi - *lo;
  GrayImage img{cols * factor, rows * factor, std::vector<std::uint8_t>(rows * cols * factor * factor)};
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const float v = row[(y / factor) * cols + x / factor];
      const float unit = range > 0.0f ? (v - *lo) / range : 0.0f;
      img.pixels[y * img.width + x] = static_cast<std::uint8_t>(std::clamp(unit * 255.0f + 0.5f, 0.0f, 255.0f));
    }
  }
  return img;
}

inline void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  int maxval = 0;
  GrayImage img;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 255 || !in) throw std::runtime_error(path + ": not an 8-bit binary PGM");
  in.get();
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw std::runtime_error(path + ": truncated pixel data");
  return img;
}

/// Column of the brightest pixel (first in row-major order on ties).
inline std::size_t argmax_column(const GrayImage& img) {
  const auto it = std::max_element(img.pixels.begin(), img.pixels.end());
  return static_cast<std::size_t>(it - img.pixels.begin()) % img.width;
}

}  // namespace ler
