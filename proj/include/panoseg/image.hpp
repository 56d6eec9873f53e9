#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace panoseg {

// Plain 8-bit RGB raster.
struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<std::array<uint8_t, 3>> pixels;  // row-major

  ImageRGB() = default;
  ImageRGB(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h, {0, 0, 0}) {}

  std::array<uint8_t, 3>& at(int row, int col) {
    return pixels[static_cast<size_t>(row) * width + col];
  }
  const std::array<uint8_t, 3>& at(int row, int col) const {
    return pixels[static_cast<size_t>(row) * width + col];
  }
};

// 8-bit single channel raster (id maps, normalized range views).
struct ImageGray {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  ImageGray() = default;
  ImageGray(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h, 0) {}

  uint8_t& at(int row, int col) { return pixels[static_cast<size_t>(row) * width + col]; }
  uint8_t at(int row, int col) const { return pixels[static_cast<size_t>(row) * width + col]; }
};

// Binary PPM (P6) / PGM (P5) readers and writers.
void write_ppm(const std::string& path, const ImageRGB& image);
void write_pgm(const std::string& path, const ImageGray& image);
ImageRGB read_ppm(const std::string& path);
ImageGray read_pgm(const std::string& path);

}  // namespace panoseg
