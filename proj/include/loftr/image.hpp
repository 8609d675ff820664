#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace loftr {

/// Single-channel image, row-major, intensities in [0,1]. Pixel (x, y) has its
/// center at integer coordinates.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  static Image filled(std::size_t height, std::size_t width, float value);

  float at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  float& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  bool empty() const { return pixels.empty(); }
};

/// Reads a binary (P5) PGM with maxval <= 255, normalizing to [0,1].
Image read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Image& image);

/// Bilinear sample with border replication; (x, y) in pixel-center coordinates.
float sample_bilinear(const Image& image, double x, double y);

}  // namespace loftr
