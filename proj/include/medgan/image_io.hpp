#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "medgan/tensor.hpp"

namespace medgan {

// 8-bit grayscale raster, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}

  std::uint8_t& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

// Throws FormatError naming the file for anything but 8-bit single-channel PNG.
GrayImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const GrayImage& image);

// v = 2 p / 255 - 1
inline float normalize_value(std::uint8_t p) { return 2.0f * (static_cast<float>(p) / 255.0f) - 1.0f; }
// Inverse of normalize_value with clamping and rounding to the nearest level.
std::uint8_t denormalize_value(double v);

// 1 x H x W tensor in [-1, 1].
Tensor<float> normalize_image(const GrayImage& image);
GrayImage denormalize_image(const Tensor<float>& image);
// Single-channel image on the 0..255 scale (as doubles), for metrics.
Tensor<double> to_intensity(const GrayImage& image);

// Images placed side by side, separated by `gap` black columns.
GrayImage hconcat(const std::vector<GrayImage>& images, std::size_t gap = 2);

}  // namespace medgan
