#include "medgan/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace medgan {

GrayImage read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw FormatError(path.string() + ": not a readable PNG (" + img.message + ")");
  }
  if (img.format != PNG_FORMAT_GRAY) {
    png_image_free(&img);
    throw FormatError(path.string() + ": expected 8-bit grayscale without alpha");
  }
  GrayImage out(img.width, img.height);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), static_cast<png_int_32>(img.width), nullptr)) {
    png_image_free(&img);
    throw FormatError(path.string() + ": " + img.message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), static_cast<png_int_32>(image.width),
                               nullptr)) {
    throw FormatError(path.string() + ": write failed (" + img.message + ")");
  }
}

std::uint8_t denormalize_value(double v) {
  const double p = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(p);
}

Tensor<float> normalize_image(const GrayImage& image) {
  Tensor<float> t = Tensor<float>::image(1, image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = normalize_value(image.pixels[i]);
  return t;
}

GrayImage denormalize_image(const Tensor<float>& image) {
  if (image.rank() != 3 || image.channels() != 1) {
    throw ShapeError("denormalize_image expects 1xHxW, got " + shape_string(image.shape()));
  }
  GrayImage out(image.width(), image.height());
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = denormalize_value(image[i]);
  return out;
}

Tensor<double> to_intensity(const GrayImage& image) {
  Tensor<double> t = Tensor<double>::image(1, image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = image.pixels[i];
  return t;
}

GrayImage hconcat(const std::vector<GrayImage>& images, std::size_t gap) {
  std::size_t w = 0;
  std::size_t h = 0;
  for (const auto& im : images) {
    w += im.width;
    h = std::max(h, im.height);
  }
  if (!images.empty()) w += gap * (images.size() - 1);
  GrayImage out(w, h);
  std::size_t x0 = 0;
  for (const auto& im : images) {
    for (std::size_t r = 0; r < im.height; ++r) {
      std::copy_n(im.pixels.begin() + static_cast<std::ptrdiff_t>(r * im.width), im.width,
                  out.pixels.begin() + static_cast<std::ptrdiff_t>(r * w + x0));
    }
    x0 += im.width + gap;
  }
  return out;
}

}  // namespace medgan
