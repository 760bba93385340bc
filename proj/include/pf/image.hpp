#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pf/color.hpp"

namespace pf {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb8> pixels;  // row-major

  RgbImage() = default;
  RgbImage(int w, int h, Rgb8 fill = {});

  Rgb8& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Rgb8& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return pixels.empty(); }
};

// Decodes PNG or JPEG by signature. Throws InvalidInput on anything else.
RgbImage decode_image(std::span<const std::uint8_t> bytes);
RgbImage load_image(const std::filesystem::path& path);
std::string encode_png(const RgbImage& image);
void save_png(const RgbImage& image, const std::filesystem::path& path);

RgbImage resize_bilinear(const RgbImage& image, int width, int height);
// Single-channel bilinear resampling with half-pixel centers.
std::vector<double> resize_plane(std::span<const double> src, int src_w, int src_h, int dst_w, int dst_h);

}  // namespace pf
