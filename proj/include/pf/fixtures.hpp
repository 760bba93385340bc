#pragma once

// Synthetic data for smoke runs and overfit checks: text/palette pairs built
// from a small color lexicon, and saturated block images.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pf/color.hpp"
#include "pf/image.hpp"
#include "pf/pat_data.hpp"

namespace pf {

// n records; each text names one to three lexicon words and its palette is
// a shaded mix of those words' colors with small Lab jitter.
std::vector<PatRecord> synthetic_pat(std::size_t n, std::uint64_t seed);

// Image split into vertical bands, one per color, with equal widths up to
// rounding.
RgbImage band_image(const std::vector<Rgb8>& colors, int width, int height);

// Saturated random image: a few colored rectangles over a colored ground
// with a soft lightness gradient.
RgbImage synthetic_image(int size, std::uint64_t seed);

std::vector<RgbImage> synthetic_images(std::size_t n, int size, std::uint64_t seed);
// Writes image_000.png ... into dir.
void write_synthetic_images(const std::filesystem::path& dir, std::size_t n, int size, std::uint64_t seed);

}  // namespace pf
