#pragma once

#include <vector>

#include "pf/color.hpp"
#include "pf/image.hpp"

namespace pf {

// Modified median-cut quantization (the Color Thief scheme): pixels are
// histogrammed at 5 bits per channel, boxes are split along their longest
// axis halfway between the population median and the far side, first by
// population and then by population x volume. Each box reports the exact mean of its pixels.
//
// Returns `k` colors in descending box population. When the image has fewer
// separable colors than `k`, the most populous boxes are repeated.
std::vector<LabColor> extract_dominant_colors(const RgbImage& image, int k);

Palette extract_dominant_palette(const RgbImage& image);

}  // namespace pf
