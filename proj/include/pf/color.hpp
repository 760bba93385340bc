#pragma once

// Color-science kernel: sRGB <-> CIE Lab (D65, 2 degree observer),
// CIEDE2000 and ab-plane quantization. Everything here is pure.

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace pf {

struct Rgb8 {
  std::uint8_t r = 0, g = 0, b = 0;
  auto operator<=>(const Rgb8&) const = default;
};

struct LabColor {
  double L = 0, a = 0, b = 0;
  bool operator==(const LabColor&) const = default;
};

// Throws InvalidInput if L is outside [0, 100] or any component is non-finite.
void validate(const LabColor& c);

LabColor rgb_to_lab(Rgb8 rgb);
// Out-of-gamut results are clipped per channel.
Rgb8 lab_to_rgb(const LabColor& lab);
// Linear-light sRGB before clipping; a color is in gamut iff all three lie in [0, 1].
std::array<double, 3> lab_to_linear_rgb(const LabColor& lab);
bool in_srgb_gamut(const LabColor& lab, double tolerance = 1e-12);

// CIEDE2000 with kL = kC = kH = 1.
double ciede2000(const LabColor& c1, const LabColor& c2);

std::string to_hex(Rgb8 rgb);

// Exactly five Lab colors, in order.
class Palette {
 public:
  static constexpr std::size_t kSize = 5;
  static constexpr std::size_t kFlatSize = 3 * kSize;

  Palette() = default;
  explicit Palette(const std::array<LabColor, kSize>& colors);
  // Throws InvalidInput unless there are exactly five valid colors.
  static Palette from_colors(const std::vector<LabColor>& colors);
  // 15 raw Lab floats, color-major.
  static Palette from_flat(std::span<const double> flat);
  // 15 values scaled to [-1, 1] (L/50 - 1, a/110, b/110); L is clamped to [0, 100].
  static Palette from_normalized(std::span<const double> normalized);

  const LabColor& operator[](std::size_t i) const { return colors_[i]; }
  const std::array<LabColor, kSize>& colors() const { return colors_; }
  std::array<double, kFlatSize> flat() const;
  std::array<double, kFlatSize> normalized() const;
  std::array<std::string, kSize> hex() const;

  bool operator==(const Palette&) const = default;

 private:
  std::array<LabColor, kSize> colors_{};
};

// {"colors": [[L,a,b] x5], "hex": ["#RRGGBB" x5]}
nlohmann::json palette_to_json(const Palette& p, bool with_hex = true);
// Accepts {"colors": [...]} or a bare [[L,a,b] x5] array. Throws InvalidInput.
Palette palette_from_json(const nlohmann::json& j);

double normalize_l(double L);
double normalize_ab(double v);
double denormalize_l(double v);
double denormalize_ab(double v);

// Quantization of the ab plane into grid cells of spacing 10 whose centers are
// reachable from sRGB at some integer lightness.
class AbBinTable {
 public:
  static constexpr int kSpacing = 10;
  static constexpr int kExtent = 110;

  static AbBinTable build();
  static AbBinTable from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  std::size_t size() const { return centers_.size(); }
  const std::vector<std::array<int, 2>>& centers() const { return centers_; }
  // Ordinal of the bin centered exactly at (a, b), or -1.
  int index_of(int a, int b) const;

  bool operator==(const AbBinTable&) const = default;

 private:
  explicit AbBinTable(std::vector<std::array<int, 2>> centers);
  std::vector<std::array<int, 2>> centers_;
  std::vector<int> grid_;  // (kGrid x kGrid) -> ordinal or -1
};

// Nearest bin center in the ab plane (lightness ignored).
int quantize_ab(const LabColor& color, const AbBinTable& table);

}  // namespace pf
