#include "pf/color.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "pf/error.hpp"

namespace pf {
namespace {

// D65 reference white and the sRGB primaries matrix (Lindbloom).
constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;
constexpr double kEps = 216.0 / 24389.0;
constexpr double kKappa = 24389.0 / 27.0;

constexpr double kRgbToXyz[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                                    {0.2126729, 0.7151522, 0.0721750},
                                    {0.0193339, 0.1191920, 0.9503041}};
constexpr double kXyzToRgb[3][3] = {{3.2404542, -1.5371385, -0.4985314},
                                    {-0.9692660, 1.8760108, 0.0415560},
                                    {0.0556434, -0.2040259, 1.0572252}};

double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }
double linear_to_srgb(double c) { return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055; }
double lab_f(double t) { return t > kEps ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0; }
double lab_finv(double f) {
  const double f3 = f * f * f;
  return f3 > kEps ? f3 : (116.0 * f - 16.0) / kKappa;
}

constexpr double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
constexpr double rad(double deg) { return deg * std::numbers::pi / 180.0; }

constexpr int kGrid = 2 * AbBinTable::kExtent / AbBinTable::kSpacing + 1;

int grid_slot(int a, int b) {
  if (a % AbBinTable::kSpacing != 0 || b % AbBinTable::kSpacing != 0) return -1;
  const int ia = (a + AbBinTable::kExtent) / AbBinTable::kSpacing;
  const int ib = (b + AbBinTable::kExtent) / AbBinTable::kSpacing;
  if (ia < 0 || ia >= kGrid || ib < 0 || ib >= kGrid) return -1;
  return ia * kGrid + ib;
}

}  // namespace

void validate(const LabColor& c) {
  if (!std::isfinite(c.L) || !std::isfinite(c.a) || !std::isfinite(c.b))
    throw InvalidInput("Lab color has a non-finite component");
  if (c.L < 0.0 || c.L > 100.0) throw InvalidInput("Lab lightness " + std::to_string(c.L) + " outside [0, 100]");
}

LabColor rgb_to_lab(Rgb8 rgb) {
  const double lin[3] = {srgb_to_linear(rgb.r / 255.0), srgb_to_linear(rgb.g / 255.0),
                         srgb_to_linear(rgb.b / 255.0)};
  double xyz[3];
  for (int i = 0; i < 3; ++i) xyz[i] = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
  const double fx = lab_f(xyz[0] / kXn), fy = lab_f(xyz[1] / kYn), fz = lab_f(xyz[2] / kZn);
  return {std::clamp(116.0 * fy - 16.0, 0.0, 100.0), 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<double, 3> lab_to_linear_rgb(const LabColor& lab) {
  const double fy = (lab.L + 16.0) / 116.0;
  const double fx = fy + lab.a / 500.0;
  const double fz = fy - lab.b / 200.0;
  const double yr = lab.L > kKappa * kEps ? fy * fy * fy : lab.L / kKappa;
  const double xyz[3] = {lab_finv(fx) * kXn, yr * kYn, lab_finv(fz) * kZn};
  std::array<double, 3> rgb{};
  for (int i = 0; i < 3; ++i) rgb[i] = kXyzToRgb[i][0] * xyz[0] + kXyzToRgb[i][1] * xyz[1] + kXyzToRgb[i][2] * xyz[2];
  return rgb;
}

bool in_srgb_gamut(const LabColor& lab, double tolerance) {
  const auto rgb = lab_to_linear_rgb(lab);
  return std::all_of(rgb.begin(), rgb.end(), [tolerance](double c) { return c >= -tolerance && c <= 1.0 + tolerance; });
}

Rgb8 lab_to_rgb(const LabColor& lab) {
  const auto lin = lab_to_linear_rgb(lab);
  std::uint8_t out[3];
  for (int i = 0; i < 3; ++i) {
    double v = std::isfinite(lin[i]) ? std::clamp(lin[i], 0.0, 1.0) : 0.0;
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(linear_to_srgb(v), 0.0, 1.0) * 255.0));
  }
  return {out[0], out[1], out[2]};
}

double ciede2000(const LabColor& c1, const LabColor& c2) {
  constexpr double k25_7 = 6103515625.0;  // 25^7
  const double C1 = std::hypot(c1.a, c1.b);
  const double C2 = std::hypot(c2.a, c2.b);
  const double Cbar7 = std::pow((C1 + C2) / 2.0, 7.0);
  const double G = 0.5 * (1.0 - std::sqrt(Cbar7 / (Cbar7 + k25_7)));
  const double a1p = (1.0 + G) * c1.a;
  const double a2p = (1.0 + G) * c2.a;
  const double C1p = std::hypot(a1p, c1.b);
  const double C2p = std::hypot(a2p, c2.b);

  auto hue = [](double b, double ap) {
    if (b == 0.0 && ap == 0.0) return 0.0;
    double h = deg(std::atan2(b, ap));
    return h < 0.0 ? h + 360.0 : h;
  };
  const double h1p = hue(c1.b, a1p);
  const double h2p = hue(c2.b, a2p);

  const double dLp = c2.L - c1.L;
  const double dCp = C2p - C1p;
  const double cprod = C1p * C2p;
  double dhp = 0.0;
  if (cprod != 0.0) {
    dhp = h2p - h1p;
    if (dhp > 180.0)
      dhp -= 360.0;
    else if (dhp < -180.0)
      dhp += 360.0;
  }
  const double dHp = 2.0 * std::sqrt(cprod) * std::sin(rad(dhp) / 2.0);

  const double Lbar = (c1.L + c2.L) / 2.0;
  const double Cbarp = (C1p + C2p) / 2.0;
  double hbarp = h1p + h2p;
  if (cprod != 0.0) {
    if (std::abs(h1p - h2p) <= 180.0)
      hbarp = (h1p + h2p) / 2.0;
    else if (h1p + h2p < 360.0)
      hbarp = (h1p + h2p + 360.0) / 2.0;
    else
      hbarp = (h1p + h2p - 360.0) / 2.0;
  }

  const double T = 1.0 - 0.17 * std::cos(rad(hbarp - 30.0)) + 0.24 * std::cos(rad(2.0 * hbarp)) +
                   0.32 * std::cos(rad(3.0 * hbarp + 6.0)) - 0.20 * std::cos(rad(4.0 * hbarp - 63.0));
  const double dtheta = 30.0 * std::exp(-std::pow((hbarp - 275.0) / 25.0, 2.0));
  const double Cbarp7 = std::pow(Cbarp, 7.0);
  const double Rc = 2.0 * std::sqrt(Cbarp7 / (Cbarp7 + k25_7));
  const double l50 = (Lbar - 50.0) * (Lbar - 50.0);
  const double Sl = 1.0 + 0.015 * l50 / std::sqrt(20.0 + l50);
  const double Sc = 1.0 + 0.045 * Cbarp;
  const double Sh = 1.0 + 0.015 * Cbarp * T;
  const double Rt = -std::sin(rad(2.0 * dtheta)) * Rc;

  const double tl = dLp / Sl, tc = dCp / Sc, th = dHp / Sh;
  return std::sqrt(std::max(0.0, tl * tl + tc * tc + th * th + Rt * tc * th));
}

std::string to_hex(Rgb8 rgb) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02X%02X%02X", rgb.r, rgb.g, rgb.b);
  return buf;
}

double normalize_l(double L) { return L / 50.0 - 1.0; }
double normalize_ab(double v) { return v / 110.0; }
double denormalize_l(double v) { return (v + 1.0) * 50.0; }
double denormalize_ab(double v) { return v * 110.0; }

Palette::Palette(const std::array<LabColor, kSize>& colors) : colors_(colors) {
  for (const auto& c : colors_) validate(c);
}

Palette Palette::from_colors(const std::vector<LabColor>& colors) {
  if (colors.size() != kSize)
    throw InvalidInput("palette must have exactly 5 colors, got " + std::to_string(colors.size()));
  std::array<LabColor, kSize> arr{};
  std::copy(colors.begin(), colors.end(), arr.begin());
  return Palette(arr);
}

Palette Palette::from_flat(std::span<const double> flat) {
  if (flat.size() != kFlatSize) throw InvalidInput("flat palette needs 15 values, got " + std::to_string(flat.size()));
  std::array<LabColor, kSize> arr{};
  for (std::size_t i = 0; i < kSize; ++i) arr[i] = {flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]};
  return Palette(arr);
}

Palette Palette::from_normalized(std::span<const double> normalized) {
  if (normalized.size() != kFlatSize)
    throw InvalidInput("normalized palette needs 15 values, got " + std::to_string(normalized.size()));
  std::array<LabColor, kSize> arr{};
  for (std::size_t i = 0; i < kSize; ++i)
    arr[i] = {std::clamp(denormalize_l(normalized[3 * i]), 0.0, 100.0), denormalize_ab(normalized[3 * i + 1]),
              denormalize_ab(normalized[3 * i + 2])};
  return Palette(arr);
}

std::array<double, Palette::kFlatSize> Palette::flat() const {
  std::array<double, kFlatSize> out{};
  for (std::size_t i = 0; i < kSize; ++i) {
    out[3 * i] = colors_[i].L;
    out[3 * i + 1] = colors_[i].a;
    out[3 * i + 2] = colors_[i].b;
  }
  return out;
}

std::array<double, Palette::kFlatSize> Palette::normalized() const {
  std::array<double, kFlatSize> out{};
  for (std::size_t i = 0; i < kSize; ++i) {
    out[3 * i] = normalize_l(colors_[i].L);
    out[3 * i + 1] = normalize_ab(colors_[i].a);
    out[3 * i + 2] = normalize_ab(colors_[i].b);
  }
  return out;
}

std::array<std::string, Palette::kSize> Palette::hex() const {
  std::array<std::string, kSize> out;
  for (std::size_t i = 0; i < kSize; ++i) out[i] = to_hex(lab_to_rgb(colors_[i]));
  return out;
}

nlohmann::json palette_to_json(const Palette& p, bool with_hex) {
  nlohmann::json colors = nlohmann::json::array();
  for (const auto& c : p.colors()) colors.push_back({c.L, c.a, c.b});
  nlohmann::json j{{"colors", std::move(colors)}};
  if (with_hex) j["hex"] = p.hex();
  return j;
}

Palette palette_from_json(const nlohmann::json& j) {
  const nlohmann::json* colors = &j;
  if (j.is_object()) {
    if (!j.contains("colors")) throw InvalidInput("palette object has no \"colors\" field");
    colors = &j.at("colors");
  }
  if (!colors->is_array()) throw InvalidInput("palette colors must be an array");
  std::vector<LabColor> out;
  for (const auto& c : *colors) {
    if (!c.is_array() || c.size() != 3 || !std::all_of(c.begin(), c.end(), [](const auto& v) { return v.is_number(); }))
      throw InvalidInput("each palette color must be an array of three numbers [L, a, b]");
    out.push_back({c[0].get<double>(), c[1].get<double>(), c[2].get<double>()});
  }
  return Palette::from_colors(out);
}

AbBinTable::AbBinTable(std::vector<std::array<int, 2>> centers)
    : centers_(std::move(centers)), grid_(kGrid * kGrid, -1) {
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    const int slot = grid_slot(centers_[i][0], centers_[i][1]);
    if (slot < 0) throw InvalidInput("ab bin center off the spacing-10 grid");
    if (grid_[slot] >= 0) throw InvalidInput("duplicate ab bin center");
    grid_[slot] = static_cast<int>(i);
  }
}

AbBinTable AbBinTable::build() {
  std::vector<std::array<int, 2>> centers;
  for (int a = -kExtent; a <= kExtent; a += kSpacing)
    for (int b = -kExtent; b <= kExtent; b += kSpacing)
      for (int L = 0; L <= 100; ++L)
        if (in_srgb_gamut({static_cast<double>(L), static_cast<double>(a), static_cast<double>(b)})) {
          centers.push_back({a, b});
          break;
        }
  return AbBinTable(std::move(centers));
}

AbBinTable AbBinTable::from_json(const nlohmann::json& j) {
  if (j.value("spacing", 0) != kSpacing) throw InvalidInput("ab bin table spacing must be 10");
  std::vector<std::array<int, 2>> centers;
  for (const auto& c : j.at("centers")) centers.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
  if (j.contains("count") && j.at("count").get<std::size_t>() != centers.size())
    throw InvalidInput("ab bin table count does not match its centers");
  return AbBinTable(std::move(centers));
}

nlohmann::json AbBinTable::to_json() const {
  nlohmann::json centers = nlohmann::json::array();
  for (const auto& c : centers_) centers.push_back({c[0], c[1]});
  return {{"spacing", kSpacing}, {"count", centers_.size()}, {"centers", std::move(centers)}};
}

int AbBinTable::index_of(int a, int b) const {
  const int slot = grid_slot(a, b);
  return slot < 0 ? -1 : grid_[slot];
}

int quantize_ab(const LabColor& color, const AbBinTable& table) {
  const double ra = std::round(color.a / AbBinTable::kSpacing) * AbBinTable::kSpacing;
  const double rb = std::round(color.b / AbBinTable::kSpacing) * AbBinTable::kSpacing;
  if (std::abs(ra) <= AbBinTable::kExtent && std::abs(rb) <= AbBinTable::kExtent) {
    const int hit = table.index_of(static_cast<int>(ra), static_cast<int>(rb));
    if (hit >= 0) return hit;
  }
  // The rounded grid point is not a kept bin: fall back to a full scan.
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  const auto& centers = table.centers();
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double da = color.a - centers[i][0], db = color.b - centers[i][1];
    const double d = da * da + db * db;
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace pf
