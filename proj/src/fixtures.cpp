#include "pf/fixtures.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <random>
#include <string_view>

#include "pf/error.hpp"

namespace pf {
namespace {

struct Word {
  std::string_view text;
  Rgb8 color;
};

constexpr std::array<Word, 32> kLexicon{{
    {"red", {200, 30, 40}},       {"crimson", {150, 20, 50}},  {"orange", {240, 130, 30}},
    {"amber", {255, 180, 40}},    {"gold", {210, 170, 50}},    {"yellow", {245, 225, 60}},
    {"lime", {170, 220, 60}},     {"green", {50, 160, 70}},    {"forest", {30, 90, 45}},
    {"olive", {120, 120, 40}},    {"teal", {30, 130, 130}},    {"cyan", {70, 200, 220}},
    {"sky", {130, 190, 240}},     {"ocean", {20, 90, 160}},    {"blue", {40, 70, 200}},
    {"navy", {20, 30, 90}},       {"indigo", {75, 40, 140}},   {"violet", {150, 90, 200}},
    {"purple", {110, 40, 130}},   {"magenta", {210, 40, 160}}, {"pink", {245, 160, 190}},
    {"rose", {220, 90, 120}},     {"coral", {250, 120, 100}},  {"brown", {120, 70, 35}},
    {"chocolate", {80, 45, 25}},  {"sand", {220, 195, 145}},   {"beige", {230, 215, 180}},
    {"ivory", {250, 245, 225}},   {"gray", {128, 128, 128}},   {"charcoal", {55, 55, 60}},
    {"mint", {160, 230, 190}},    {"lavender", {200, 180, 235}},
}};

constexpr std::array<std::string_view, 6> kConnectors{"and", "with", "over", "under", "in", "meets"};

constexpr std::array<double, 5> kShade{0.0, -18.0, 14.0, -8.0, 22.0};

LabColor shaded(Rgb8 base, double dl, std::mt19937_64& rng) {
  std::normal_distribution<double> jitter(0.0, 1.5);
  LabColor c = rgb_to_lab(base);
  c.L = std::clamp(c.L + dl + jitter(rng), 0.0, 100.0);
  c.a += jitter(rng);
  c.b += jitter(rng);
  return c;
}

}  // namespace

std::vector<PatRecord> synthetic_pat(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_word(0, kLexicon.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_conn(0, kConnectors.size() - 1);
  std::uniform_int_distribution<int> pick_count(1, 3);
  std::vector<PatRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = pick_count(rng);
    std::vector<std::size_t> words;
    while (static_cast<int>(words.size()) < k) {
      const std::size_t w = pick_word(rng);
      if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    }
    std::string text(kLexicon[words[0]].text);
    for (std::size_t j = 1; j < words.size(); ++j) {
      text += ' ';
      if (j == 1 && words.size() == 2) text += std::string(kConnectors[pick_conn(rng)]) + ' ';
      text += kLexicon[words[j]].text;
    }
    std::vector<LabColor> colors;
    for (std::size_t c = 0; c < Palette::kSize; ++c)
      colors.push_back(shaded(kLexicon[words[c % words.size()]].color, kShade[c], rng));
    out.push_back({std::move(text), Palette::from_colors(colors)});
  }
  return out;
}

RgbImage band_image(const std::vector<Rgb8>& colors, int width, int height) {
  if (colors.empty() || width <= 0 || height <= 0) throw InvalidInput("band image needs colors and a positive size");
  RgbImage img(width, height);
  const int n = static_cast<int>(colors.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) img.at(x, y) = colors[static_cast<std::size_t>(x * n / width)];
  return img;
}

RgbImage synthetic_image(int size, std::uint64_t seed) {
  if (size <= 0) throw InvalidInput("image size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, kLexicon.size() - 1);
  std::uniform_int_distribution<int> coord(0, size - 1);
  const Rgb8 ground = kLexicon[pick(rng)].color;
  RgbImage img(size, size, ground);
  for (int r = 0; r < 4; ++r) {
    const Rgb8 c = kLexicon[pick(rng)].color;
    int x0 = coord(rng), x1 = coord(rng), y0 = coord(rng), y1 = coord(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    x1 = std::max(x1, x0 + size / 6);
    y1 = std::max(y1, y0 + size / 6);
    for (int y = y0; y <= std::min(y1, size - 1); ++y)
      for (int x = x0; x <= std::min(x1, size - 1); ++x) img.at(x, y) = c;
  }
  // Gentle vertical shading so lightness is not piecewise constant.
  for (int y = 0; y < size; ++y) {
    const double f = 0.85 + 0.3 * y / std::max(1, size - 1);
    for (int x = 0; x < size; ++x) {
      Rgb8& p = img.at(x, y);
      auto s = [f](std::uint8_t v) { return static_cast<std::uint8_t>(std::clamp(v * f, 0.0, 255.0)); };
      p = {s(p.r), s(p.g), s(p.b)};
    }
  }
  return img;
}

std::vector<RgbImage> synthetic_images(std::size_t n, int size, std::uint64_t seed) {
  std::vector<RgbImage> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(synthetic_image(size, seed + i));
  return out;
}

void write_synthetic_images(const std::filesystem::path& dir, std::size_t n, int size, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const auto images = synthetic_images(n, size, seed);
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "image_%03zu.png", i);
    save_png(images[i], dir / name);
  }
}

}  // namespace pf
