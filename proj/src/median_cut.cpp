#include "pf/median_cut.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "pf/error.hpp"

namespace pf {
namespace {

constexpr int kBits = 5;
constexpr int kShift = 8 - kBits;
constexpr int kSide = 1 << kBits;
constexpr double kPopulationFraction = 0.75;

struct Bin {
  std::uint64_t count = 0;
  std::array<std::uint64_t, 3> sum{};
};

int bin_index(const std::array<int, 3>& c) { return (c[0] << (2 * kBits)) | (c[1] << kBits) | c[2]; }
std::array<int, 3> bin_coords(int index) {
  return {(index >> (2 * kBits)) & (kSide - 1), (index >> kBits) & (kSide - 1), index & (kSide - 1)};
}

struct Box {
  std::vector<int> bins;  // occupied histogram slots
  std::array<int, 3> lo{}, hi{};
  std::uint64_t count = 0;

  void refit(const std::vector<Bin>& hist) {
    lo = {kSide, kSide, kSide};
    hi = {-1, -1, -1};
    count = 0;
    for (int idx : bins) {
      const auto c = bin_coords(idx);
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], c[a]);
        hi[a] = std::max(hi[a], c[a]);
      }
      count += hist[idx].count;
    }
  }
  bool splittable() const { return bins.size() > 1; }
  double volume() const {
    return static_cast<double>(hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1) * (hi[2] - lo[2] + 1);
  }
  int longest_axis() const {
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    return axis;
  }
};

std::pair<Box, Box> split(const Box& box, const std::vector<Bin>& hist) {
  const int axis = box.longest_axis();
  std::vector<int> order = box.bins;
  std::sort(order.begin(), order.end(), [axis](int x, int y) {
    const int cx = bin_coords(x)[axis], cy = bin_coords(y)[axis];
    return cx != cy ? cx < cy : x < y;
  });
  // First coordinate at which the running population passes half.
  std::uint64_t running = 0;
  int median = bin_coords(order.back())[axis];
  for (int idx : order) {
    running += hist[idx].count;
    if (2 * running > box.count) {
      median = bin_coords(idx)[axis];
      break;
    }
  }
  // The cut plane sits halfway into the longer side beyond the median. Boxes
  // are tight, so lo and hi are occupied and a cut in [lo, hi) leaves both
  // halves non-empty.
  const int lo = box.lo[axis], hi = box.hi[axis];
  const int below = median - lo, above = hi - median;
  const int cut = below <= above ? std::min(hi - 1, median + above / 2) : std::max(lo, median - 1 - (below + 1) / 2);
  Box left, right;
  for (int idx : order) (bin_coords(idx)[axis] <= cut ? left : right).bins.push_back(idx);
  left.refit(hist);
  right.refit(hist);
  return {std::move(left), std::move(right)};
}

// Splits the highest-priority splittable box until `target` boxes exist or
// nothing can be split.
template <class Priority>
void split_until(std::vector<Box>& boxes, std::size_t target, const std::vector<Bin>& hist, Priority priority) {
  while (boxes.size() < target) {
    auto best = boxes.end();
    for (auto it = boxes.begin(); it != boxes.end(); ++it) {
      if (!it->splittable()) continue;
      if (best == boxes.end() || priority(*it) > priority(*best)) best = it;
    }
    if (best == boxes.end()) return;
    auto [left, right] = split(*best, hist);
    *best = std::move(left);
    boxes.push_back(std::move(right));
  }
}

}  // namespace

std::vector<LabColor> extract_dominant_colors(const RgbImage& image, int k) {
  if (image.empty() || image.width <= 0 || image.height <= 0) throw InvalidInput("image has no pixels");
  if (k < 1) throw InvalidInput("palette size must be at least 1");

  std::vector<Bin> hist(static_cast<std::size_t>(kSide) * kSide * kSide);
  for (const Rgb8& p : image.pixels) {
    Bin& bin = hist[bin_index({p.r >> kShift, p.g >> kShift, p.b >> kShift})];
    ++bin.count;
    bin.sum[0] += p.r;
    bin.sum[1] += p.g;
    bin.sum[2] += p.b;
  }

  Box all;
  for (int i = 0; i < static_cast<int>(hist.size()); ++i)
    if (hist[i].count) all.bins.push_back(i);
  all.refit(hist);
  std::vector<Box> boxes{std::move(all)};

  const auto by_population = static_cast<std::size_t>(std::ceil(kPopulationFraction * k));
  split_until(boxes, by_population, hist, [](const Box& b) { return static_cast<double>(b.count); });
  split_until(boxes, static_cast<std::size_t>(k), hist,
              [](const Box& b) { return static_cast<double>(b.count) * b.volume(); });

  struct Swatch {
    std::uint64_t count;
    Rgb8 mean;
  };
  std::vector<Swatch> swatches;
  for (const Box& box : boxes) {
    std::array<std::uint64_t, 3> s{};
    for (int idx : box.bins)
      for (int a = 0; a < 3; ++a) s[a] += hist[idx].sum[a];
    auto avg = [&](int a) {
      return static_cast<std::uint8_t>(std::lround(static_cast<double>(s[a]) / static_cast<double>(box.count)));
    };
    swatches.push_back({box.count, {avg(0), avg(1), avg(2)}});
  }
  auto by_count = [](const Swatch& x, const Swatch& y) { return x.count != y.count ? x.count > y.count : x.mean < y.mean; };
  std::sort(swatches.begin(), swatches.end(), by_count);

  const std::size_t distinct = swatches.size();
  for (std::size_t i = 0; swatches.size() < static_cast<std::size_t>(k); ++i) {
    const Swatch again = swatches[i % distinct];
    swatches.push_back(again);
  }
  std::stable_sort(swatches.begin(), swatches.end(), by_count);

  std::vector<LabColor> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back(rgb_to_lab(swatches[i].mean));
  return out;
}

Palette extract_dominant_palette(const RgbImage& image) {
  return Palette::from_colors(extract_dominant_colors(image, static_cast<int>(Palette::kSize)));
}

}  // namespace pf
