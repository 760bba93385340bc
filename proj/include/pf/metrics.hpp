#pragma once

// Palette quality metrics: diversity, multimodality and the ab-bin
// distribution divergence, all computed on true (denormalized) Lab.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "pf/color.hpp"
#include "pf/pat_data.hpp"

namespace pf {

class TpnModel;

inline constexpr double kDistributionSmoothing = 1e-8;

// Mean CIEDE2000 over the 10 unordered color pairs.
double diversity(const Palette& p);

// Over every ordered pair (P, Q) of distinct list positions: the mean over
// P's colors of the smallest CIEDE2000 to any of Q's colors. Averaging both
// directions makes the result order independent. Needs at least 2 palettes.
double multimodality(const std::vector<Palette>& palettes);

// Histogram of quantized ab bins over all colors, smoothed by
// kDistributionSmoothing per bin and renormalized.
std::vector<double> ab_distribution(const std::vector<Palette>& palettes, const AbBinTable& table);

// sum p log(p / q), natural log.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

struct EvalReport {
  double diversity_mean = 0, diversity_std = 0;
  double multimodality_mean = 0, multimodality_std = 0;
  double ground_truth_diversity = 0;
  double bin_kl = 0;  // KL(test palettes || generated palettes)
  std::size_t texts = 0;
  std::size_t samples = 0;  // palettes generated in total

  nlohmann::json to_json() const;
};

struct EvalOptions {
  int samples_per_text = 10;
  std::uint64_t seed = 0;
  bool zero_noise = false;  // collapse conditioning to its mean
  int threads = 1;
};

// Per text: diversity averaged over its samples and multimodality across
// them. The bin distribution compares every generated color with the test
// set's ground truth.
EvalReport evaluate(const TpnModel& model, const std::vector<PatRecord>& test, const EvalOptions& options,
                    const AbBinTable& table);

}  // namespace pf
