#include "pf/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "pf/error.hpp"
#include "pf/seed.hpp"
#include "pf/tpn.hpp"

namespace pf {
namespace {

double directed_min_distance(const Palette& p, const Palette& q) {
  double total = 0;
  for (const auto& c : p.colors()) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& d : q.colors()) best = std::min(best, ciede2000(c, d));
    total += best;
  }
  return total / static_cast<double>(Palette::kSize);
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0, 0};
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - m) * (x - m);
  return {m, std::sqrt(var / static_cast<double>(v.size()))};
}

}  // namespace

double diversity(const Palette& p) {
  const auto& c = p.colors();
  double total = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = i + 1; j < c.size(); ++j, ++pairs) total += ciede2000(c[i], c[j]);
  return total / pairs;
}

double multimodality(const std::vector<Palette>& palettes) {
  if (palettes.size() < 2) throw InvalidInput("multimodality needs at least 2 palettes");
  double total = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < palettes.size(); ++i)
    for (std::size_t j = 0; j < palettes.size(); ++j) {
      if (i == j) continue;
      total += directed_min_distance(palettes[i], palettes[j]);
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

std::vector<double> ab_distribution(const std::vector<Palette>& palettes, const AbBinTable& table) {
  if (palettes.empty()) throw InvalidInput("ab distribution of an empty palette list");
  std::vector<double> counts(table.size(), 0.0);
  for (const auto& p : palettes)
    for (const auto& c : p.colors()) counts[static_cast<std::size_t>(quantize_ab(c, table))] += 1.0;
  const double n = static_cast<double>(palettes.size() * Palette::kSize);
  double total = 0;
  for (double& v : counts) {
    v = v / n + kDistributionSmoothing;
    total += v;
  }
  for (double& v : counts) v /= total;
  return counts;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size())
    throw InvalidInput("distribution lengths differ: " + std::to_string(p.size()) + " vs " + std::to_string(q.size()));
  double kl = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0) continue;
    if (q[i] <= 0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

nlohmann::json EvalReport::to_json() const {
  return {{"diversity", {{"mean", diversity_mean}, {"std", diversity_std}}},
          {"multimodality", {{"mean", multimodality_mean}, {"std", multimodality_std}}},
          {"ground_truth_diversity", ground_truth_diversity},
          {"bin_kl", bin_kl},
          {"texts", texts},
          {"samples", samples}};
}

EvalReport evaluate(const TpnModel& model, const std::vector<PatRecord>& test, const EvalOptions& options,
                    const AbBinTable& table) {
  if (test.empty()) throw InvalidInput("evaluation needs a non-empty test set");
  if (options.samples_per_text < 2) throw InvalidInput("samples_per_text must be at least 2");
  const std::size_t n = test.size();
  std::vector<std::vector<Palette>> generated(n);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const PaletteSamples s = sample_palettes(model, test[i].text, options.samples_per_text,
                                               derive_seed(options.seed, i), options.zero_noise);
      for (const auto& sp : s.samples) generated[i].push_back(sp.palette);
    }
  };
  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(n)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  std::vector<double> div, mm, gt_div;
  std::vector<Palette> all, truth;
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0;
    for (const auto& g : generated[i]) d += diversity(g);
    div.push_back(d / static_cast<double>(generated[i].size()));
    mm.push_back(multimodality(generated[i]));
    gt_div.push_back(diversity(test[i].palette));
    truth.push_back(test[i].palette);
    all.insert(all.end(), generated[i].begin(), generated[i].end());
  }
  EvalReport r;
  std::tie(r.diversity_mean, r.diversity_std) = mean_std(div);
  std::tie(r.multimodality_mean, r.multimodality_std) = mean_std(mm);
  r.ground_truth_diversity = mean_std(gt_div).first;
  r.bin_kl = kl_divergence(ab_distribution(truth, table), ab_distribution(all, table));
  r.texts = n;
  r.samples = all.size();
  return r;
}

}  // namespace pf
