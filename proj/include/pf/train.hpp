#pragma once

// Alternating discriminator/generator training for both networks.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pf/image.hpp"
#include "pf/pat_data.hpp"
#include "pf/pcn.hpp"
#include "pf/tpn.hpp"

namespace pf {

struct TrainConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int epochs = 500;
  int batch_size = 32;
  double delta = kHuberDelta;
  double lambda_h = kTpnLambdaHuber;
  double lambda_kl = kTpnLambdaKl;
  double init_std = 0.05;
  std::uint64_t seed = 0;
  long max_steps = 0;        // cap on generator updates, 0 = no cap
  int checkpoint_every = 0;  // epochs between intermediate checkpoints, 0 = only at the end
  std::filesystem::path checkpoint_path;  // empty = keep in memory only

  static TrainConfig tpn_defaults();
  static TrainConfig pcn_defaults();
  nlohmann::json to_json() const;
  void validate() const;
};

struct EpochLoss {
  int epoch = 0;
  double d_loss = 0, g_loss = 0, huber = 0, kl = 0;
};

struct LossHistory {
  std::vector<EpochLoss> epochs;

  std::string to_csv() const;
  void save_csv(const std::filesystem::path& path) const;
};

struct StepReport {
  int epoch = 0;
  long step = 0;  // generator updates so far, including this one
  double d_loss = 0, g_loss = 0, huber = 0, kl = 0;
};

// Return false to stop training after the current step.
using StepCallback = std::function<bool(const StepReport&)>;

struct TrainResult {
  LossHistory history;
  long steps = 0;
  std::size_t palette_extractions = 0;  // PCN only
};

// The model must already be initialized (weights and embeddings).
TrainResult train_tpn(TpnModel& model, const std::vector<PatRecord>& records, const TrainConfig& config,
                      const StepCallback& on_step = {});

// Dominant palettes of training images, extracted on first use.
class PaletteCache {
 public:
  const Palette& get(std::size_t index, const RgbImage& image);
  std::size_t extractions() const { return extractions_; }
  std::size_t size() const { return cache_.size(); }

 private:
  std::map<std::size_t, Palette> cache_;
  std::size_t extractions_ = 0;
};

struct PcnDataset {
  std::vector<std::string> names;
  std::vector<RgbImage> images;

  // Every .png/.jpg/.jpeg file in the directory, sorted by name.
  static PcnDataset from_dir(const std::filesystem::path& dir);
};

TrainResult train_pcn(PcnModel& model, const std::vector<RgbImage>& images, const TrainConfig& config,
                      const StepCallback& on_step = {});

// Mean normalized ab Huber of the generator on the given images, each
// conditioned on its own dominant palette.
double pcn_reconstruction_huber(const PcnModel& model, const std::vector<RgbImage>& images,
                                double delta = kHuberDelta);

}  // namespace pf
