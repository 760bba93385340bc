#pragma once

// Palette-conditioned colorization: a U-Net generator predicting ab chroma
// from lightness, a 1x1 conditioning branch injecting the palette at conv4,
// conv8 and conv9, and a strided convolutional discriminator.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pf/autograd.hpp"
#include "pf/checkpoint.hpp"
#include "pf/color.hpp"
#include "pf/image.hpp"
#include "pf/nn.hpp"

namespace pf {

struct PcnConfig {
  int base_width = 64;  // conv1 width; the encoder doubles it at each stride
  int image_size = 64;  // square training resolution, multiple of 8
  double leaky_slope = 0.2;

  nlohmann::json to_json() const;
  static PcnConfig from_json(const nlohmann::json& j);
  void validate() const;
};

// One training or inference example at model resolution.
struct ImageSample {
  int height = 0, width = 0;
  Tensor L;   // [1, H, W] in [-1, 1]
  Tensor ab;  // [2, H, W] in [-1, 1]
  std::optional<Palette> palette;

  // Converts through Lab after bilinear resampling to size x size.
  static ImageSample from_image(const RgbImage& image, int size);
};

// Normalized palettes stacked into [B, 15].
Tensor palette_rows(const std::vector<Palette>& palettes);

struct ConditionFeatures {
  ag::Var stage1;  // [B, w], added at conv9
  ag::Var stage2;  // [B, 2w], added at conv8
  ag::Var stage4;  // [B, 8w], added at conv4
};

class PcnModel {
 public:
  explicit PcnModel(PcnConfig config);
  PcnModel(PcnModel&&) = default;
  PcnModel& operator=(PcnModel&&) = default;
  PcnModel(const PcnModel&) = delete;
  PcnModel& operator=(const PcnModel&) = delete;

  void initialize(double init_std, std::uint64_t seed);

  const PcnConfig& config() const { return config_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  std::vector<ag::Var> generator_params() const;
  std::vector<ag::Var> discriminator_params() const;

  // palette: [B, 15] normalized.
  ConditionFeatures condition_features(const ag::Var& palette) const;
  // L: [B, 1, H, W]; returns ab [B, 2, H, W] in [-1, 1].
  ag::Var colorize(const ag::Var& L, const ag::Var& palette) const;
  // lab: [B, 3, H, W] normalized; returns [B, 1] real scores. Training mode
  // normalizes with batch statistics and updates the running estimates.
  ag::Var discriminate(const ag::Var& palette, const ag::Var& lab, bool training) const;

  CheckpointSection to_section() const;
  static PcnModel from_section(const CheckpointSection& section);
  std::string config_hash() const;

 private:
  PcnConfig config_;
  nn::ParamSet params_;
  std::vector<nn::Linear> cond_;  // four stages
  nn::Conv2d conv1_, conv2_, conv3_, conv4_, conv5_, conv6_, conv7_, conv8_, conv9_, conv10_;
  std::vector<nn::Conv2d> disc_convs_;
  std::vector<nn::BatchNorm2d> disc_norms_;  // for disc_convs_[1..]
  nn::Linear disc_fc_;
};

// Colorizes an image of any size: the model sees its lightness at training
// resolution, the predicted ab is upsampled back and recombined with the
// original lightness.
RgbImage colorize_full(const RgbImage& image, const Palette& palette, const PcnModel& model);

}  // namespace pf
