#pragma once

// Text-to-palette networks: a GRU text encoder, conditioning augmentation,
// an attention GRU decoder emitting five Lab colors (the generator) and a
// fully connected conditional discriminator.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pf/autograd.hpp"
#include "pf/checkpoint.hpp"
#include "pf/color.hpp"
#include "pf/losses.hpp"
#include "pf/nn.hpp"
#include "pf/pat_data.hpp"

namespace pf {

struct TpnConfig {
  int embed_dim = kEmbeddingDim;
  int enc_hidden = 150;
  int cond_dim = 150;
  int dec_hidden = 150;
  int attn_dim = 150;
  std::vector<int> disc_hidden{150, 150};
  double leaky_slope = 0.2;

  nlohmann::json to_json() const;
  static TpnConfig from_json(const nlohmann::json& j);
  void validate() const;
};

inline constexpr int kPaletteSteps = static_cast<int>(Palette::kSize);

// Token ids [B][T] with a [B, T] validity mask.
struct TextInput {
  std::vector<std::vector<int>> ids;
  Tensor mask;
  int batch() const { return static_cast<int>(ids.size()); }
  int length() const { return mask.dim(1); }
  static TextInput from_batch(const Batch& b) { return {b.ids, b.mask}; }
};

struct EncoderState {
  std::vector<ag::Var> h;  // T x [B, enc_hidden]
};

struct ConditioningSequence {
  std::vector<ag::Var> c_hat;  // T x [B, cond_dim]
  ag::Var c_bar;               // [B, cond_dim], mean over unmasked tokens
  Tensor mask;                 // [B, T]
};

struct DecoderState {
  ag::Var s;           // [B, dec_hidden]
  ag::Var last_color;  // [B, 3], normalized Lab
  int step = 0;        // colors emitted so far
};

struct Attention {
  ag::Var context;  // [B, cond_dim]
  ag::Var weights;  // [B, T], rows sum to one, zero on padding
};

struct DecodedPalette {
  ag::Var palette;                 // [B, 15] normalized Lab in [-1, 1]
  std::vector<ag::Var> attention;  // 5 x [B, T]
};

struct TpnForward {
  ConditioningSequence cond;
  CAParams ca;
  DecodedPalette out;
};

class TpnModel {
 public:
  TpnModel(TpnConfig config, Vocabulary vocab);
  TpnModel(TpnModel&&) = default;
  TpnModel& operator=(TpnModel&&) = default;
  TpnModel(const TpnModel&) = delete;
  TpnModel& operator=(const TpnModel&) = delete;

  // Weights ~ N(0, init_std^2), biases zero, embedding rows from `embeddings`.
  void initialize(const Tensor& embeddings, double init_std, std::uint64_t seed);

  const TpnConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  // Pretrained word vectors stay frozen; they are not part of either set.
  std::vector<ag::Var> generator_params() const;
  std::vector<ag::Var> discriminator_params() const;

  ag::Var embed(const TextInput& text, int t) const;
  EncoderState encode_text(const TextInput& text) const;
  // x: T x [B, embed_dim]
  EncoderState encode_vectors(const std::vector<ag::Var>& x, const Tensor& mask) const;
  // eps: T x [B, cond_dim] standard normal draws (zeros give c_hat = mu).
  std::pair<ConditioningSequence, CAParams> condition_augment(const EncoderState& h, const std::vector<Tensor>& eps,
                                                              const Tensor& mask) const;
  Attention attention(const ag::Var& s_prev, const ConditioningSequence& cond) const;
  // Runs one decoder step: attends, updates s, emits the next color.
  Attention decode_step(DecoderState& state, const ConditioningSequence& cond) const;
  DecodedPalette decode_palette(const ConditioningSequence& cond) const;
  // Probability that `palette` (normalized, [B, 15]) is real given c_bar.
  ag::Var discriminate(const ag::Var& c_bar, const ag::Var& palette) const;

  TpnForward generate(const TextInput& text, const std::vector<Tensor>& eps) const;

  CheckpointSection to_section() const;
  static TpnModel from_section(const CheckpointSection& section);
  std::string config_hash() const;

 private:
  std::vector<ag::Var> project_conditions(const ConditioningSequence& cond) const;
  Attention attend(const ag::Var& s_prev, const ConditioningSequence& cond, const std::vector<ag::Var>& proj) const;

  TpnConfig config_;
  Vocabulary vocab_;
  nn::ParamSet params_;
  ag::Var embedding_;
  nn::GruCell encoder_;
  nn::Linear ca_fc_;
  nn::Linear attn_s_, attn_c_, attn_w_;
  nn::GruCell decoder_;
  nn::Linear head_;
  std::vector<nn::Linear> disc_layers_;
};

// Standard normal noise, one [batch, dim] block per token.
std::vector<Tensor> sample_noise(int tokens, int batch, int dim, std::uint64_t seed);
std::vector<Tensor> zero_noise(int tokens, int batch, int dim);

struct SampledPalette {
  Palette palette;
  std::vector<std::vector<double>> attention;  // 5 x T
};

struct PaletteSamples {
  std::vector<std::string> tokens;
  std::vector<std::string> unknown_tokens;
  bool all_unknown = false;  // every token missing from the vocabulary
  std::vector<SampledPalette> samples;
};

// n independent conditioning draws for one text. Draw i depends only on
// (seed, i), so a longer request extends a shorter one. With zero_noise the
// draws collapse to the posterior mean and all n palettes are identical.
PaletteSamples sample_palettes(const TpnModel& model, std::string_view text, int n, std::uint64_t seed,
                               bool use_zero_noise = false);

}  // namespace pf
