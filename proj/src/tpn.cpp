#include "pf/tpn.hpp"

#include <algorithm>
#include <random>

#include "pf/error.hpp"
#include "pf/seed.hpp"

namespace pf {
namespace {

Tensor mask_column(const Tensor& mask, int t) {
  Tensor col({mask.dim(0)});
  for (int b = 0; b < mask.dim(0); ++b) col[b] = mask.at(b, t);
  return col;
}

bool column_all_valid(const Tensor& mask, int t) {
  for (int b = 0; b < mask.dim(0); ++b)
    if (mask.at(b, t) == 0) return false;
  return true;
}

}  // namespace

nlohmann::json TpnConfig::to_json() const {
  return {{"embed_dim", embed_dim}, {"enc_hidden", enc_hidden}, {"cond_dim", cond_dim},     {"dec_hidden", dec_hidden},
          {"attn_dim", attn_dim},   {"disc_hidden", disc_hidden}, {"leaky_slope", leaky_slope}};
}

TpnConfig TpnConfig::from_json(const nlohmann::json& j) {
  TpnConfig c;
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.enc_hidden = j.value("enc_hidden", c.enc_hidden);
  c.cond_dim = j.value("cond_dim", c.cond_dim);
  c.dec_hidden = j.value("dec_hidden", c.dec_hidden);
  c.attn_dim = j.value("attn_dim", c.attn_dim);
  c.disc_hidden = j.value("disc_hidden", c.disc_hidden);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.validate();
  return c;
}

void TpnConfig::validate() const {
  if (embed_dim <= 0 || enc_hidden <= 0 || cond_dim <= 0 || dec_hidden <= 0 || attn_dim <= 0)
    throw InvalidInput("TPN dimensions must be positive");
  if (std::any_of(disc_hidden.begin(), disc_hidden.end(), [](int w) { return w <= 0; }))
    throw InvalidInput("TPN discriminator widths must be positive");
}

TpnModel::TpnModel(TpnConfig config, Vocabulary vocab) : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.validate();
  const auto& c = config_;
  embedding_ = params_.add("embedding", {static_cast<int>(vocab_.size()), c.embed_dim}, nn::ParamKind::Embedding);
  encoder_ = nn::GruCell(params_, "encoder.gru", c.embed_dim, c.enc_hidden);
  ca_fc_ = nn::Linear(params_, "ca.fc", c.enc_hidden, 2 * c.cond_dim);
  attn_s_ = nn::Linear(params_, "attention.w_s", c.dec_hidden, c.attn_dim, false);
  attn_c_ = nn::Linear(params_, "attention.w_c", c.cond_dim, c.attn_dim, false);
  attn_w_ = nn::Linear(params_, "attention.w", c.attn_dim, 1, false);
  decoder_ = nn::GruCell(params_, "decoder.gru", 3 + c.cond_dim, c.dec_hidden);
  head_ = nn::Linear(params_, "decoder.head", c.dec_hidden, 3);
  int in = c.cond_dim + static_cast<int>(Palette::kFlatSize);
  for (std::size_t i = 0; i < c.disc_hidden.size(); ++i) {
    disc_layers_.emplace_back(params_, "disc.fc" + std::to_string(i), in, c.disc_hidden[i]);
    in = c.disc_hidden[i];
  }
  disc_layers_.emplace_back(params_, "disc.out", in, 1);
}

void TpnModel::initialize(const Tensor& embeddings, double init_std, std::uint64_t seed) {
  if (embeddings.shape() != embedding_.shape())
    throw ShapeError("embedding matrix " + shape_str(embeddings.shape()) + " does not match vocabulary " +
                     shape_str(embedding_.shape()));
  nn::init_weights(params_, init_std, seed);
  embedding_.mutable_value() = embeddings;
}

std::vector<ag::Var> TpnModel::generator_params() const {
  std::vector<ag::Var> out;
  for (const auto& p : params_.params())
    if (p.kind != nn::ParamKind::Buffer && p.kind != nn::ParamKind::Embedding && !p.name.starts_with("disc."))
      out.push_back(p.var);
  return out;
}

std::vector<ag::Var> TpnModel::discriminator_params() const { return params_.trainable_with_prefix("disc."); }

ag::Var TpnModel::embed(const TextInput& text, int t) const {
  std::vector<int> ids(static_cast<std::size_t>(text.batch()));
  for (int b = 0; b < text.batch(); ++b) ids[b] = text.ids[b][t];
  return ag::gather_rows(embedding_, ids);
}

EncoderState TpnModel::encode_text(const TextInput& text) const {
  std::vector<ag::Var> x;
  for (int t = 0; t < text.length(); ++t) x.push_back(embed(text, t));
  return encode_vectors(x, text.mask);
}

EncoderState TpnModel::encode_vectors(const std::vector<ag::Var>& x, const Tensor& mask) const {
  if (x.empty()) throw InvalidInput("cannot encode an empty token sequence");
  const int B = x[0].dim(0);
  if (mask.rank() != 2 || mask.dim(0) != B || mask.dim(1) != static_cast<int>(x.size()))
    throw ShapeError("encoder mask " + shape_str(mask.shape()) + " does not match input");
  EncoderState out;
  ag::Var h = ag::constant(Tensor({B, config_.enc_hidden}));
  for (int t = 0; t < static_cast<int>(x.size()); ++t) {
    if (x[t].dim(1) != config_.embed_dim) throw ShapeError("token vectors must have width " + std::to_string(config_.embed_dim));
    const ag::Var h_new = encoder_(x[t], h);
    if (column_all_valid(mask, t)) {
      h = h_new;
    } else {
      // Padded rows carry their previous state forward.
      Tensor keep = mask_column(mask, t);
      Tensor hold(keep.shape());
      for (std::size_t i = 0; i < keep.size(); ++i) hold[i] = 1.0 - keep[i];
      h = ag::add(ag::mul_col(h_new, ag::constant(std::move(keep))), ag::mul_col(h, ag::constant(std::move(hold))));
    }
    out.h.push_back(h);
  }
  return out;
}

std::pair<ConditioningSequence, CAParams> TpnModel::condition_augment(const EncoderState& h,
                                                                      const std::vector<Tensor>& eps,
                                                                      const Tensor& mask) const {
  const int T = static_cast<int>(h.h.size());
  if (static_cast<int>(eps.size()) != T) throw ShapeError("need one noise block per token");
  const int D = config_.cond_dim;
  ConditioningSequence cond;
  CAParams ca;
  cond.mask = mask;
  const int B = mask.dim(0);
  ag::Var weighted;
  for (int t = 0; t < T; ++t) {
    const ag::Var stats = ca_fc_(h.h[t]);
    const ag::Var mu = ag::slice_cols(stats, 0, D);
    const ag::Var sigma = ag::exp(ag::scale(ag::slice_cols(stats, D, D), 0.5));
    if (eps[t].shape() != mu.shape()) throw ShapeError("noise block shape " + shape_str(eps[t].shape()));
    const ag::Var c = ag::add(mu, ag::mul(sigma, ag::constant(eps[t])));
    ca.mu.push_back(mu);
    ca.sigma.push_back(sigma);
    cond.c_hat.push_back(c);
    const ag::Var part = ag::mul_col(c, ag::constant(mask_column(mask, t)));
    weighted = weighted.defined() ? ag::add(weighted, part) : part;
  }
  Tensor inv_count({B});
  for (int b = 0; b < B; ++b) {
    double n = 0;
    for (int t = 0; t < T; ++t) n += mask.at(b, t);
    if (n == 0) throw InvalidInput("every text needs at least one token");
    inv_count[b] = 1.0 / n;
  }
  cond.c_bar = ag::mul_col(weighted, ag::constant(std::move(inv_count)));
  return {std::move(cond), std::move(ca)};
}

std::vector<ag::Var> TpnModel::project_conditions(const ConditioningSequence& cond) const {
  std::vector<ag::Var> proj;
  proj.reserve(cond.c_hat.size());
  for (const auto& c : cond.c_hat) proj.push_back(attn_c_(c));
  return proj;
}

Attention TpnModel::attend(const ag::Var& s_prev, const ConditioningSequence& cond,
                           const std::vector<ag::Var>& proj) const {
  // e_ij = w^T sigmoid(W_s s_{i-1} + W_c c_j)
  const ag::Var ps = attn_s_(s_prev);
  std::vector<ag::Var> scores;
  scores.reserve(proj.size());
  for (const auto& pc : proj) scores.push_back(attn_w_(ag::sigmoid(ag::add(ps, pc))));
  Attention out;
  out.weights = ag::masked_softmax_rows(ag::concat_cols(scores), cond.mask);
  for (std::size_t t = 0; t < cond.c_hat.size(); ++t) {
    const ag::Var part = ag::mul_col(cond.c_hat[t], ag::slice_cols(out.weights, static_cast<int>(t), 1));
    out.context = out.context.defined() ? ag::add(out.context, part) : part;
  }
  return out;
}

Attention TpnModel::attention(const ag::Var& s_prev, const ConditioningSequence& cond) const {
  return attend(s_prev, cond, project_conditions(cond));
}

Attention TpnModel::decode_step(DecoderState& state, const ConditioningSequence& cond) const {
  if (state.step >= kPaletteSteps) throw InvalidInput("decoder already emitted five colors");
  Attention att = attention(state.s, cond);
  state.s = decoder_(ag::concat_cols({state.last_color, att.context}), state.s);
  state.last_color = ag::tanh(head_(state.s));
  ++state.step;
  return att;
}

DecodedPalette TpnModel::decode_palette(const ConditioningSequence& cond) const {
  const int B = cond.mask.dim(0);
  const auto proj = project_conditions(cond);
  ag::Var s = ag::constant(Tensor({B, config_.dec_hidden}));
  ag::Var color = ag::constant(Tensor({B, 3}));
  DecodedPalette out;
  std::vector<ag::Var> colors;
  for (int i = 0; i < kPaletteSteps; ++i) {
    Attention att = attend(s, cond, proj);
    s = decoder_(ag::concat_cols({color, att.context}), s);
    color = ag::tanh(head_(s));
    colors.push_back(color);
    out.attention.push_back(att.weights);
  }
  out.palette = ag::concat_cols(colors);
  return out;
}

ag::Var TpnModel::discriminate(const ag::Var& c_bar, const ag::Var& palette) const {
  ag::Var x = ag::concat_cols({c_bar, palette});
  for (std::size_t i = 0; i + 1 < disc_layers_.size(); ++i) x = ag::leaky_relu(disc_layers_[i](x), config_.leaky_slope);
  return ag::sigmoid(disc_layers_.back()(x));
}

TpnForward TpnModel::generate(const TextInput& text, const std::vector<Tensor>& eps) const {
  auto [cond, ca] = condition_augment(encode_text(text), eps, text.mask);
  DecodedPalette out = decode_palette(cond);
  return {std::move(cond), std::move(ca), std::move(out)};
}

std::string TpnModel::config_hash() const { return fnv1a_hex(config_.to_json().dump()); }

CheckpointSection TpnModel::to_section() const {
  CheckpointSection s;
  s.meta = {{"kind", "tpn"}, {"config", config_.to_json()}, {"config_hash", config_hash()}, {"vocab", vocab_.tokens()}};
  store_params(params_, s);
  return s;
}

TpnModel TpnModel::from_section(const CheckpointSection& section) {
  if (section.meta.value("kind", "") != "tpn") throw InvalidInput("checkpoint section is not a TPN model");
  TpnModel model(TpnConfig::from_json(section.meta.at("config")),
                 Vocabulary(section.meta.at("vocab").get<std::vector<std::string>>()));
  if (section.meta.contains("config_hash") && section.meta.at("config_hash") != model.config_hash())
    throw InvalidInput("TPN checkpoint config hash mismatch");
  restore_params(model.params_, section);
  return model;
}

std::vector<Tensor> sample_noise(int tokens, int batch, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Tensor> out;
  for (int t = 0; t < tokens; ++t) {
    Tensor e({batch, dim});
    for (double& v : e.values()) v = normal(rng);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Tensor> zero_noise(int tokens, int batch, int dim) {
  return std::vector<Tensor>(static_cast<std::size_t>(tokens), Tensor({batch, dim}));
}

PaletteSamples sample_palettes(const TpnModel& model, std::string_view text, int n, std::uint64_t seed,
                               bool use_zero_noise) {
  if (n < 1) throw InvalidInput("sample count must be at least 1");
  ag::NoGradGuard no_grad;
  const EncodedText enc = encode_text(text, model.vocab());
  PaletteSamples out;
  out.tokens = enc.tokens;
  out.unknown_tokens = enc.unknown;
  out.all_unknown = enc.unknown.size() == enc.tokens.size();

  // One pass per sample: results do not depend on n or on batch layout.
  const int T = static_cast<int>(enc.ids.size());
  const TextInput input{{enc.ids}, Tensor({1, T}, 1.0)};
  const int D = model.config().cond_dim;
  for (int r = 0; r < n; ++r) {
    const auto eps = use_zero_noise ? zero_noise(T, 1, D) : sample_noise(T, 1, D, derive_seed(seed, r));
    const TpnForward fwd = model.generate(input, eps);
    SampledPalette sp{Palette::from_normalized(fwd.out.palette.value().values()), {}};
    for (const auto& att : fwd.out.attention) sp.attention.push_back(att.value().vec());
    out.samples.push_back(std::move(sp));
  }
  return out;
}

}  // namespace pf
