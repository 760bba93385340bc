#include "pf/pcn.hpp"

#include <algorithm>

#include "pf/error.hpp"

namespace pf {

nlohmann::json PcnConfig::to_json() const {
  return {{"base_width", base_width}, {"image_size", image_size}, {"leaky_slope", leaky_slope}};
}

PcnConfig PcnConfig::from_json(const nlohmann::json& j) {
  PcnConfig c;
  c.base_width = j.value("base_width", c.base_width);
  c.image_size = j.value("image_size", c.image_size);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.validate();
  return c;
}

void PcnConfig::validate() const {
  if (base_width <= 0) throw InvalidInput("PCN base width must be positive");
  if (image_size < 8 || image_size % 8 != 0)
    throw InvalidInput("PCN image size must be a positive multiple of 8, got " + std::to_string(image_size));
}

ImageSample ImageSample::from_image(const RgbImage& image, int size) {
  if (image.empty()) throw InvalidInput("empty image");
  const RgbImage scaled =
      image.width == size && image.height == size ? image : resize_bilinear(image, size, size);
  ImageSample s;
  s.height = s.width = size;
  s.L = Tensor({1, size, size});
  s.ab = Tensor({2, size, size});
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (std::size_t i = 0; i < plane; ++i) {
    const LabColor lab = rgb_to_lab(scaled.pixels[i]);
    s.L[i] = normalize_l(lab.L);
    s.ab[i] = normalize_ab(lab.a);
    s.ab[plane + i] = normalize_ab(lab.b);
  }
  return s;
}

Tensor palette_rows(const std::vector<Palette>& palettes) {
  const int F = static_cast<int>(Palette::kFlatSize);
  Tensor out({static_cast<int>(palettes.size()), F});
  for (std::size_t r = 0; r < palettes.size(); ++r) {
    const auto n = palettes[r].normalized();
    std::copy(n.begin(), n.end(), out.data() + r * Palette::kFlatSize);
  }
  return out;
}

PcnModel::PcnModel(PcnConfig config) : config_(config) {
  config_.validate();
  const int w = config_.base_width;
  const int widths[] = {w, 2 * w, 4 * w, 8 * w};
  int in = static_cast<int>(Palette::kFlatSize);
  for (int i = 0; i < 4; ++i) {
    cond_.emplace_back(params_, "cond.fc" + std::to_string(i + 1), in, widths[i]);
    in = widths[i];
  }
  conv1_ = nn::Conv2d(params_, "unet.conv1", 1, w, 3, 1, 1);
  conv2_ = nn::Conv2d(params_, "unet.conv2", w, 2 * w, 3, 2, 1);
  conv3_ = nn::Conv2d(params_, "unet.conv3", 2 * w, 4 * w, 3, 2, 1);
  conv4_ = nn::Conv2d(params_, "unet.conv4", 4 * w, 8 * w, 3, 2, 1);
  conv5_ = nn::Conv2d(params_, "unet.conv5", 8 * w, 8 * w, 3, 1, 1);
  conv6_ = nn::Conv2d(params_, "unet.conv6", 8 * w, 8 * w, 3, 1, 1);
  conv7_ = nn::Conv2d(params_, "unet.conv7", 8 * w + 4 * w, 4 * w, 3, 1, 1);
  conv8_ = nn::Conv2d(params_, "unet.conv8", 4 * w + 2 * w, 2 * w, 3, 1, 1);
  conv9_ = nn::Conv2d(params_, "unet.conv9", 2 * w + w, w, 3, 1, 1);
  conv10_ = nn::Conv2d(params_, "unet.conv10", w, 2, 3, 1, 1);

  in = 3 + static_cast<int>(Palette::kFlatSize);
  int side = config_.image_size;
  for (int i = 0; i < 3; ++i) {
    disc_convs_.emplace_back(params_, "disc.conv" + std::to_string(i + 1), in, widths[i], 4, 2, 1, i == 0);
    if (i > 0) disc_norms_.emplace_back(params_, "disc.bn" + std::to_string(i + 1), widths[i]);
    in = widths[i];
    side /= 2;
  }
  disc_fc_ = nn::Linear(params_, "disc.fc", in * side * side, 1);
}

void PcnModel::initialize(double init_std, std::uint64_t seed) { nn::init_weights(params_, init_std, seed); }

std::vector<ag::Var> PcnModel::generator_params() const {
  std::vector<ag::Var> out;
  for (const auto& p : params_.params())
    if (p.kind != nn::ParamKind::Buffer && !p.name.starts_with("disc.")) out.push_back(p.var);
  return out;
}

std::vector<ag::Var> PcnModel::discriminator_params() const { return params_.trainable_with_prefix("disc."); }

ConditionFeatures PcnModel::condition_features(const ag::Var& palette) const {
  if (palette.value().rank() != 2 || palette.dim(1) != static_cast<int>(Palette::kFlatSize))
    throw ShapeError("palette batch must be [B, 15], got " + shape_str(palette.shape()));
  std::vector<ag::Var> stages;
  ag::Var x = palette;
  for (const auto& layer : cond_) {
    x = ag::relu(layer(x));
    stages.push_back(x);
  }
  return {stages[0], stages[1], stages[3]};
}

ag::Var PcnModel::colorize(const ag::Var& L, const ag::Var& palette) const {
  const Shape& s = L.shape();
  if (s.size() != 4 || s[1] != 1) throw ShapeError("lightness batch must be [B, 1, H, W], got " + shape_str(s));
  if (s[2] % 8 != 0 || s[3] % 8 != 0) throw ShapeError("lightness height and width must be multiples of 8");
  if (palette.dim(0) != s[0]) throw ShapeError("palette and image batch sizes differ");
  const ConditionFeatures cf = condition_features(palette);

  const ag::Var c1 = ag::relu(conv1_(L));
  const ag::Var c2 = ag::relu(conv2_(c1));
  const ag::Var c3 = ag::relu(conv3_(c2));
  const ag::Var c4 = ag::relu(ag::add_spatial(conv4_(c3), cf.stage4));
  const ag::Var c5 = ag::relu(conv5_(c4));
  const ag::Var c6 = ag::relu(conv6_(c5));
  const ag::Var c7 = ag::relu(conv7_(ag::concat_channels(ag::upsample_nearest2x(c6), c3)));
  const ag::Var c8 = ag::relu(ag::add_spatial(conv8_(ag::concat_channels(ag::upsample_nearest2x(c7), c2)), cf.stage2));
  const ag::Var c9 = ag::relu(ag::add_spatial(conv9_(ag::concat_channels(ag::upsample_nearest2x(c8), c1)), cf.stage1));
  return ag::tanh(conv10_(c9));
}

ag::Var PcnModel::discriminate(const ag::Var& palette, const ag::Var& lab, bool training) const {
  const Shape& s = lab.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != config_.image_size || s[3] != config_.image_size)
    throw ShapeError("discriminator input must be [B, 3, " + std::to_string(config_.image_size) + ", " +
                     std::to_string(config_.image_size) + "], got " + shape_str(s));
  if (palette.dim(0) != s[0]) throw ShapeError("palette and image batch sizes differ");
  ag::Var x = ag::concat_channels(lab, ag::broadcast_spatial(palette, s[2], s[3]));
  for (std::size_t i = 0; i < disc_convs_.size(); ++i) {
    x = disc_convs_[i](x);
    if (i > 0) x = disc_norms_[i - 1](x, training);
    x = ag::leaky_relu(x, config_.leaky_slope);
  }
  const int flat = x.dim(1) * x.dim(2) * x.dim(3);
  return ag::sigmoid(disc_fc_(ag::reshape(x, {s[0], flat})));
}

std::string PcnModel::config_hash() const { return fnv1a_hex(config_.to_json().dump()); }

CheckpointSection PcnModel::to_section() const {
  CheckpointSection s;
  s.meta = {{"kind", "pcn"}, {"config", config_.to_json()}, {"config_hash", config_hash()}};
  store_params(params_, s);
  return s;
}

PcnModel PcnModel::from_section(const CheckpointSection& section) {
  if (section.meta.value("kind", "") != "pcn") throw InvalidInput("checkpoint section is not a PCN model");
  PcnModel model(PcnConfig::from_json(section.meta.at("config")));
  if (section.meta.contains("config_hash") && section.meta.at("config_hash") != model.config_hash())
    throw InvalidInput("PCN checkpoint config hash mismatch");
  restore_params(model.params_, section);
  return model;
}

RgbImage colorize_full(const RgbImage& image, const Palette& palette, const PcnModel& model) {
  if (image.empty()) throw InvalidInput("empty image");
  ag::NoGradGuard no_grad;
  const int W = image.width, H = image.height, S = model.config().image_size;
  const std::size_t n = static_cast<std::size_t>(W) * H;
  std::vector<LabColor> lab(n);
  std::vector<double> l_norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    lab[i] = rgb_to_lab(image.pixels[i]);
    l_norm[i] = normalize_l(lab[i].L);
  }
  const std::vector<double> l_small = resize_plane(l_norm, W, H, S, S);
  const ag::Var L = ag::constant(Tensor({1, 1, S, S}, l_small));
  const ag::Var ab = model.colorize(L, ag::constant(palette_rows({palette})));

  const std::size_t plane = static_cast<std::size_t>(S) * S;
  const auto ab_data = ab.value().values();
  const std::vector<double> a = resize_plane(ab_data.subspan(0, plane), S, S, W, H);
  const std::vector<double> b = resize_plane(ab_data.subspan(plane, plane), S, S, W, H);
  RgbImage out(W, H);
  for (std::size_t i = 0; i < n; ++i)
    out.pixels[i] = lab_to_rgb({lab[i].L, denormalize_ab(a[i]), denormalize_ab(b[i])});
  return out;
}

}  // namespace pf
