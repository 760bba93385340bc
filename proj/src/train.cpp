#include "pf/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "pf/error.hpp"
#include "pf/median_cut.hpp"
#include "pf/seed.hpp"

namespace pf {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kNoiseStream = 0x4e4f495345ULL;

struct Running {
  double d = 0, g = 0, huber = 0, kl = 0;
  int n = 0;
  void add(const StepReport& r) {
    d += r.d_loss;
    g += r.g_loss;
    huber += r.huber;
    kl += r.kl;
    ++n;
  }
  EpochLoss finish(int epoch) const {
    if (n == 0) return {epoch, 0, 0, 0, 0};
    return {epoch, d / n, g / n, huber / n, kl / n};
  }
};

void guard(const StepReport& r) {
  if (std::isfinite(r.d_loss) && std::isfinite(r.g_loss) && std::isfinite(r.huber) && std::isfinite(r.kl)) return;
  std::ostringstream msg;
  msg << "training diverged at epoch " << r.epoch << ", step " << r.step << ": d_loss=" << r.d_loss
      << " g_loss=" << r.g_loss << " huber=" << r.huber << " kl=" << r.kl;
  throw TrainingDiverged(msg.str());
}

void save_section(const std::filesystem::path& path, const std::string& name, CheckpointSection section) {
  if (path.empty()) return;
  Checkpoint ck;
  ck.sections[name] = std::move(section);
  ck.save(path);
}

Tensor normalize_palettes(const Tensor& raw) {
  Tensor out(raw.shape());
  for (std::size_t i = 0; i < raw.size(); ++i)
    out[i] = (i % 3 == 0) ? normalize_l(raw[i]) : normalize_ab(raw[i]);
  return out;
}

void adam_step(nn::Adam& opt, const std::vector<ag::Var>& params, const ag::Var& loss) {
  for (const auto& p : params) p.zero_grad();
  loss.backward();
  opt.step();
}

}  // namespace

TrainConfig TrainConfig::tpn_defaults() { return {}; }

TrainConfig TrainConfig::pcn_defaults() {
  TrainConfig c;
  c.epochs = 100;
  c.batch_size = 8;
  c.lambda_h = kPcnLambdaHuber;
  c.lambda_kl = 0;
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"delta", delta},
          {"lambda_h", lambda_h},
          {"lambda_kl", lambda_kl},
          {"init_std", init_std},
          {"seed", seed},
          {"max_steps", max_steps}};
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw InvalidInput("learning rate must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw InvalidInput("Adam betas must lie in [0, 1)");
  if (epochs < 0) throw InvalidInput("epochs must be non-negative");
  if (batch_size <= 0) throw InvalidInput("batch size must be positive");
  if (!(delta > 0)) throw InvalidInput("Huber delta must be positive");
  if (lambda_h < 0 || lambda_kl < 0) throw InvalidInput("loss weights must be non-negative");
  if (!(init_std > 0)) throw InvalidInput("init std must be positive");
  if (max_steps < 0 || checkpoint_every < 0) throw InvalidInput("step and checkpoint limits must be non-negative");
}

std::string LossHistory::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,d_loss,g_loss,huber,kl\n";
  for (const auto& e : epochs) out << e.epoch << ',' << e.d_loss << ',' << e.g_loss << ',' << e.huber << ',' << e.kl << '\n';
  return out.str();
}

void LossHistory::save_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_csv();
}

TrainResult train_tpn(TpnModel& model, const std::vector<PatRecord>& records, const TrainConfig& config,
                      const StepCallback& on_step) {
  config.validate();
  if (records.empty()) throw InvalidInput("TPN training needs at least one record");
  const auto g_params = model.generator_params();
  const auto d_params = model.discriminator_params();
  nn::Adam opt_g(g_params, config.lr, config.beta1, config.beta2);
  nn::Adam opt_d(d_params, config.lr, config.beta1, config.beta2);
  const int D = model.config().cond_dim;

  TrainResult result;
  bool stop = false;
  for (int epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
    BatchStream stream(records, config.batch_size, model.vocab(), nullptr,
                       derive_seed(config.seed ^ kShuffleStream, static_cast<std::uint64_t>(epoch)), true);
    Running run;
    while (auto batch = stream.next()) {
      const TextInput text = TextInput::from_batch(*batch);
      const ag::Var y = ag::constant(normalize_palettes(batch->palettes));
      const auto eps = sample_noise(text.length(), text.batch(), D,
                                    derive_seed(config.seed ^ kNoiseStream, static_cast<std::uint64_t>(result.steps)));
      const TpnForward fwd = model.generate(text, eps);

      const ag::Var c_bar = fwd.cond.c_bar.detach();
      const ag::Var d_loss =
          tpn_d_loss(model.discriminate(c_bar, y), model.discriminate(c_bar, fwd.out.palette.detach()));
      adam_step(opt_d, d_params, d_loss);

      const ag::Var d_fake = model.discriminate(fwd.cond.c_bar, fwd.out.palette);
      const ag::Var huber = huber_loss(fwd.out.palette, y, config.delta);
      const ag::Var kl = kl_gaussian(fwd.ca, text.mask);
      const ag::Var g_loss = ag::add(ag::add(gan_g_adversarial(d_fake), ag::scale(huber, config.lambda_h)),
                                     ag::scale(kl, config.lambda_kl));
      adam_step(opt_g, g_params, g_loss);
      ++result.steps;

      const StepReport rep{epoch, result.steps, d_loss.item(), g_loss.item(), huber.item(), kl.item()};
      guard(rep);
      run.add(rep);
      if (on_step && !on_step(rep)) stop = true;
      if (config.max_steps > 0 && result.steps >= config.max_steps) stop = true;
      if (stop) break;
    }
    result.history.epochs.push_back(run.finish(epoch));
    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0)
      save_section(config.checkpoint_path, "tpn", model.to_section());
  }
  model.params().zero_grad();
  save_section(config.checkpoint_path, "tpn", model.to_section());
  return result;
}

const Palette& PaletteCache::get(std::size_t index, const RgbImage& image) {
  auto it = cache_.find(index);
  if (it != cache_.end()) return it->second;
  ++extractions_;
  return cache_.emplace(index, extract_dominant_palette(image)).first->second;
}

PcnDataset PcnDataset::from_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  PcnDataset ds;
  for (const auto& f : files) {
    ds.names.push_back(f.filename().string());
    ds.images.push_back(load_image(f));
  }
  if (ds.images.empty()) throw InvalidInput("no PNG or JPEG images in " + dir.string());
  return ds;
}

namespace {

struct PcnBatch {
  ag::Var L, ab, palette;
};

PcnBatch make_pcn_batch(const std::vector<ImageSample>& samples, const std::vector<Palette>& palettes,
                        const std::vector<std::size_t>& idx) {
  const int B = static_cast<int>(idx.size());
  const int S = samples[idx[0]].height;
  const std::size_t plane = static_cast<std::size_t>(S) * S;
  Tensor L({B, 1, S, S}), ab({B, 2, S, S});
  std::vector<Palette> pals;
  for (int r = 0; r < B; ++r) {
    const ImageSample& s = samples[idx[static_cast<std::size_t>(r)]];
    std::copy(s.L.data(), s.L.data() + plane, L.data() + r * plane);
    std::copy(s.ab.data(), s.ab.data() + 2 * plane, ab.data() + r * 2 * plane);
    pals.push_back(palettes[idx[static_cast<std::size_t>(r)]]);
  }
  return {ag::constant(std::move(L)), ag::constant(std::move(ab)), ag::constant(palette_rows(pals))};
}

}  // namespace

TrainResult train_pcn(PcnModel& model, const std::vector<RgbImage>& images, const TrainConfig& config,
                      const StepCallback& on_step) {
  config.validate();
  if (images.empty()) throw InvalidInput("PCN training needs at least one image");
  const int S = model.config().image_size;
  std::vector<ImageSample> samples;
  for (const auto& img : images) samples.push_back(ImageSample::from_image(img, S));

  const auto g_params = model.generator_params();
  const auto d_params = model.discriminator_params();
  nn::Adam opt_g(g_params, config.lr, config.beta1, config.beta2);
  nn::Adam opt_d(d_params, config.lr, config.beta1, config.beta2);

  PaletteCache cache;
  TrainResult result;
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Palette> palettes(images.size());
  bool stop = false;
  for (int epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
    std::mt19937_64 rng(derive_seed(config.seed ^ kShuffleStream, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    Running run;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      for (std::size_t i : idx) palettes[i] = cache.get(i, images[i]);
      const PcnBatch b = make_pcn_batch(samples, palettes, idx);

      const ag::Var fake_ab = model.colorize(b.L, b.palette);
      const ag::Var real = ag::concat_channels(b.L, b.ab);
      const ag::Var fake = ag::concat_channels(b.L, fake_ab);
      const ag::Var d_loss =
          pcn_d_loss(model.discriminate(b.palette, real, true), model.discriminate(b.palette, fake.detach(), true));
      adam_step(opt_d, d_params, d_loss);

      const ag::Var huber = huber_loss(fake_ab, b.ab, config.delta);
      const ag::Var g_loss = ag::add(gan_g_adversarial(model.discriminate(b.palette, fake, true)),
                                     ag::scale(huber, config.lambda_h));
      adam_step(opt_g, g_params, g_loss);
      ++result.steps;

      const StepReport rep{epoch, result.steps, d_loss.item(), g_loss.item(), huber.item(), 0.0};
      guard(rep);
      run.add(rep);
      if (on_step && !on_step(rep)) stop = true;
      if (config.max_steps > 0 && result.steps >= config.max_steps) stop = true;
      if (stop) break;
    }
    result.history.epochs.push_back(run.finish(epoch));
    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0)
      save_section(config.checkpoint_path, "pcn", model.to_section());
  }
  model.params().zero_grad();
  result.palette_extractions = cache.extractions();
  save_section(config.checkpoint_path, "pcn", model.to_section());
  return result;
}

double pcn_reconstruction_huber(const PcnModel& model, const std::vector<RgbImage>& images, double delta) {
  if (images.empty()) throw InvalidInput("no images to evaluate");
  ag::NoGradGuard no_grad;
  double total = 0;
  for (const auto& img : images) {
    const ImageSample s = ImageSample::from_image(img, model.config().image_size);
    const int S = s.height;
    const ag::Var L = ag::constant(Tensor({1, 1, S, S}, s.L.vec()));
    const ag::Var ab = ag::constant(Tensor({1, 2, S, S}, s.ab.vec()));
    const ag::Var pred = model.colorize(L, ag::constant(palette_rows({extract_dominant_palette(img)})));
    total += huber_loss(pred, ab, delta).item();
  }
  return total / static_cast<double>(images.size());
}

}  // namespace pf
