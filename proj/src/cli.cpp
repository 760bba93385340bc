#include "pf/cli.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "pf/checkpoint.hpp"
#include "pf/error.hpp"
#include "pf/fixtures.hpp"
#include "pf/metrics.hpp"
#include "pf/pat_data.hpp"
#include "pf/pcn.hpp"
#include "pf/service.hpp"
#include "pf/tpn.hpp"
#include "pf/train.hpp"

namespace pf {
namespace {

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

struct TrainOptions {
  int epochs = -1;
  int batch_size = -1;
  double lr = -1;
  std::uint64_t seed = 0;
  long max_steps = 0;
  int checkpoint_every = 0;
  std::string history;

  TrainConfig apply(TrainConfig c) const {
    if (epochs >= 0) c.epochs = epochs;
    if (batch_size > 0) c.batch_size = batch_size;
    if (lr > 0) c.lr = lr;
    c.seed = seed;
    c.max_steps = max_steps;
    c.checkpoint_every = checkpoint_every;
    return c;
  }
};

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_option("--batch-size", o.batch_size, "Batch size");
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--max-steps", o.max_steps, "Stop after this many generator updates (0 = no cap)");
  cmd->add_option("--checkpoint-every", o.checkpoint_every, "Epochs between intermediate checkpoints");
  cmd->add_option("--history", o.history, "Write per-epoch losses to this CSV file");
}

nlohmann::json history_tail(const TrainResult& r) {
  if (r.history.epochs.empty()) return nullptr;
  const EpochLoss& e = r.history.epochs.back();
  return {{"epoch", e.epoch}, {"d_loss", e.d_loss}, {"g_loss", e.g_loss}, {"huber", e.huber}, {"kl", e.kl}};
}

TpnModel load_tpn(const std::string& path) { return TpnModel::from_section(Checkpoint::load(path).section("tpn")); }
PcnModel load_pcn(const std::string& path) { return PcnModel::from_section(Checkpoint::load(path).section("pcn")); }

}  // namespace

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text-to-palette generation and palette-guided colorization", "pf"};
  app.require_subcommand(1);

  // ingest
  std::string ingest_input, ingest_embeddings;
  std::uint64_t ingest_seed = 0;
  auto* ingest = app.add_subcommand("ingest", "Validate a PAT file and report its split");
  ingest->add_option("--input", ingest_input, "PAT JSON-lines file")->required();
  ingest->add_option("--embeddings", ingest_embeddings, "Word vector file to check coverage against");
  ingest->add_option("--seed", ingest_seed, "Split seed");

  // fixtures
  std::string fx_output, fx_images;
  std::size_t fx_count = 64, fx_image_count = 8;
  int fx_image_size = 64;
  std::uint64_t fx_seed = 0;
  auto* fixtures = app.add_subcommand("fixtures", "Write a synthetic PAT file and optional images");
  fixtures->add_option("--output", fx_output, "PAT file to write")->required();
  fixtures->add_option("--count", fx_count, "Number of records");
  fixtures->add_option("--seed", fx_seed, "Random seed");
  fixtures->add_option("--images-dir", fx_images, "Also write synthetic color images here");
  fixtures->add_option("--image-count", fx_image_count, "Number of images");
  fixtures->add_option("--image-size", fx_image_size, "Image side length");

  // train-tpn
  std::string tt_data, tt_out, tt_embeddings, tt_test_out;
  int tt_hidden = 0, tt_embed_dim = kEmbeddingDim;
  bool tt_no_split = false;
  TrainOptions tt_opts;
  auto* train_tpn_cmd = app.add_subcommand("train-tpn", "Train the text-to-palette networks");
  train_tpn_cmd->add_option("--data", tt_data, "PAT JSON-lines file")->required();
  train_tpn_cmd->add_option("--out", tt_out, "Checkpoint to write")->required();
  train_tpn_cmd->add_option("--embeddings", tt_embeddings, "Word vector file (random vectors when omitted)");
  train_tpn_cmd->add_option("--embed-dim", tt_embed_dim, "Word vector width");
  train_tpn_cmd->add_option("--hidden", tt_hidden, "Override every hidden width (encoder, condition, decoder, attention)");
  train_tpn_cmd->add_option("--test-out", tt_test_out, "Write the held-out split here");
  train_tpn_cmd->add_flag("--no-split", tt_no_split, "Train on every record");
  add_train_options(train_tpn_cmd, tt_opts);

  // train-pcn
  std::string tp_images, tp_out;
  int tp_width = PcnConfig{}.base_width, tp_size = PcnConfig{}.image_size;
  TrainOptions tp_opts;
  auto* train_pcn_cmd = app.add_subcommand("train-pcn", "Train the palette-based colorization networks");
  train_pcn_cmd->add_option("--images", tp_images, "Directory of color PNG/JPEG images")->required();
  train_pcn_cmd->add_option("--out", tp_out, "Checkpoint to write")->required();
  train_pcn_cmd->add_option("--width", tp_width, "Base channel width");
  train_pcn_cmd->add_option("--image-size", tp_size, "Training resolution (multiple of 8)");
  add_train_options(train_pcn_cmd, tp_opts);

  // sample
  std::string s_ckpt, s_text;
  int s_n = 5;
  std::uint64_t s_seed = 0;
  bool s_zero = false;
  auto* sample = app.add_subcommand("sample", "Generate palettes for a text");
  sample->add_option("--ckpt", s_ckpt, "TPN checkpoint")->required();
  sample->add_option("--text", s_text, "Input text")->required();
  sample->add_option("--n", s_n, "Number of palettes");
  sample->add_option("--seed", s_seed, "Random seed");
  sample->add_flag("--zero-noise", s_zero, "Use the mean condition instead of sampling");

  // colorize
  std::string c_ckpt, c_image, c_palette, c_out;
  auto* colorize = app.add_subcommand("colorize", "Colorize an image with a palette");
  colorize->add_option("--ckpt", c_ckpt, "PCN checkpoint")->required();
  colorize->add_option("--image", c_image, "Input PNG or JPEG")->required();
  colorize->add_option("--palette", c_palette, "Palette JSON file")->required();
  colorize->add_option("--out", c_out, "Output PNG")->required();

  // evaluate
  std::string e_ckpt, e_data;
  EvalOptions e_opts;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compute diversity, multimodality and bin KL");
  evaluate_cmd->add_option("--ckpt", e_ckpt, "TPN checkpoint")->required();
  evaluate_cmd->add_option("--data", e_data, "PAT file with the test records")->required();
  evaluate_cmd->add_option("--samples-per-text", e_opts.samples_per_text, "Palettes drawn per text");
  evaluate_cmd->add_option("--seed", e_opts.seed, "Random seed");
  evaluate_cmd->add_option("--threads", e_opts.threads, "Worker threads");
  evaluate_cmd->add_flag("--zero-noise", e_opts.zero_noise, "Use the mean condition instead of sampling");

  // serve
  ServiceOverrides sv;
  std::string sv_config;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--host", sv.host, "Bind address");
  serve->add_option("--port", sv.port, "Port (0 picks a free one)");
  serve->add_option("--tpn-ckpt", sv.tpn_checkpoint, "TPN checkpoint");
  serve->add_option("--pcn-ckpt", sv.pcn_checkpoint, "PCN checkpoint");
  serve->add_option("--gallery", sv.gallery_path, "Gallery JSON-lines file");
  serve->add_option("--static-dir", sv.static_dir, "Directory with the UI bundle");
  serve->add_option("--max-upload-bytes", sv.max_upload_bytes, "Largest accepted image upload");
  serve->add_option("--config", sv_config, "JSON config file");

  if (argc > 1 && argv[1][0] != '-') {
    const std::string name = argv[1];
    const auto subs = app.get_subcommands([&](const CLI::App* sub) { return sub->get_name() == name; });
    if (subs.empty()) {
      err << "error: unknown subcommand \"" << name << "\"\n\n" << app.help();
      return 1;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*ingest) {
      const auto records = load_pat(ingest_input);
      const Vocabulary vocab = Vocabulary::build(records);
      nlohmann::json report = {{"records", records.size()}, {"vocabulary", vocab.size()}};
      if (records.size() > test_size_for(records.size())) {
        const DataSplit s = split(records, ingest_seed);
        report["train"] = s.train.size();
        report["test"] = s.test.size();
      }
      if (!ingest_embeddings.empty()) {
        const EmbeddingTable t = load_embeddings(vocab, ingest_embeddings, ingest_seed);
        report["embeddings_from_file"] = t.from_file;
        report["embeddings_random"] = vocab.size() - 1 - t.from_file;
      }
      out << report.dump(2) << '\n';
    } else if (*fixtures) {
      save_pat(synthetic_pat(fx_count, fx_seed), fx_output);
      nlohmann::json report = {{"records", fx_count}, {"output", fx_output}};
      if (!fx_images.empty()) {
        write_synthetic_images(fx_images, fx_image_count, fx_image_size, fx_seed);
        report["images"] = fx_image_count;
        report["images_dir"] = fx_images;
      }
      out << report.dump(2) << '\n';
    } else if (*train_tpn_cmd) {
      const auto records = load_pat(tt_data);
      std::vector<PatRecord> train = records, test;
      if (!tt_no_split) {
        DataSplit s = split(records, tt_opts.seed);
        train = std::move(s.train);
        test = std::move(s.test);
        if (!tt_test_out.empty()) save_pat(test, tt_test_out);
      }
      const Vocabulary vocab = Vocabulary::build(records);
      TpnConfig cfg;
      cfg.embed_dim = tt_embed_dim;
      if (tt_hidden > 0) {
        cfg.enc_hidden = cfg.cond_dim = cfg.dec_hidden = cfg.attn_dim = tt_hidden;
        cfg.disc_hidden = {tt_hidden, tt_hidden};
      }
      const EmbeddingTable emb = tt_embeddings.empty()
                                     ? random_embeddings(vocab, tt_opts.seed, tt_embed_dim)
                                     : load_embeddings(vocab, tt_embeddings, tt_opts.seed, tt_embed_dim);
      TpnModel model(cfg, vocab);
      TrainConfig tc = tt_opts.apply(TrainConfig::tpn_defaults());
      model.initialize(emb.matrix, tc.init_std, tc.seed);
      tc.checkpoint_path = tt_out;
      const TrainResult r = train_tpn(model, train, tc);
      if (!tt_opts.history.empty()) r.history.save_csv(tt_opts.history);
      out << nlohmann::json{{"checkpoint", tt_out},
                            {"steps", r.steps},
                            {"train_records", train.size()},
                            {"test_records", test.size()},
                            {"last_epoch", history_tail(r)}}
                 .dump(2)
          << '\n';
    } else if (*train_pcn_cmd) {
      const PcnDataset ds = PcnDataset::from_dir(tp_images);
      PcnModel model(PcnConfig{tp_width, tp_size, 0.2});
      TrainConfig tc = tp_opts.apply(TrainConfig::pcn_defaults());
      model.initialize(tc.init_std, tc.seed);
      tc.checkpoint_path = tp_out;
      const TrainResult r = train_pcn(model, ds.images, tc);
      if (!tp_opts.history.empty()) r.history.save_csv(tp_opts.history);
      out << nlohmann::json{{"checkpoint", tp_out},
                            {"steps", r.steps},
                            {"images", ds.images.size()},
                            {"palette_extractions", r.palette_extractions},
                            {"last_epoch", history_tail(r)}}
                 .dump(2)
          << '\n';
    } else if (*sample) {
      const TpnModel model = load_tpn(s_ckpt);
      const PaletteSamples ps = sample_palettes(model, s_text, s_n, s_seed, s_zero);
      if (ps.all_unknown) err << "warning: no token of the text is in the vocabulary\n";
      out << samples_to_json(ps, s_text, s_seed).dump(2) << '\n';
    } else if (*colorize) {
      std::ifstream pin(c_palette);
      if (!pin) throw IoError("cannot open palette file " + c_palette);
      nlohmann::json pj;
      try {
        pj = nlohmann::json::parse(pin);
      } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("palette file is not valid JSON: ") + e.what());
      }
      const Palette palette = palette_from_json(pj);
      const RgbImage image = load_image(c_image);
      const PcnModel model = load_pcn(c_ckpt);
      save_png(colorize_full(image, palette, model), c_out);
      out << nlohmann::json{{"output", c_out}, {"width", image.width}, {"height", image.height}}.dump(2) << '\n';
    } else if (*evaluate_cmd) {
      const TpnModel model = load_tpn(e_ckpt);
      const auto test = load_pat(e_data);
      out << evaluate(model, test, e_opts, AbBinTable::build()).to_json().dump(2) << '\n';
    } else if (*serve) {
      const ServiceConfig cfg = resolve_service_config(
          sv, process_env(), sv_config.empty() ? std::nullopt : std::optional<std::filesystem::path>(sv_config));
      Service service(cfg);
      const int port = service.bind();
      err << "listening on " << cfg.host << ':' << port << std::endl;
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.serve();
      g_service = nullptr;
    }
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace pf
