#pragma once

// HTTP inference service: palette sampling, colorization and an append-only
// gallery of colorized results.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pf/color.hpp"
#include "pf/pcn.hpp"
#include "pf/tpn.hpp"

namespace pf {

struct GalleryEntry {
  std::int64_t id = 0;
  std::string timestamp;  // UTC, ISO 8601
  std::string text;
  Palette palette;
  std::optional<std::string> image_path;
  std::string checkpoint_hash;

  nlohmann::json to_json() const;
  static GalleryEntry from_json(const nlohmann::json& j);
};

// JSON-lines store. Appends are serialized and flushed line by line; ids
// continue from the largest id on disk.
class Gallery {
 public:
  explicit Gallery(std::filesystem::path path);

  // Assigns id and timestamp, persists, returns the stored entry.
  GalleryEntry append(GalleryEntry entry);
  std::vector<GalleryEntry> list() const;  // newest first
  std::optional<GalleryEntry> get(std::int64_t id) const;
  std::size_t size() const;
  // Lines that could not be parsed when the file was opened.
  std::size_t skipped() const { return skipped_; }

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path images_dir() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::vector<GalleryEntry> entries_;
  std::int64_t next_id_ = 1;
  std::size_t skipped_ = 0;
};

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::filesystem::path tpn_checkpoint;
  std::filesystem::path pcn_checkpoint;
  std::filesystem::path gallery_path = "gallery.jsonl";
  std::filesystem::path static_dir;
  std::size_t max_upload_bytes = 10u << 20;
  int max_count = 20;
};

// Unset fields fall through to the next layer.
struct ServiceOverrides {
  std::optional<std::string> host;
  std::optional<int> port;
  std::optional<std::filesystem::path> tpn_checkpoint, pcn_checkpoint, gallery_path, static_dir;
  std::optional<std::size_t> max_upload_bytes;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

// Precedence: command-line flags, then PF_TPN_CKPT / PF_PCN_CKPT / PF_PORT /
// PF_GALLERY_PATH, then the optional JSON config file, then defaults.
ServiceConfig resolve_service_config(const ServiceOverrides& cli, const EnvLookup& env,
                                     const std::optional<std::filesystem::path>& config_file);

// JSON body shared by the CLI and the service.
nlohmann::json samples_to_json(const PaletteSamples& samples, std::string_view text, std::uint64_t seed);

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
};

class Service {
 public:
  // Loads whichever checkpoints the config names.
  explicit Service(ServiceConfig config);
  Service(ServiceConfig config, std::optional<TpnModel> tpn, std::optional<PcnModel> pcn);
  ~Service();

  const ServiceConfig& config() const { return config_; }
  Gallery& gallery() { return gallery_; }

  HttpResponse health() const;
  // {"text", "count", "seed"?}
  HttpResponse sample(const std::string& body) const;
  HttpResponse colorize(const std::string& image_bytes, const std::string& palette_json, const std::string& text);
  HttpResponse gallery_list() const;
  HttpResponse gallery_get(const std::string& id) const;
  HttpResponse gallery_image(const std::string& id) const;

  // Binds (port 0 picks a free one) and returns the bound port.
  int bind();
  // Serves until stop(); call after bind().
  void serve();
  void stop();

 private:
  ServiceConfig config_;
  std::optional<TpnModel> tpn_;
  std::optional<PcnModel> pcn_;
  std::string tpn_hash_, pcn_hash_;
  Gallery gallery_;
  struct Http;
  std::unique_ptr<Http> http_;
};

}  // namespace pf
