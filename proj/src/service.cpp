#include "pf/service.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <random>

#include "pf/checkpoint.hpp"
#include "pf/error.hpp"
#include "pf/image.hpp"

namespace pf {
namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

HttpResponse json_response(int status, const nlohmann::json& body) {
  return {status, "application/json", body.dump(), {}};
}

HttpResponse error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}});
}

std::string section_hash(const std::string& name, const CheckpointSection& section) {
  Checkpoint ck;
  ck.sections[name] = section;
  return fnv1a_hex(ck.to_bytes());
}

std::optional<std::int64_t> parse_id(const std::string& s) {
  if (s.empty() || s.size() > 18) return std::nullopt;
  std::int64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

}  // namespace

nlohmann::json GalleryEntry::to_json() const {
  nlohmann::json j = {{"id", id},
                      {"timestamp", timestamp},
                      {"text", text},
                      {"palette", palette_to_json(palette)},
                      {"checkpoint_hash", checkpoint_hash}};
  j["image_path"] = image_path ? nlohmann::json(*image_path) : nlohmann::json(nullptr);
  return j;
}

GalleryEntry GalleryEntry::from_json(const nlohmann::json& j) {
  GalleryEntry e;
  e.id = j.at("id").get<std::int64_t>();
  e.timestamp = j.value("timestamp", "");
  e.text = j.value("text", "");
  e.palette = palette_from_json(j.at("palette"));
  if (j.contains("image_path") && j.at("image_path").is_string()) e.image_path = j.at("image_path").get<std::string>();
  e.checkpoint_hash = j.value("checkpoint_hash", "");
  return e;
}

Gallery::Gallery(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      GalleryEntry e = GalleryEntry::from_json(nlohmann::json::parse(line));
      next_id_ = std::max(next_id_, e.id + 1);
      entries_.push_back(std::move(e));
    } catch (const std::exception&) {
      ++skipped_;  // e.g. a line cut short by a crash mid-append
    }
  }
}

std::filesystem::path Gallery::images_dir() const {
  return path_.parent_path() / (path_.stem().string() + "_images");
}

GalleryEntry Gallery::append(GalleryEntry entry) {
  std::lock_guard lock(mu_);
  entry.id = next_id_;
  if (entry.timestamp.empty()) entry.timestamp = utc_timestamp();
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to gallery " + path_.string());
  out << entry.to_json().dump() << '\n';
  out.flush();
  if (!out) throw IoError("gallery write failed: " + path_.string());
  ++next_id_;
  entries_.push_back(entry);
  return entry;
}

std::vector<GalleryEntry> Gallery::list() const {
  std::lock_guard lock(mu_);
  return {entries_.rbegin(), entries_.rend()};
}

std::optional<GalleryEntry> Gallery::get(std::int64_t id) const {
  std::lock_guard lock(mu_);
  for (const auto& e : entries_)
    if (e.id == id) return e;
  return std::nullopt;
}

std::size_t Gallery::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
}

ServiceConfig resolve_service_config(const ServiceOverrides& cli, const EnvLookup& env,
                                     const std::optional<std::filesystem::path>& config_file) {
  ServiceConfig c;
  if (config_file) {
    std::ifstream in(*config_file);
    if (!in) throw IoError("cannot open config file " + config_file->string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("config file " + config_file->string() + ": " + e.what());
    }
    try {
      c.host = j.value("host", c.host);
      c.port = j.value("port", c.port);
      c.tpn_checkpoint = j.value("tpn_checkpoint", c.tpn_checkpoint.string());
      c.pcn_checkpoint = j.value("pcn_checkpoint", c.pcn_checkpoint.string());
      c.gallery_path = j.value("gallery_path", c.gallery_path.string());
      c.static_dir = j.value("static_dir", c.static_dir.string());
      c.max_upload_bytes = j.value("max_upload_bytes", c.max_upload_bytes);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("config file " + config_file->string() + ": " + e.what());
    }
  }
  if (auto v = env("PF_TPN_CKPT")) c.tpn_checkpoint = *v;
  if (auto v = env("PF_PCN_CKPT")) c.pcn_checkpoint = *v;
  if (auto v = env("PF_GALLERY_PATH")) c.gallery_path = *v;
  if (auto v = env("PF_PORT")) {
    try {
      std::size_t used = 0;
      c.port = std::stoi(*v, &used);
      if (used != v->size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw InvalidInput("PF_PORT is not a port number: " + *v);
    }
  }
  if (cli.host) c.host = *cli.host;
  if (cli.port) c.port = *cli.port;
  if (cli.tpn_checkpoint) c.tpn_checkpoint = *cli.tpn_checkpoint;
  if (cli.pcn_checkpoint) c.pcn_checkpoint = *cli.pcn_checkpoint;
  if (cli.gallery_path) c.gallery_path = *cli.gallery_path;
  if (cli.static_dir) c.static_dir = *cli.static_dir;
  if (cli.max_upload_bytes) c.max_upload_bytes = *cli.max_upload_bytes;
  if (c.port < 0 || c.port > 65535) throw InvalidInput("port out of range: " + std::to_string(c.port));
  return c;
}

nlohmann::json samples_to_json(const PaletteSamples& samples, std::string_view text, std::uint64_t seed) {
  nlohmann::json palettes = nlohmann::json::array(), attention = nlohmann::json::array();
  for (const auto& s : samples.samples) {
    nlohmann::json lab = nlohmann::json::array();
    for (const auto& c : s.palette.colors()) lab.push_back({c.L, c.a, c.b});
    palettes.push_back({{"lab", std::move(lab)}, {"hex", s.palette.hex()}});
    attention.push_back(s.attention);
  }
  nlohmann::json j = {{"text", text},
                      {"seed", seed},
                      {"tokens", samples.tokens},
                      {"unknown_tokens", samples.unknown_tokens},
                      {"palettes", std::move(palettes)},
                      {"attention", std::move(attention)}};
  if (samples.all_unknown) j["warning"] = "no token of the text is in the vocabulary";
  return j;
}

struct Service::Http {
  httplib::Server server;
};

Service::Service(ServiceConfig config) : Service(config, std::nullopt, std::nullopt) {}

Service::Service(ServiceConfig config, std::optional<TpnModel> tpn, std::optional<PcnModel> pcn)
    : config_(std::move(config)), tpn_(std::move(tpn)), pcn_(std::move(pcn)), gallery_(config_.gallery_path) {
  if (!tpn_ && !config_.tpn_checkpoint.empty()) {
    const Checkpoint ck = Checkpoint::load(config_.tpn_checkpoint);
    tpn_ = TpnModel::from_section(ck.section("tpn"));
  }
  if (!pcn_ && !config_.pcn_checkpoint.empty()) {
    const Checkpoint ck = Checkpoint::load(config_.pcn_checkpoint);
    pcn_ = PcnModel::from_section(ck.section("pcn"));
  }
  if (tpn_) tpn_hash_ = section_hash("tpn", tpn_->to_section());
  if (pcn_) pcn_hash_ = section_hash("pcn", pcn_->to_section());
}

Service::~Service() { stop(); }

HttpResponse Service::health() const {
  return json_response(200, {{"status", "ok"},
                             {"tpn_loaded", tpn_.has_value()},
                             {"pcn_loaded", pcn_.has_value()},
                             {"tpn_hash", tpn_hash_},
                             {"pcn_hash", pcn_hash_},
                             {"max_count", config_.max_count},
                             {"max_upload_bytes", config_.max_upload_bytes}});
}

HttpResponse Service::sample(const std::string& body) const {
  if (!tpn_) return error_response(503, "palette model not loaded");
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return error_response(400, "request body is not valid JSON");
  }
  if (!req.is_object()) return error_response(400, "request body must be a JSON object");
  if (!req.contains("text") || !req["text"].is_string()) return error_response(400, "\"text\" must be a string");
  const std::string text = req["text"].get<std::string>();
  int count = 1;
  if (req.contains("count")) {
    if (!req["count"].is_number_integer()) return error_response(400, "\"count\" must be an integer");
    const auto c = req["count"].get<std::int64_t>();
    if (c < 1 || c > config_.max_count)
      return error_response(400, "\"count\" must be between 1 and " + std::to_string(config_.max_count));
    count = static_cast<int>(c);
  }
  std::uint64_t seed;
  if (req.contains("seed") && !req["seed"].is_null()) {
    if (!req["seed"].is_number_unsigned()) return error_response(400, "\"seed\" must be a non-negative integer");
    seed = req["seed"].get<std::uint64_t>();
  } else {
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }
  try {
    const PaletteSamples s = sample_palettes(*tpn_, text, count, seed);
    return json_response(200, samples_to_json(s, text, seed));
  } catch (const InvalidInput& e) {
    return error_response(400, e.what());
  }
}

HttpResponse Service::colorize(const std::string& image_bytes, const std::string& palette_json,
                               const std::string& text) {
  if (!pcn_) return error_response(503, "colorization model not loaded");
  if (image_bytes.size() > config_.max_upload_bytes)
    return error_response(413, "image exceeds " + std::to_string(config_.max_upload_bytes) + " bytes");
  Palette palette;
  try {
    palette = palette_from_json(nlohmann::json::parse(palette_json));
  } catch (const nlohmann::json::exception&) {
    return error_response(400, "palette is not valid JSON");
  } catch (const InvalidInput& e) {
    return error_response(400, std::string("invalid palette: ") + e.what());
  }
  RgbImage image;
  try {
    image = decode_image({reinterpret_cast<const std::uint8_t*>(image_bytes.data()), image_bytes.size()});
  } catch (const InvalidInput& e) {
    return error_response(400, std::string("cannot decode image: ") + e.what());
  }
  const std::string png = encode_png(colorize_full(image, palette, *pcn_));

  GalleryEntry entry;
  entry.text = text;
  entry.palette = palette;
  entry.checkpoint_hash = pcn_hash_;
  const std::filesystem::path dir = gallery_.images_dir();
  std::filesystem::create_directories(dir);
  // Name by content so concurrent requests never collide.
  const std::filesystem::path file = dir / (fnv1a_hex(png) + ".png");
  {
    std::ofstream out(file, std::ios::binary);
    out.write(png.data(), static_cast<std::streamsize>(png.size()));
    if (!out) throw IoError("cannot write " + file.string());
  }
  entry.image_path = file.string();
  const GalleryEntry stored = gallery_.append(std::move(entry));
  return {200, "image/png", png, {{"X-Gallery-Id", std::to_string(stored.id)}}};
}

HttpResponse Service::gallery_list() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : gallery_.list()) arr.push_back(e.to_json());
  return json_response(200, arr);
}

HttpResponse Service::gallery_get(const std::string& id) const {
  const auto n = parse_id(id);
  const auto e = n ? gallery_.get(*n) : std::nullopt;
  if (!e) return error_response(404, "no gallery entry " + id);
  return json_response(200, e->to_json());
}

HttpResponse Service::gallery_image(const std::string& id) const {
  const auto n = parse_id(id);
  const auto e = n ? gallery_.get(*n) : std::nullopt;
  if (!e || !e->image_path) return error_response(404, "no image for gallery entry " + id);
  std::ifstream in(*e->image_path, std::ios::binary);
  if (!in) return error_response(404, "image file missing for gallery entry " + id);
  return {200, "image/png", std::string(std::istreambuf_iterator<char>(in), {}), {}};
}

int Service::bind() {
  http_ = std::make_unique<Http>();
  auto& srv = http_->server;
  auto send = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_content(r.body, r.content_type);
  };
  srv.set_payload_max_length(config_.max_upload_bytes + (1u << 20));
  srv.Get("/api/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  srv.Post("/api/palettes",
           [this, send](const httplib::Request& req, httplib::Response& res) { send(res, sample(req.body)); });
  srv.Post("/api/colorize", [this, send](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data() || !req.has_file("image") || !req.has_file("palette")) {
      send(res, error_response(400, "expected multipart fields \"image\" and \"palette\""));
      return;
    }
    const std::string text = req.has_file("text") ? req.get_file_value("text").content : "";
    send(res, colorize(req.get_file_value("image").content, req.get_file_value("palette").content, text));
  });
  srv.Get("/api/gallery", [this, send](const httplib::Request&, httplib::Response& res) { send(res, gallery_list()); });
  srv.Get(R"(/api/gallery/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, gallery_get(req.matches[1]));
  });
  srv.Get(R"(/api/gallery/([^/]+)/image)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, gallery_image(req.matches[1]));
  });
  srv.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      send(res, error_response(500, e.what()));
    } catch (...) {
      send(res, error_response(500, "unknown error"));
    }
  });
  srv.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
    if (res.status == 413) send(res, error_response(413, "request body too large"));
    else if (res.body.empty() && res.status >= 400) send(res, error_response(res.status, "request failed"));
  });
  if (!config_.static_dir.empty()) {
    if (!srv.set_mount_point("/", config_.static_dir.string()))
      throw IoError("static directory not found: " + config_.static_dir.string());
  }
  const int port = config_.port == 0 ? srv.bind_to_any_port(config_.host)
                                     : (srv.bind_to_port(config_.host, config_.port) ? config_.port : -1);
  if (port < 0) throw IoError("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  return port;
}

void Service::serve() {
  if (!http_) throw Error("serve() called before bind()");
  http_->server.listen_after_bind();
}

void Service::stop() {
  if (http_) http_->server.stop();
}

}  // namespace pf
