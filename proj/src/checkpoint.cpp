#include "pf/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pf/error.hpp"

namespace pf {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'P', 'F', 'C', 'K', 'P', 'T', '\r', '\n'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(std::string_view bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

}  // namespace

const Tensor& CheckpointSection::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw InvalidInput("checkpoint section has no tensor " + name);
}

const CheckpointSection& Checkpoint::section(const std::string& name) const {
  auto it = sections.find(name);
  if (it == sections.end()) throw InvalidInput("checkpoint has no \"" + name + "\" section");
  return it->second;
}

std::string Checkpoint::to_bytes() const {
  nlohmann::json header{{"format", "pf-checkpoint"}, {"version", kVersion}, {"sections", nlohmann::json::object()}};
  std::size_t offset = 0;
  for (const auto& [name, sec] : sections) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [tname, t] : sec.tensors) {
      entries.push_back({{"name", tname}, {"shape", t.shape()}, {"offset", offset}});
      offset += t.size();
    }
    header["sections"][name] = {{"meta", sec.meta}, {"tensors", std::move(entries)}};
  }
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset * sizeof(double));
  for (const auto& [name, sec] : sections)
    for (const auto& [tname, t] : sec.tensors)
      out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  return out;
}

Checkpoint Checkpoint::from_bytes(std::string_view bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw InvalidInput("not a checkpoint file (bad magic)");
  const auto version = get<std::uint32_t>(bytes, 8);
  if (version != kVersion) throw InvalidInput("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get<std::uint64_t>(bytes, 12);
  if (header_len > bytes.size() - 20) throw InvalidInput("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(20, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("corrupt checkpoint header: ") + e.what());
  }
  const std::string_view payload = bytes.substr(20 + header_len);
  const std::size_t payload_doubles = payload.size() / sizeof(double);

  Checkpoint ck;
  for (const auto& [name, sec] : header.at("sections").items()) {
    CheckpointSection out;
    out.meta = sec.at("meta");
    for (const auto& entry : sec.at("tensors")) {
      Shape shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const std::size_t n = shape_numel(shape);
      if (offset + n > payload_doubles) throw InvalidInput("truncated checkpoint payload");
      std::vector<double> data(n);
      std::memcpy(data.data(), payload.data() + offset * sizeof(double), n * sizeof(double));
      out.tensors.emplace_back(entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
    }
    ck.sections.emplace(name, std::move(out));
  }
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    const std::string bytes = to_bytes();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_bytes(bytes);
}

void store_params(const nn::ParamSet& params, CheckpointSection& section) {
  for (const auto& p : params.params()) section.tensors.emplace_back(p.name, p.var.value());
}

void restore_params(nn::ParamSet& params, const CheckpointSection& section) {
  for (const auto& p : params.params()) {
    const Tensor& t = section.tensor(p.name);
    if (t.shape() != p.var.shape())
      throw InvalidInput("checkpoint tensor " + p.name + " has shape " + shape_str(t.shape()) + ", model expects " +
                         shape_str(p.var.shape()));
    ag::Var v = p.var;
    v.mutable_value() = t;
  }
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pf
