#pragma once

// Versioned, self-describing checkpoint container.
//
//   bytes 0..7    magic "PFCKPT\r\n"
//   bytes 8..11   format version (uint32, little endian)
//   bytes 12..19  header length N (uint64, little endian)
//   next N bytes  UTF-8 JSON header
//   remainder     tensor payload, float64 little endian
//
// The header maps section names ("tpn", "pcn") to
//   {"meta": {...}, "tensors": [{"name", "shape", "offset"}]}
// where offset counts doubles from the start of the payload.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pf/nn.hpp"
#include "pf/tensor.hpp"

namespace pf {

struct CheckpointSection {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
};

class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, CheckpointSection> sections;

  bool has(const std::string& name) const { return sections.count(name) != 0; }
  const CheckpointSection& section(const std::string& name) const;

  std::string to_bytes() const;
  static Checkpoint from_bytes(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

// Copies every parameter and buffer into the section, in registration order.
void store_params(const nn::ParamSet& params, CheckpointSection& section);
// Overwrites parameters by name; every parameter must be present with a matching shape.
void restore_params(nn::ParamSet& params, const CheckpointSection& section);

// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace pf
