#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "part/tensor.hpp"

namespace part {

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool operator==(const NamedTensor&) const = default;
};

/// Model parameters, optimizer moments, counters and the configuration that
/// produced them. Tensor names are "param:<name>", "adam_m:<name>", "adam_v:<name>".
///
/// File layout (little-endian):
///   8 bytes  magic "PARTCKPT"
///   u32      format version (1)
///   u64      header length in bytes
///   header   JSON: {"config", "step", "optimizer_steps", "rng": {"key", "counter"},
///                   "tensors": [{"name", "rows", "cols"}, ...]}
///   payload  rows*cols f64 values per tensor, in header order
struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t step = 0;
  std::uint64_t optimizer_steps = 0;
  std::uint64_t rng_key = 0;
  std::uint64_t rng_counter = 0;
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace part
