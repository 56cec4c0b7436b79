#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <span>
#include <vector>

#include "toposeg/optim.hpp"

namespace toposeg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Checkpoint container, little-endian throughout:
///
///   magic "TSCK" | u32 version | u64 config hash | u64 step | u32 tensor count
///   per tensor: u16 name length, name bytes, u8 trainable, u8 rank,
///               u64 extents[rank], f64 values[numel]
///   u64 FNV-1a checksum of every preceding byte
///
/// Tensors are the model parameters in order, then "adam.m.<name>" and
/// "adam.v.<name>" moments for each parameter.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::vector<Parameter> parameters;
  OptState optimizer;
};

std::vector<std::uint8_t> encode_checkpoint(std::span<const Parameter> params, const OptState& state,
                                            std::uint64_t config_hash);
/// Verifies the checksum before decoding anything.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void checkpoint_save(std::span<const Parameter> params, const OptState& state, std::uint64_t config_hash,
                     const std::filesystem::path& path);
Checkpoint checkpoint_load(const std::filesystem::path& path);

/// Warning text when a checkpoint was written under a different config.
std::optional<std::string> config_mismatch_warning(const Checkpoint& ckpt, std::uint64_t expected_hash);

}  // namespace toposeg
