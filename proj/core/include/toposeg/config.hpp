#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "toposeg/report.hpp"
#include "toposeg/trainer.hpp"

namespace toposeg {

/// Parses flat `key = value` text into a TrainConfig. '#' starts a comment.
/// Unknown keys, malformed values and duplicates raise ValueError naming the
/// line; the result is validated.
TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);

/// Every config key with its current value, in a fixed order.
ConfigEcho echo_config(const TrainConfig& cfg);
/// Renders an echo as parseable config text.
std::string config_text(const TrainConfig& cfg);

/// FNV-1a 64 of the canonical config text.
std::uint64_t config_hash(const TrainConfig& cfg);
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace toposeg
