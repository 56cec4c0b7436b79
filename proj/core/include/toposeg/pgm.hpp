#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "toposeg/mask.hpp"
#include "toposeg/tensor.hpp"

namespace toposeg {

struct ReadLimits {
  /// Upper bound on each declared extent, checked before allocation.
  std::size_t max_extent = 16384;
};

/// Binary portable graymap (P5). Samples are 8-bit when maxval < 256,
/// otherwise 16-bit big-endian.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint16_t maxval = 255;
  std::vector<std::uint16_t> samples;
};

GrayImage decode_pgm(std::span<const std::uint8_t> bytes, const ReadLimits& limits = {});
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);

GrayImage read_pgm(const std::filesystem::path& path, const ReadLimits& limits = {});
void write_pgm(const GrayImage& image, const std::filesystem::path& path);

/// Samples above maxval / 2 are foreground (128..255 for 8-bit files).
BinaryMask read_mask(const std::filesystem::path& path, const ReadLimits& limits = {});
/// Writes an 8-bit P5 with 0 / 255.
void write_mask(const BinaryMask& mask, const std::filesystem::path& path);

/// 1 x H x W tensor of sample / maxval. Accepts 8- and 16-bit files.
Tensor read_prob(const std::filesystem::path& path, const ReadLimits& limits = {});
/// Writes a 16-bit P5 with round(p * 65535). Accepts H x W or 1 x H x W.
void write_prob(const Tensor& prob, const std::filesystem::path& path);

}  // namespace toposeg
