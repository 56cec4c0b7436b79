#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "toposeg/tensor.hpp"

namespace toposeg {

/// Row-major H x W mask with values 0 or 1.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width);
  BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return values_.size(); }

  bool operator()(std::size_t row, std::size_t col) const { return values_[row * width_ + col] != 0; }
  void set(std::size_t row, std::size_t col, bool on) { values_[row * width_ + col] = on ? 1 : 0; }
  bool operator[](std::size_t i) const { return values_[i] != 0; }

  const std::vector<std::uint8_t>& values() const { return values_; }
  std::size_t count() const;
  bool none() const { return count() == 0; }
  bool same_extent(const BinaryMask& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// 1 x H x W tensor of 0.0 / 1.0.
  Tensor to_tensor() const;
  BinaryMask transposed() const;
  BinaryMask flipped_horizontally() const;

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> values_;
};

/// Plane extents of an H x W or 1 x H x W tensor.
struct PlaneExtent {
  std::size_t height;
  std::size_t width;
};
PlaneExtent plane_extent(const Tensor& t, const char* context);

/// mask = prob >= threshold. Threshold must lie in (0, 1).
BinaryMask binarize(const Tensor& prob, double threshold = 0.5);

/// Number of 8-connected foreground components.
std::size_t count_components(const BinaryMask& mask);

}  // namespace toposeg
