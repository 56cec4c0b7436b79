#include "toposeg/mask.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "toposeg/error.hpp"

namespace toposeg {

BinaryMask::BinaryMask(std::size_t height, std::size_t width)
    : height_(height), width_(width), values_(height * width, 0) {}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (values_.size() != height * width) throw ShapeError("mask data length does not match extents");
  for (auto v : values_) {
    if (v > 1) throw ValueError("mask values must be 0 or 1");
  }
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

Tensor BinaryMask::to_tensor() const {
  std::vector<double> data(values_.begin(), values_.end());
  return Tensor({1, height_, width_}, std::move(data));
}

BinaryMask BinaryMask::transposed() const {
  BinaryMask out(width_, height_);
  for (std::size_t i = 0; i < height_; ++i)
    for (std::size_t j = 0; j < width_; ++j) out.set(j, i, (*this)(i, j));
  return out;
}

BinaryMask BinaryMask::flipped_horizontally() const {
  BinaryMask out(height_, width_);
  for (std::size_t i = 0; i < height_; ++i)
    for (std::size_t j = 0; j < width_; ++j) out.set(i, width_ - 1 - j, (*this)(i, j));
  return out;
}

PlaneExtent plane_extent(const Tensor& t, const char* context) {
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  if (t.rank() == 3 && t.dim(0) == 1) return {t.dim(1), t.dim(2)};
  throw ShapeError(std::string(context) + ": expected HxW or 1xHxW, got " + shape_to_string(t.shape()));
}

BinaryMask binarize(const Tensor& prob, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValueError("binarize: threshold must lie in (0, 1)");
  const auto [h, w] = plane_extent(prob, "binarize");
  std::vector<std::uint8_t> values(h * w);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = prob[i] >= threshold ? 1 : 0;
  return BinaryMask(h, w, std::move(values));
}

std::size_t count_components(const BinaryMask& mask) {
  const std::size_t h = mask.height(), w = mask.width();
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<std::size_t> stack;
  std::size_t components = 0;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || seen[start]) continue;
    ++components;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t r = p / w, c = p % w;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const auto rr = static_cast<std::ptrdiff_t>(r) + dy;
          const auto cc = static_cast<std::ptrdiff_t>(c) + dx;
          if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(h) ||
              cc >= static_cast<std::ptrdiff_t>(w))
            continue;
          const std::size_t q = static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc);
          if (mask[q] && !seen[q]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
    }
  }
  return components;
}

}  // namespace toposeg
