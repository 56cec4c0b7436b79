#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "toposeg/mask.hpp"
#include "toposeg/rng.hpp"
#include "toposeg/tensor.hpp"

namespace toposeg {

struct SamplePair {
  Tensor image;  // 1 x H x W, values in [0, 1]
  BinaryMask mask;
  std::string id;
};

/// Parameters of the vessel-like curve generator.
struct SynthConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t n_curves = 3;
  /// Stroke width range in pixels.
  double width_min = 1.0;
  double width_max = 3.0;
  /// Per-curve chance that a short stretch is missing from the image.
  double gap_probability = 0.5;
  double noise_sigma = 0.1;
  /// Per-curve chance of one side branch.
  double branch_probability = 0.5;
  std::uint64_t seed = 0;
  std::size_t samples = 8;

  /// Throws ValueError for a config whose curves cannot fit the canvas.
  void validate() const;
};

struct Point2 {
  double x;
  double y;
};

/// Densely sampled centerline (spacing <= 0.5 px) with a stroke width.
struct Curve {
  std::vector<Point2> points;
  double width = 1.0;
  /// Half-open range of `points` left out of the image rendering.
  std::optional<std::pair<std::size_t, std::size_t>> gap;
};

/// Curves of one sample: Catmull-Rom smoothed random walks, each optionally
/// followed by a branch that starts on it.
std::vector<Curve> sample_curves(const SynthConfig& cfg, Rng& rng);

/// Stamps discs of diameter `curve.width` at every centerline point. With
/// `skip_gap` the gap range is left out.
void rasterize_curve(const Curve& curve, BinaryMask& canvas, bool skip_gap = false);

/// `cfg.samples` pairs; a pure function of `cfg`.
std::vector<SamplePair> synth_generate(const SynthConfig& cfg);

}  // namespace toposeg
