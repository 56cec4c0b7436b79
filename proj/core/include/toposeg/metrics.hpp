#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "toposeg/losses.hpp"
#include "toposeg/mask.hpp"
#include "toposeg/tensor.hpp"

namespace toposeg {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

struct RegionScores {
  double dice = 0.0;
  double iou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  ConfusionCounts counts;
};

/// Dice, IoU, precision and recall. Both masks empty scores 1 everywhere;
/// otherwise a 0/0 ratio scores 0.
RegionScores region_metrics(const BinaryMask& pred, const BinaryMask& gt);

/// Foreground pixels with a background or off-image 4-neighbor.
BinaryMask boundary_extract(const BinaryMask& mask);

/// Value reported for every pixel when the mask has no foreground.
inline constexpr double kNoForegroundDistance = std::numeric_limits<double>::max();

/// Exact Euclidean distance from each pixel to the nearest foreground pixel,
/// as an H x W tensor. Separable lower-envelope algorithm, O(HW).
Tensor distance_transform(const BinaryMask& mask);

/// Boundary F1 with contour matches accepted within `tolerance` pixels.
/// Both empty scores 1; exactly one empty scores 0.
double bf_score(const BinaryMask& pred, const BinaryMask& gt, double tolerance = 2.0);

/// Smallest erosion count guaranteed to remove every foreground pixel:
/// ceil of the largest distance to background, off-image pixels counting
/// as background.
std::size_t max_inscribed_radius(const BinaryMask& mask);

struct CenterlineScore {
  double value = 0.0;
  std::size_t required_iterations = 0;
  bool iterations_sufficient = true;
};

/// clDice on binary masks via the soft skeleton. Both empty scores 1.
CenterlineScore cl_dice_metric(const BinaryMask& pred, const BinaryMask& gt,
                               const SkeletonConfig& cfg, double eps = 1e-6);

/// Expected calibration error with `n_bins` equal-width confidence bins over
/// [0.5, 1]. Confidence is max(p, 1 - p), the predicted class is p >= 0.5.
double ece(const Tensor& prob, const BinaryMask& gt, std::size_t n_bins = 10);

/// Per-image metric values, all in [0, 1].
struct ImageMetrics {
  std::string id;
  double dice = 0.0;
  double iou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double bf_score = 0.0;
  double cl_dice = 0.0;
  double ece = 0.0;
  std::vector<std::string> warnings;
};

struct MetricField {
  std::string_view name;
  double ImageMetrics::*member;
};

/// Report order of the metric fields.
inline constexpr std::array<MetricField, 7> kMetricFields{{
    {"dice", &ImageMetrics::dice},
    {"iou", &ImageMetrics::iou},
    {"precision", &ImageMetrics::precision},
    {"recall", &ImageMetrics::recall},
    {"bf_score", &ImageMetrics::bf_score},
    {"cl_dice", &ImageMetrics::cl_dice},
    {"ece", &ImageMetrics::ece},
}};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct MetricReport {
  std::vector<ImageMetrics> images;
  /// Indexed like kMetricFields.
  std::array<MeanStd, kMetricFields.size()> aggregate{};

  const MeanStd& summary(std::string_view metric) const;
};

/// Mean and population standard deviation of a sample. Values are summed in
/// sorted order, so the result does not depend on input order.
MeanStd mean_std(std::vector<double> values);

/// Aggregates per-image metrics; keeps the images in the given order.
MetricReport aggregate(std::vector<ImageMetrics> images);

struct EvalOptions {
  double threshold = 0.5;
  double tolerance = 2.0;
  std::size_t bins = 10;
  SkeletonConfig skeleton{};
  double cl_eps = 1e-6;
};

/// Full metric suite for one probability map (or 0/1 mask) against ground truth.
ImageMetrics evaluate_image(std::string id, const Tensor& prob, const BinaryMask& gt,
                            const EvalOptions& options = {});

}  // namespace toposeg
