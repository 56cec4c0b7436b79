#include "toposeg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "toposeg/error.hpp"

namespace toposeg {

namespace {

void require_same_extent(const BinaryMask& a, const BinaryMask& b, const char* context) {
  if (!a.same_extent(b)) {
    throw ShapeError(std::string(context) + ": mask extents differ (" + std::to_string(a.height()) +
                     "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()) + ")");
  }
}

double ratio_or_zero(double num, double den) { return den > 0.0 ? num / den : 0.0; }

// Squared distance along one line to the nearest finite sample, exact for
// integer inputs. Samples at +inf are not features.
void lower_envelope_1d(const std::vector<double>& f, std::vector<double>& out,
                       std::vector<std::size_t>& v, std::vector<double>& z) {
  const std::size_t n = f.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  bool any = false;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double qd = static_cast<double>(q);
    if (!any) {
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      any = true;
      continue;
    }
    auto intersect = [&](std::size_t vk) {
      const double vd = static_cast<double>(vk);
      return ((f[q] + qd * qd) - (f[vk] + vd * vd)) / (2.0 * qd - 2.0 * vd);
    };
    // z[0] is -inf, so the descent stops at k == 0 at the latest.
    double s = intersect(v[k]);
    while (s <= z[k]) s = intersect(v[--k]);
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (!any) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double qd = static_cast<double>(q);
    while (z[k + 1] < qd) ++k;
    const double d = qd - static_cast<double>(v[k]);
    out[q] = d * d + f[v[k]];
  }
}

std::vector<double> squared_distance(const BinaryMask& mask) {
  const std::size_t h = mask.height(), w = mask.width();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(h * w);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = mask[i] ? 0.0 : kInf;

  const std::size_t n = std::max(h, w);
  std::vector<std::size_t> v(n);
  std::vector<double> z(n + 1);
  std::vector<double> line, out;

  line.resize(h);
  out.resize(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) line[r] = grid[r * w + c];
    lower_envelope_1d(line, out, v, z);
    for (std::size_t r = 0; r < h; ++r) grid[r * w + c] = out[r];
  }
  line.resize(w);
  out.resize(w);
  for (std::size_t r = 0; r < h; ++r) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(r * w), w, line.begin());
    lower_envelope_1d(line, out, v, z);
    std::copy(out.begin(), out.end(), grid.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  return grid;
}

}  // namespace

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_extent(pred, gt, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i], g = gt[i];
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

RegionScores region_metrics(const BinaryMask& pred, const BinaryMask& gt) {
  RegionScores s;
  s.counts = confusion(pred, gt);
  const auto tp = static_cast<double>(s.counts.tp);
  const auto fp = static_cast<double>(s.counts.fp);
  const auto fn = static_cast<double>(s.counts.fn);
  if (tp + fp + fn == 0.0) {
    s.dice = s.iou = s.precision = s.recall = 1.0;
    return s;
  }
  s.dice = 2.0 * tp / (2.0 * tp + fp + fn);
  s.iou = tp / (tp + fp + fn);
  s.precision = ratio_or_zero(tp, tp + fp);
  s.recall = ratio_or_zero(tp, tp + fn);
  return s;
}

BinaryMask boundary_extract(const BinaryMask& mask) {
  const std::size_t h = mask.height(), w = mask.width();
  BinaryMask contour(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!mask(r, c)) continue;
      const bool edge = r == 0 || c == 0 || r + 1 == h || c + 1 == w || !mask(r - 1, c) ||
                        !mask(r + 1, c) || !mask(r, c - 1) || !mask(r, c + 1);
      if (edge) contour.set(r, c, true);
    }
  }
  return contour;
}

Tensor distance_transform(const BinaryMask& mask) {
  if (mask.size() == 0) throw ShapeError("distance_transform: empty extent");
  std::vector<double> d = squared_distance(mask);
  for (double& v : d) v = std::isinf(v) ? kNoForegroundDistance : std::sqrt(v);
  return Tensor({mask.height(), mask.width()}, std::move(d));
}

double bf_score(const BinaryMask& pred, const BinaryMask& gt, double tolerance) {
  require_same_extent(pred, gt, "bf_score");
  if (!(tolerance > 0.0)) throw ValueError("bf_score: tolerance must be positive");
  const bool pred_empty = pred.none(), gt_empty = gt.none();
  if (pred_empty && gt_empty) return 1.0;
  if (pred_empty || gt_empty) return 0.0;

  const BinaryMask pred_contour = boundary_extract(pred);
  const BinaryMask gt_contour = boundary_extract(gt);
  const Tensor to_gt = distance_transform(gt_contour);
  const Tensor to_pred = distance_transform(pred_contour);

  auto matched_fraction = [tolerance](const BinaryMask& contour, const Tensor& dist) {
    std::size_t hits = 0, total = 0;
    for (std::size_t i = 0; i < contour.size(); ++i) {
      if (!contour[i]) continue;
      ++total;
      if (dist[i] <= tolerance) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
  };
  const double precision = matched_fraction(pred_contour, to_gt);
  const double recall = matched_fraction(gt_contour, to_pred);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::size_t max_inscribed_radius(const BinaryMask& mask) {
  const std::size_t h = mask.height() + 2, w = mask.width() + 2;
  // Background with a one-pixel off-image ring.
  BinaryMask background(h, w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const bool inside = r > 0 && c > 0 && r + 1 < h && c + 1 < w;
      background.set(r, c, !(inside && mask(r - 1, c - 1)));
    }
  const std::vector<double> d2 = squared_distance(background);
  double worst = 0.0;
  for (double v : d2) worst = std::max(worst, v);
  return static_cast<std::size_t>(std::ceil(std::sqrt(worst)));
}

CenterlineScore cl_dice_metric(const BinaryMask& pred, const BinaryMask& gt,
                               const SkeletonConfig& cfg, double eps) {
  require_same_extent(pred, gt, "cl_dice_metric");
  cfg.validate();
  if (!(eps > 0.0)) throw ValueError("cl_dice_metric: eps must be positive");
  CenterlineScore score;
  score.required_iterations = std::max(max_inscribed_radius(pred), max_inscribed_radius(gt));
  score.iterations_sufficient =
      static_cast<std::size_t>(cfg.iterations) >= score.required_iterations;
  if (pred.none() && gt.none()) {
    score.value = 1.0;
    return score;
  }
  const Tensor p = pred.to_tensor();
  const Tensor g = gt.to_tensor();
  const Tensor skel_p = soft_skeleton(p, cfg);
  const Tensor skel_g = soft_skeleton(g, cfg);
  double sp_g = 0.0, sp = 0.0, sg_p = 0.0, sg = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    sp_g += skel_p[i] * g[i];
    sp += skel_p[i];
    sg_p += skel_g[i] * p[i];
    sg += skel_g[i];
  }
  const double tprec = (sp_g + eps) / (sp + eps);
  const double tsens = (sg_p + eps) / (sg + eps);
  score.value = 2.0 * tprec * tsens / (tprec + tsens);
  return score;
}

double ece(const Tensor& prob, const BinaryMask& gt, std::size_t n_bins) {
  if (n_bins < 1) throw ValueError("ece: n_bins must be >= 1");
  const auto [h, w] = plane_extent(prob, "ece");
  if (h != gt.height() || w != gt.width()) throw ShapeError("ece: probability and mask extents differ");

  std::vector<double> conf_sum(n_bins, 0.0);
  std::vector<std::size_t> correct(n_bins, 0), count(n_bins, 0);
  const double bin_width = 0.5 / static_cast<double>(n_bins);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double p = prob[i];
    if (p < 0.0 || p > 1.0) throw ValueError("ece: probabilities must lie in [0, 1]");
    const bool predicted = p >= 0.5;
    const double confidence = std::max(p, 1.0 - p);
    auto bin = static_cast<std::size_t>((confidence - 0.5) / bin_width);
    bin = std::min(bin, n_bins - 1);
    conf_sum[bin] += confidence;
    ++count[bin];
    if (predicted == gt[i]) ++correct[bin];
  }
  const double n = static_cast<double>(gt.size());
  double total = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    const double m = static_cast<double>(count[b]);
    const double accuracy = static_cast<double>(correct[b]) / m;
    const double confidence = conf_sum[b] / m;
    total += (m / n) * std::abs(accuracy - confidence);
  }
  return total;
}

const MeanStd& MetricReport::summary(std::string_view metric) const {
  for (std::size_t i = 0; i < kMetricFields.size(); ++i) {
    if (kMetricFields[i].name == metric) return aggregate[i];
  }
  throw ValueError("unknown metric '" + std::string(metric) + "'");
}

MeanStd mean_std(std::vector<double> values) {
  if (values.empty()) throw ValueError("mean_std: empty sample");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double total = 0.0;
  for (double v : values) total += v;
  const double mean = total / n;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / n)};
}

MetricReport aggregate(std::vector<ImageMetrics> images) {
  if (images.empty()) throw ValueError("aggregate: no images to aggregate");
  MetricReport report;
  for (std::size_t f = 0; f < kMetricFields.size(); ++f) {
    std::vector<double> column;
    column.reserve(images.size());
    for (const auto& m : images) column.push_back(m.*(kMetricFields[f].member));
    report.aggregate[f] = mean_std(std::move(column));
  }
  report.images = std::move(images);
  return report;
}

ImageMetrics evaluate_image(std::string id, const Tensor& prob, const BinaryMask& gt,
                            const EvalOptions& options) {
  const BinaryMask pred = binarize(prob, options.threshold);
  if (!pred.same_extent(gt)) throw ShapeError("evaluate_image: prediction and ground truth differ in size");
  ImageMetrics m;
  m.id = std::move(id);
  const RegionScores region = region_metrics(pred, gt);
  m.dice = region.dice;
  m.iou = region.iou;
  m.precision = region.precision;
  m.recall = region.recall;
  m.bf_score = bf_score(pred, gt, options.tolerance);
  const CenterlineScore cl = cl_dice_metric(pred, gt, options.skeleton, options.cl_eps);
  m.cl_dice = cl.value;
  if (!cl.iterations_sufficient) {
    m.warnings.push_back("skeleton iterations " + std::to_string(options.skeleton.iterations) +
                         " below required " + std::to_string(cl.required_iterations));
  }
  m.ece = ece(prob, gt, options.bins);
  return m;
}

}  // namespace toposeg
