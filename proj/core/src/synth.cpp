#include "toposeg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "toposeg/error.hpp"

namespace toposeg {

void SynthConfig::validate() const {
  if (height < 32 || width < 32) throw ValueError("synth: extents must be >= 32");
  if (n_curves < 1) throw ValueError("synth: n_curves must be >= 1");
  if (!(width_min >= 1.0) || !(width_max >= width_min)) {
    throw ValueError("synth: width range must satisfy 1 <= min <= max");
  }
  if (width_max > static_cast<double>(std::min(height, width)) / 8.0) {
    throw ValueError("synth: curves of width " + std::to_string(width_max) + " cannot fit the canvas");
  }
  for (double p : {gap_probability, branch_probability}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValueError("synth: probabilities must lie in [0, 1]");
  }
  if (!(noise_sigma >= 0.0)) throw ValueError("synth: noise_sigma must be >= 0");
  if (samples < 1) throw ValueError("synth: samples must be >= 1");
}

namespace {

constexpr double kSpacing = 0.5;

Point2 catmull_rom(const Point2& p0, const Point2& p1, const Point2& p2, const Point2& p3, double t) {
  const double t2 = t * t, t3 = t2 * t;
  auto blend = [&](double a, double b, double c, double d) {
    return 0.5 * (2.0 * b + (-a + c) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2 +
                  (-a + 3.0 * b - 3.0 * c + d) * t3);
  };
  return {blend(p0.x, p1.x, p2.x, p3.x), blend(p0.y, p1.y, p2.y, p3.y)};
}

// Resamples a Catmull-Rom spline through `ctrl` so that consecutive points
// are at most kSpacing apart.
std::vector<Point2> smooth(const std::vector<Point2>& ctrl) {
  std::vector<Point2> out;
  const std::size_t n = ctrl.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Point2& p0 = ctrl[i == 0 ? 0 : i - 1];
    const Point2& p1 = ctrl[i];
    const Point2& p2 = ctrl[i + 1];
    const Point2& p3 = ctrl[std::min(i + 2, n - 1)];
    const double chord = std::hypot(p2.x - p1.x, p2.y - p1.y);
    // Catmull-Rom arcs stay well under twice the chord.
    const auto steps = static_cast<std::size_t>(std::ceil(2.0 * chord / kSpacing)) + 1;
    for (std::size_t s = 0; s < steps; ++s) {
      const Point2 p = catmull_rom(p0, p1, p2, p3, static_cast<double>(s) / static_cast<double>(steps));
      if (!out.empty() && std::hypot(p.x - out.back().x, p.y - out.back().y) > kSpacing) {
        // Fill the rare overshoot linearly.
        const Point2 prev = out.back();
        const double d = std::hypot(p.x - prev.x, p.y - prev.y);
        const auto extra = static_cast<std::size_t>(std::ceil(d / kSpacing));
        for (std::size_t e = 1; e < extra; ++e) {
          const double f = static_cast<double>(e) / static_cast<double>(extra);
          out.push_back({prev.x + f * (p.x - prev.x), prev.y + f * (p.y - prev.y)});
        }
      }
      out.push_back(p);
    }
  }
  out.push_back(ctrl.back());
  return out;
}

std::vector<Point2> random_walk(Point2 start, double heading, std::size_t n_ctrl, double lo_x,
                                double hi_x, double lo_y, double hi_y, Rng& rng) {
  std::vector<Point2> ctrl{start};
  for (std::size_t k = 1; k < n_ctrl; ++k) {
    heading += 0.6 * rng.normal();
    const double step = rng.uniform(7.0, 12.0);
    Point2 next{ctrl.back().x + step * std::cos(heading), ctrl.back().y + step * std::sin(heading)};
    // Reflect off the margins and turn around.
    if (next.x < lo_x || next.x > hi_x) {
      next.x = std::clamp(next.x, lo_x, hi_x);
      heading = std::numbers::pi - heading;
    }
    if (next.y < lo_y || next.y > hi_y) {
      next.y = std::clamp(next.y, lo_y, hi_y);
      heading = -heading;
    }
    ctrl.push_back(next);
  }
  return ctrl;
}

void add_gap(Curve& curve, Rng& rng) {
  const std::size_t n = curve.points.size();
  // Long enough that neighboring stamps do not close it.
  const auto len = static_cast<std::size_t>(std::ceil((2.0 * curve.width + 4.0) / kSpacing));
  if (n < len + 8) return;
  const std::size_t lo = n / 5, hi = n - n / 5 - len;
  if (hi <= lo) return;
  const std::size_t start = lo + rng.index(hi - lo);
  curve.gap = std::make_pair(start, start + len);
}

}  // namespace

std::vector<Curve> sample_curves(const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  const double margin = cfg.width_max + 2.0;
  const double hi_x = static_cast<double>(cfg.width) - 1.0 - margin;
  const double hi_y = static_cast<double>(cfg.height) - 1.0 - margin;

  std::vector<Curve> curves;
  for (std::size_t c = 0; c < cfg.n_curves; ++c) {
    Curve main;
    main.width = rng.uniform(cfg.width_min, cfg.width_max);
    const Point2 start{rng.uniform(margin, hi_x), rng.uniform(margin, hi_y)};
    const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const std::size_t n_ctrl = 5 + rng.index(3);
    main.points = smooth(random_walk(start, heading, n_ctrl, margin, hi_x, margin, hi_y, rng));
    const bool gap = rng.bernoulli(cfg.gap_probability);
    if (gap) add_gap(main, rng);

    const bool branch = rng.bernoulli(cfg.branch_probability);
    std::optional<Curve> side;
    if (branch) {
      Curve b;
      b.width = std::max(cfg.width_min, main.width * rng.uniform(0.6, 1.0));
      const std::size_t n = main.points.size();
      const Point2 root = main.points[n / 4 + rng.index(std::max<std::size_t>(n / 2, 1))];
      const double turn = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.6, 1.2);
      b.points = smooth(random_walk(root, heading + turn, 3 + rng.index(2), margin, hi_x, margin, hi_y, rng));
      side = std::move(b);
    }
    curves.push_back(std::move(main));
    if (side) curves.push_back(std::move(*side));
  }
  return curves;
}

void rasterize_curve(const Curve& curve, BinaryMask& canvas, bool skip_gap) {
  const double r2 = 0.25 * curve.width * curve.width;
  const auto reach = static_cast<long>(std::ceil(0.5 * curve.width));
  const auto h = static_cast<long>(canvas.height()), w = static_cast<long>(canvas.width());
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    if (skip_gap && curve.gap && i >= curve.gap->first && i < curve.gap->second) continue;
    const long cx = std::lround(curve.points[i].x);
    const long cy = std::lround(curve.points[i].y);
    for (long dy = -reach; dy <= reach; ++dy)
      for (long dx = -reach; dx <= reach; ++dx) {
        if (static_cast<double>(dx * dx + dy * dy) > r2 && (dx || dy)) continue;
        const long y = cy + dy, x = cx + dx;
        if (y < 0 || x < 0 || y >= h || x >= w) continue;
        canvas.set(static_cast<std::size_t>(y), static_cast<std::size_t>(x), true);
      }
  }
}

std::vector<SamplePair> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t h = cfg.height, w = cfg.width;
  std::vector<SamplePair> out;
  out.reserve(cfg.samples);
  for (std::size_t k = 0; k < cfg.samples; ++k) {
    Rng rng(derive_seed(cfg.seed, k));
    const std::vector<Curve> curves = sample_curves(cfg, rng);
    BinaryMask mask(h, w), render(h, w);
    for (const Curve& c : curves) {
      rasterize_curve(c, mask, false);
      rasterize_curve(c, render, true);
    }

    // Separable [1 2 1] / 4 blur with edge replication.
    std::vector<double> tmp(h * w), img(h * w);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t l = c ? c - 1 : c, rr = c + 1 < w ? c + 1 : c;
        tmp[r * w + c] = 0.25 * render(r, l) + 0.5 * render(r, c) + 0.25 * render(r, rr);
      }
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t u = r ? r - 1 : r, d = r + 1 < h ? r + 1 : r;
        img[r * w + c] = 0.25 * tmp[u * w + c] + 0.5 * tmp[r * w + c] + 0.25 * tmp[d * w + c];
      }
    for (double& v : img) {
      if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * rng.normal();
      v = std::clamp(v, 0.0, 1.0);
    }
    out.push_back({Tensor({1, h, w}, std::move(img)), std::move(mask),
                   "synth_" + std::to_string(cfg.seed) + "_" + std::to_string(k)});
  }
  return out;
}

}  // namespace toposeg
