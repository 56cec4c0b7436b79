#pragma once

#include "toposeg/autodiff.hpp"
#include "toposeg/tensor.hpp"

namespace toposeg {

/// Weights of the combined segmentation objective.
///
/// Defaults are (bce 1.0, dice 1.0, cl 0.5, boundary 0.0). The boundary term
/// has no definition here, so any nonzero `boundary` is rejected.
struct LossWeights {
  double bce = 1.0;
  double dice = 1.0;
  double cl = 0.5;
  double boundary = 0.0;

  /// Throws ValueError for negative weights, UnsupportedError for boundary != 0.
  void validate() const;

  LossWeights operator+(const LossWeights& o) const {
    return {bce + o.bce, dice + o.dice, cl + o.cl, boundary + o.boundary};
  }
};

struct SkeletonConfig {
  int iterations = 10;

  void validate() const;
};

/// Smoothing constants. `bce` clamps probabilities to [bce, 1 - bce];
/// `overlap` is added to numerator and denominator of Dice and clDice ratios.
struct LossEpsilons {
  double bce = 1e-7;
  double overlap = 1.0;
};

/// Mean binary cross-entropy on probabilities clamped to [eps, 1 - eps].
Var bce_loss(const Var& pred_prob, const Tensor& target, double eps = 1e-7);

/// BCE computed from logits with the log-sum-exp form; one tape node.
Var bce_with_logits(const Var& logits, const Tensor& target);

/// 1 - (2 sum(y p) + eps) / (sum(y) + sum(p) + eps).
Var soft_dice_loss(const Var& pred_prob, const Tensor& target, double eps = 1.0);

/// Differentiable soft skeleton of a CxHxW probability map.
///
///   skel = relu(x - open(x))
///   repeat iterations times:
///     x     = erode(x)
///     delta = relu(x - open(x))
///     skel  = skel + relu(delta - skel * delta)
///
/// with erode = 3x3 min-pool, dilate = 3x3 max-pool, open = dilate(erode).
Var soft_skeleton(const Var& prob, const SkeletonConfig& cfg);
Tensor soft_skeleton(const Tensor& prob, const SkeletonConfig& cfg);

/// 1 - 2 Tprec Tsens / (Tprec + Tsens), where
///   Tprec = (sum(S(p) y) + eps) / (sum(S(p)) + eps)
///   Tsens = (sum(S(y) p) + eps) / (sum(S(y)) + eps).
Var cl_dice_loss(const Var& pred_prob, const Tensor& target, const SkeletonConfig& cfg,
                 double eps = 1.0);

struct LossBreakdown {
  Var total;
  double bce = 0.0;
  double dice = 0.0;
  double cl = 0.0;
};

/// Weighted sum of the BCE, soft Dice and clDice terms.
///
/// Every term value is reported, including zero-weighted ones; only terms
/// with a positive weight contribute nodes to the returned total.
LossBreakdown combined_loss(const Var& pred_prob, const Tensor& target, const LossWeights& w,
                            const SkeletonConfig& cfg, const LossEpsilons& eps = {});

/// Throws ValueError unless every value is exactly 0 or 1.
void require_binary(const Tensor& target, const char* context);

}  // namespace toposeg
