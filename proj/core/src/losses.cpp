#include "toposeg/losses.hpp"

#include <cmath>
#include <string>

#include "toposeg/error.hpp"

namespace toposeg {

void LossWeights::validate() const {
  for (double w : {bce, dice, cl, boundary}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValueError("loss weights must be finite and >= 0");
  }
  if (boundary != 0.0) throw UnsupportedError("boundary loss unsupported (lambda_bd must be 0)");
}

void SkeletonConfig::validate() const {
  if (iterations < 1) throw ValueError("skeleton iterations must be >= 1");
}

void require_binary(const Tensor& target, const char* context) {
  for (double v : target.data()) {
    if (v != 0.0 && v != 1.0) throw ValueError(std::string(context) + ": target must be binary");
  }
}

namespace {

void require_same_shape(const Var& pred, const Tensor& target, const char* context) {
  if (pred.shape() != target.shape()) {
    throw ShapeError(std::string(context) + ": prediction " + shape_to_string(pred.shape()) +
                     " vs target " + shape_to_string(target.shape()));
  }
}

Tensor complement(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.mutable_data()) v = 1.0 - v;
  return out;
}

Var soft_open(const Var& x) { return max_pool(min_pool(x)); }

}  // namespace

Var bce_loss(const Var& pred_prob, const Tensor& target, double eps) {
  require_same_shape(pred_prob, target, "bce_loss");
  require_binary(target, "bce_loss");
  if (!(eps > 0.0 && eps < 0.5)) throw ValueError("bce_loss: eps must lie in (0, 0.5)");
  Tape& tape = *pred_prob.tape();
  const Var p = clamp(pred_prob, eps, 1.0 - eps);
  const Var y = tape.constant(target);
  const Var not_y = tape.constant(complement(target));
  const Var positive = mul(y, log(p));
  const Var negative = mul(not_y, log(affine(p, -1.0, 1.0)));
  return affine(mean(add(positive, negative)), -1.0, 0.0);
}

Var bce_with_logits(const Var& logits, const Tensor& target) {
  require_same_shape(logits, target, "bce_with_logits");
  require_binary(target, "bce_with_logits");
  const Tensor& z = logits.value();
  const double n = static_cast<double>(z.numel());
  double total = 0.0;
  for (std::size_t i = 0; i < z.numel(); ++i) {
    // max(z, 0) - z y + log(1 + exp(-|z|))
    total += std::max(z[i], 0.0) - z[i] * target[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  BackwardFn fn = [z, target, n](const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    auto gz = grads[0]->mutable_data();
    for (std::size_t i = 0; i < gz.size(); ++i) {
      const double s = z[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-z[i]))
                                   : std::exp(z[i]) / (1.0 + std::exp(z[i]));
      gz[i] += g[0] * (s - target[i]) / n;
    }
  };
  return logits.tape()->record(OpKind::custom, Tensor::scalar(total / n), {logits}, std::move(fn));
}

Var soft_dice_loss(const Var& pred_prob, const Tensor& target, double eps) {
  require_same_shape(pred_prob, target, "soft_dice_loss");
  if (!(eps > 0.0)) throw ValueError("soft_dice_loss: eps must be positive");
  Tape& tape = *pred_prob.tape();
  const Var y = tape.constant(target);
  const Var numerator = affine(sum(mul(y, pred_prob)), 2.0, eps);
  const Var denominator = affine(add(sum(y), sum(pred_prob)), 1.0, eps);
  return affine(div(numerator, denominator), -1.0, 1.0);
}

Var soft_skeleton(const Var& prob, const SkeletonConfig& cfg) {
  cfg.validate();
  if (prob.value().rank() != 3) {
    throw ShapeError("soft_skeleton: expected a CxHxW map, got " + shape_to_string(prob.shape()));
  }
  Var x = prob;
  Var skel = relu(sub(x, soft_open(x)));
  for (int k = 0; k < cfg.iterations; ++k) {
    x = min_pool(x);
    const Var delta = relu(sub(x, soft_open(x)));
    skel = add(skel, relu(sub(delta, mul(skel, delta))));
  }
  return skel;
}

Tensor soft_skeleton(const Tensor& prob, const SkeletonConfig& cfg) {
  Tape tape;
  return soft_skeleton(tape.constant(prob), cfg).value();
}

Var cl_dice_loss(const Var& pred_prob, const Tensor& target, const SkeletonConfig& cfg, double eps) {
  require_same_shape(pred_prob, target, "cl_dice_loss");
  require_binary(target, "cl_dice_loss");
  if (!(eps > 0.0)) throw ValueError("cl_dice_loss: eps must be positive");
  Tape& tape = *pred_prob.tape();
  const Var y = tape.constant(target);
  const Var skel_pred = soft_skeleton(pred_prob, cfg);
  const Var skel_true = tape.constant(soft_skeleton(target, cfg));

  const Var tprec = div(affine(sum(mul(skel_pred, y)), 1.0, eps), affine(sum(skel_pred), 1.0, eps));
  const Var tsens = div(affine(sum(mul(skel_true, pred_prob)), 1.0, eps), affine(sum(skel_true), 1.0, eps));
  const Var harmonic = div(mul(tprec, tsens), add(tprec, tsens));
  return affine(harmonic, -2.0, 1.0);
}

LossBreakdown combined_loss(const Var& pred_prob, const Tensor& target, const LossWeights& w,
                            const SkeletonConfig& cfg, const LossEpsilons& eps) {
  w.validate();
  cfg.validate();
  Tape& tape = *pred_prob.tape();
  LossBreakdown out;

  std::optional<Var> total;
  auto add_term = [&](double weight, auto&& term_fn, double& value_slot) {
    if (weight > 0.0) {
      const Var term = term_fn(pred_prob);
      value_slot = term.item();
      const Var weighted = weight == 1.0 ? term : affine(term, weight, 0.0);
      total = total ? add(*total, weighted) : weighted;
    } else {
      // Logged only; evaluated off the gradient path.
      Tape detached;
      value_slot = term_fn(detached.constant(pred_prob.value())).item();
    }
  };

  add_term(w.bce, [&](const Var& p) { return bce_loss(p, target, eps.bce); }, out.bce);
  add_term(w.dice, [&](const Var& p) { return soft_dice_loss(p, target, eps.overlap); }, out.dice);
  add_term(w.cl, [&](const Var& p) { return cl_dice_loss(p, target, cfg, eps.overlap); }, out.cl);

  out.total = total ? *total : tape.constant(Tensor::scalar(0.0));
  return out;
}

}  // namespace toposeg
