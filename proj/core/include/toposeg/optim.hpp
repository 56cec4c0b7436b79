#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "toposeg/tensor.hpp"

namespace toposeg {

/// A named parameter tensor. Frozen parameters are never modified by the
/// optimizer.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

struct AdamWHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;

  void validate() const;
};

/// First and second moments per parameter, indexed like the parameter list.
struct OptState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  /// Zeroed moments shaped like `params`.
  static OptState zeros_like(std::span<const Parameter> params);
};

/// One AdamW update of every trainable parameter:
///
///   p <- p - lr * wd * p
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
///
/// with bias-corrected m_hat, v_hat. `grads[i]` may be empty for frozen
/// parameters.
void adamw_step(std::span<Parameter> params, std::span<const Tensor> grads, OptState& state,
                const AdamWHyper& hyper);

/// lr_min + (lr0 - lr_min) (1 + cos(pi step / total)) / 2, for 0 <= step <= total.
double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr0, double lr_min);

/// Global L2 norm of a gradient list (empty tensors skipped).
double global_norm(std::span<const Tensor> grads);

}  // namespace toposeg
