#include "toposeg/optim.hpp"

#include <cmath>
#include <numbers>

#include "toposeg/error.hpp"

namespace toposeg {

void AdamWHyper::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValueError("adamw: lr must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValueError("adamw: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ValueError("adamw: eps must be positive");
  if (!(weight_decay >= 0.0)) throw ValueError("adamw: weight_decay must be >= 0");
}

OptState OptState::zeros_like(std::span<const Parameter> params) {
  OptState s;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.value.shape(), 0.0);
    s.second_moment.emplace_back(p.value.shape(), 0.0);
  }
  return s;
}

void adamw_step(std::span<Parameter> params, std::span<const Tensor> grads, OptState& state,
                const AdamWHyper& hyper) {
  hyper.validate();
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adamw: parameter, gradient and moment lists differ in length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    const Shape& shape = params[i].value.shape();
    if (grads[i].shape() != shape || state.first_moment[i].shape() != shape ||
        state.second_moment[i].shape() != shape) {
      throw ShapeError("adamw: shape mismatch for parameter '" + params[i].name + "'");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(hyper.beta1, t);
  const double bias2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    auto p = params[i].value.mutable_data();
    auto m = state.first_moment[i].mutable_data();
    auto v = state.second_moment[i].mutable_data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] -= hyper.lr * hyper.weight_decay * p[k];
      m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g[k];
      v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      p[k] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
    params[i].value.check_finite("adamw update");
  }
}

double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr0, double lr_min) {
  if (step > total_steps) throw ValueError("cosine_lr: step exceeds total_steps");
  if (total_steps == 0) return lr0;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

double global_norm(std::span<const Tensor> grads) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) sq += v * v;
  return std::sqrt(sq);
}

}  // namespace toposeg
