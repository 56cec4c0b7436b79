#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "json.hpp"
#include "toposeg/autodiff.hpp"
#include "toposeg/error.hpp"
#include "toposeg/losses.hpp"
#include "toposeg/peft.hpp"
#include "toposeg/rng.hpp"

namespace toposeg::cli {

namespace {

using Inputs = std::span<const Var>;

struct GradCase {
  std::vector<Tensor> inputs;
  std::function<Var(Inputs)> fn;
};

using CaseFactory = GradCase (*)(Rng&);

Tensor uniform_tensor(Rng& rng, const Shape& shape, double lo, double hi) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v));
}

// Uniform values with every entry at least `margin` away from each kink.
Tensor kink_free_tensor(Rng& rng, const Shape& shape, double lo, double hi, std::initializer_list<double> kinks,
                        double margin) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) {
    do {
      x = rng.uniform(lo, hi);
    } while (std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(x - k) < margin; }));
  }
  return Tensor(shape, std::move(v));
}

// Pairwise distinct values spread over [lo, hi], so max/min selections are
// stable under small perturbations. Neighbouring values are at least
// (hi - lo) / (2n) apart.
Tensor distinct_tensor(Rng& rng, const Shape& shape, double lo, double hi) {
  const std::size_t n = shape_numel(shape);
  const auto perm = rng.permutation(n);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = lo + (hi - lo) * (static_cast<double>(perm[i]) + 0.25 + 0.5 * rng.uniform()) / static_cast<double>(n);
  }
  return Tensor(shape, std::move(v));
}

// Distinct magnitudes in [0.05, 1] with random signs: also clear of the zero pad.
Tensor pool_input(Rng& rng, const Shape& shape) {
  Tensor t = distinct_tensor(rng, shape, 0.05, 1.0);
  for (double& x : t.mutable_data())
    if (rng.bernoulli(0.5)) x = -x;
  return t;
}

Tensor binary_tensor(Rng& rng, const Shape& shape, double p = 0.5) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.bernoulli(p) ? 1.0 : 0.0;
  return Tensor(shape, std::move(v));
}

std::size_t extent(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

Shape small_shape(Rng& rng) {
  if (rng.bernoulli(0.5)) return {extent(rng, 2, 6)};
  return {extent(rng, 2, 4), extent(rng, 2, 4)};
}

Shape plane_shape(Rng& rng, std::size_t max_channels = 2) {
  return {extent(rng, 1, max_channels), extent(rng, 5, 8), extent(rng, 5, 8)};
}

// Second operand of a binary op: same shape, or a broadcast scalar.
Shape partner_shape(Rng& rng, const Shape& shape) { return rng.bernoulli(0.25) ? Shape{1} : shape; }

GradCase case_add(Rng& rng) {
  const Shape s = small_shape(rng);
  return {{uniform_tensor(rng, s, -2, 2), uniform_tensor(rng, partner_shape(rng, s), -2, 2)},
          [](Inputs v) { return add(v[0], v[1]); }};
}

GradCase case_sub(Rng& rng) {
  const Shape s = small_shape(rng);
  return {{uniform_tensor(rng, s, -2, 2), uniform_tensor(rng, partner_shape(rng, s), -2, 2)},
          [](Inputs v) { return sub(v[0], v[1]); }};
}

GradCase case_mul(Rng& rng) {
  const Shape s = small_shape(rng);
  return {{uniform_tensor(rng, s, -2, 2), uniform_tensor(rng, partner_shape(rng, s), -2, 2)},
          [](Inputs v) { return mul(v[0], v[1]); }};
}

GradCase case_div(Rng& rng) {
  const Shape s = small_shape(rng);
  Tensor b = uniform_tensor(rng, partner_shape(rng, s), 0.5, 2.0);
  for (double& x : b.mutable_data())
    if (rng.bernoulli(0.5)) x = -x;
  return {{uniform_tensor(rng, s, -2, 2), std::move(b)}, [](Inputs v) { return div(v[0], v[1]); }};
}

GradCase case_relu(Rng& rng) {
  return {{kink_free_tensor(rng, small_shape(rng), -1, 1, {0.0}, 0.05)}, [](Inputs v) { return relu(v[0]); }};
}

GradCase case_sigmoid(Rng& rng) {
  return {{uniform_tensor(rng, small_shape(rng), -4, 4)}, [](Inputs v) { return sigmoid(v[0]); }};
}

GradCase case_clamp(Rng& rng) {
  return {{kink_free_tensor(rng, small_shape(rng), -1, 1, {-0.5, 0.5}, 0.05)},
          [](Inputs v) { return clamp(v[0], -0.5, 0.5); }};
}

GradCase case_log(Rng& rng) {
  return {{uniform_tensor(rng, small_shape(rng), 0.05, 2.0)}, [](Inputs v) { return log(v[0]); }};
}

GradCase case_affine(Rng& rng) {
  const double scale = rng.uniform(-2, 2);
  const double shift = rng.uniform(-1, 1);
  return {{uniform_tensor(rng, small_shape(rng), -2, 2)},
          [scale, shift](Inputs v) { return affine(v[0], scale, shift); }};
}

GradCase case_reshape(Rng& rng) {
  const std::size_t a = extent(rng, 2, 4), b = extent(rng, 2, 4);
  return {{uniform_tensor(rng, {a, b}, -2, 2)}, [a, b](Inputs v) { return reshape(v[0], {b, a}); }};
}

GradCase case_matmul(Rng& rng) {
  const std::size_t m = extent(rng, 1, 4), k = extent(rng, 1, 4), n = extent(rng, 1, 4);
  return {{uniform_tensor(rng, {m, k}, -2, 2), uniform_tensor(rng, {k, n}, -2, 2)},
          [](Inputs v) { return matmul(v[0], v[1]); }};
}

GradCase case_max_pool(Rng& rng) {
  return {{pool_input(rng, plane_shape(rng))}, [](Inputs v) { return max_pool(v[0]); }};
}

GradCase case_min_pool(Rng& rng) {
  return {{pool_input(rng, plane_shape(rng))}, [](Inputs v) { return min_pool(v[0]); }};
}

GradCase case_conv_dw3x3(Rng& rng) {
  const Shape s = plane_shape(rng, 3);
  return {{uniform_tensor(rng, s, -1, 1), uniform_tensor(rng, {s[0], 3, 3}, -1, 1), uniform_tensor(rng, {s[0]}, -1, 1)},
          [](Inputs v) { return conv_dw3x3(v[0], v[1], v[2]); }};
}

GradCase case_conv_pw1x1(Rng& rng) {
  const Shape s = plane_shape(rng, 3);
  const std::size_t out = extent(rng, 1, 3);
  GradCase c{{uniform_tensor(rng, s, -1, 1), uniform_tensor(rng, {out, s[0]}, -1, 1)}, {}};
  if (rng.bernoulli(0.5)) {
    c.inputs.push_back(uniform_tensor(rng, {out}, -1, 1));
    c.fn = [](Inputs v) { return conv_pw1x1(v[0], v[1], v[2]); };
  } else {
    c.fn = [](Inputs v) { return conv_pw1x1(v[0], v[1]); };
  }
  return c;
}

GradCase case_sum(Rng& rng) {
  return {{uniform_tensor(rng, small_shape(rng), -2, 2)}, [](Inputs v) { return sum(v[0]); }};
}

GradCase case_mean(Rng& rng) {
  return {{uniform_tensor(rng, small_shape(rng), -2, 2)}, [](Inputs v) { return mean(v[0]); }};
}

GradCase case_bce(Rng& rng) {
  const Shape s = plane_shape(rng, 1);
  Tensor target = binary_tensor(rng, s);
  return {{uniform_tensor(rng, s, 0.05, 0.95)},
          [target = std::move(target)](Inputs v) { return bce_loss(v[0], target); }};
}

GradCase case_bce_with_logits(Rng& rng) {
  const Shape s = plane_shape(rng, 1);
  Tensor target = binary_tensor(rng, s);
  return {{uniform_tensor(rng, s, -4, 4)},
          [target = std::move(target)](Inputs v) { return bce_with_logits(v[0], target); }};
}

GradCase case_dice(Rng& rng) {
  const Shape s = plane_shape(rng, 1);
  Tensor target = binary_tensor(rng, s);
  return {{uniform_tensor(rng, s, 0.05, 0.95)},
          [target = std::move(target)](Inputs v) { return soft_dice_loss(v[0], target); }};
}

GradCase case_soft_skeleton(Rng& rng) {
  const SkeletonConfig cfg{static_cast<int>(extent(rng, 1, 10))};
  return {{distinct_tensor(rng, plane_shape(rng, 1), 0.05, 0.95)},
          [cfg](Inputs v) { return soft_skeleton(v[0], cfg); }};
}

GradCase case_cl_dice(Rng& rng) {
  const Shape s = plane_shape(rng, 1);
  Tensor target = binary_tensor(rng, s, 0.6);
  const SkeletonConfig cfg{static_cast<int>(extent(rng, 1, 10))};
  return {{distinct_tensor(rng, s, 0.05, 0.95)},
          [target = std::move(target), cfg](Inputs v) { return cl_dice_loss(v[0], target, cfg); }};
}

GradCase case_combined(Rng& rng) {
  const Shape s = plane_shape(rng, 1);
  Tensor target = binary_tensor(rng, s, 0.6);
  return {{distinct_tensor(rng, s, 0.05, 0.95)}, [target = std::move(target)](Inputs v) {
            return combined_loss(v[0], target, LossWeights{}, SkeletonConfig{}).total;
          }};
}

GradCase case_lora(Rng& rng) {
  const std::size_t d_in = extent(rng, 2, 6), d_out = extent(rng, 2, 6);
  const std::size_t rank = extent(rng, 1, std::min(d_in, d_out));
  const double scale = rng.uniform(0.25, 4.0);
  Tensor w0 = uniform_tensor(rng, {d_out, d_in}, -1, 1);
  Tensor b0 = uniform_tensor(rng, {d_out}, -1, 1);
  return {{uniform_tensor(rng, {d_in}, -1, 1), uniform_tensor(rng, {rank, d_in}, -1, 1),
           uniform_tensor(rng, {d_out, rank}, -1, 1)},
          [w0 = std::move(w0), b0 = std::move(b0), scale](Inputs v) {
            Tape& tape = *v[0].tape();
            const LoraVars layer{tape.constant(w0), tape.constant(b0), v[1], v[2], scale};
            return lora_forward(layer, v[0]);
          }};
}

GradCase case_lora_spatial(Rng& rng) {
  const std::size_t c = extent(rng, 2, 4), rank = extent(rng, 1, c);
  const double scale = rng.uniform(0.25, 4.0);
  const Shape s{c, extent(rng, 3, 5), extent(rng, 3, 5)};
  Tensor w0 = uniform_tensor(rng, {c, c}, -1, 1);
  Tensor b0 = uniform_tensor(rng, {c}, -1, 1);
  return {{uniform_tensor(rng, s, -1, 1), uniform_tensor(rng, {rank, c}, -1, 1), uniform_tensor(rng, {c, rank}, -1, 1)},
          [w0 = std::move(w0), b0 = std::move(b0), scale](Inputs v) {
            Tape& tape = *v[0].tape();
            const LoraVars layer{tape.constant(w0), tape.constant(b0), v[1], v[2], scale};
            return lora_forward_spatial(layer, v[0]);
          }};
}

GradCase case_adapter(Rng& rng) {
  // Redraw until every depthwise pre-activation is clear of the relu kink.
  for (;;) {
    const Shape s = plane_shape(rng, 3);
    const std::size_t c = s[0];
    GradCase out{{uniform_tensor(rng, s, -1, 1), uniform_tensor(rng, {c, 3, 3}, -1, 1),
                  uniform_tensor(rng, {c}, -1, 1), uniform_tensor(rng, {c, c}, -1, 1),
                  uniform_tensor(rng, {c}, -1, 1)},
                 [](Inputs v) { return adapter_forward(AdapterVars{v[1], v[2], v[3], v[4]}, v[0]); }};
    Tape tape;
    const Var pre = conv_dw3x3(tape.constant(out.inputs[0]), tape.constant(out.inputs[1]),
                               tape.constant(out.inputs[2]));
    const auto values = pre.value().data();
    if (std::all_of(values.begin(), values.end(), [](double x) { return std::abs(x) >= 0.02; })) return out;
  }
}

struct OpSpec {
  std::string_view name;
  CaseFactory make;
};

constexpr OpSpec kOps[] = {
    {"add", case_add},
    {"sub", case_sub},
    {"mul", case_mul},
    {"div", case_div},
    {"relu", case_relu},
    {"sigmoid", case_sigmoid},
    {"clamp", case_clamp},
    {"log", case_log},
    {"affine", case_affine},
    {"reshape", case_reshape},
    {"matmul", case_matmul},
    {"max_pool", case_max_pool},
    {"min_pool", case_min_pool},
    {"conv_dw3x3", case_conv_dw3x3},
    {"conv_pw1x1", case_conv_pw1x1},
    {"sum", case_sum},
    {"mean", case_mean},
    {"soft_skeleton", case_soft_skeleton},
    {"bce", case_bce},
    {"bce_with_logits", case_bce_with_logits},
    {"dice", case_dice},
    {"cl_dice", case_cl_dice},
    {"combined", case_combined},
    {"lora", case_lora},
    {"lora_spatial", case_lora_spatial},
    {"adapter", case_adapter},
};

// Scalar probe: sum(fn(inputs) * weights). Random weights exercise every
// output coordinate of the Jacobian.
Var probe(const GradCase& c, Inputs vars, const Tensor& weights) {
  const Var out = c.fn(vars);
  Tape& tape = *out.tape();
  return sum(mul(out, tape.constant(weights)));
}

WorstCase run_trial(const GradCase& c, Rng& rng, double step) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : c.inputs) vars.push_back(tape.variable(t));
  const Shape out_shape = c.fn(vars).shape();
  const Tensor weights = uniform_tensor(rng, out_shape, 0.5, 1.5);
  const Gradients grads = tape.backward(probe(c, vars, weights));

  WorstCase result;
  result.inputs = c.inputs;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    auto f = [&](const Tensor& xi) {
      Tape t;
      std::vector<Var> v;
      for (std::size_t j = 0; j < c.inputs.size(); ++j) v.push_back(t.constant(j == i ? xi : c.inputs[j]));
      return probe(c, v, weights).item();
    };
    Tensor fd = finite_diff_grad(f, c.inputs[i], step);
    const Tensor& ad = grads.at(vars[i]);
    result.error = std::max(result.error, max_relative_error(ad, fd));
    result.autodiff.push_back(ad);
    result.finite_difference.push_back(std::move(fd));
  }
  return result;
}

nlohmann::ordered_json tensor_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"values", t.values()}};
}

}  // namespace

std::vector<std::string_view> gradcheck_op_names() {
  std::vector<std::string_view> names;
  for (const auto& op : kOps) names.push_back(op.name);
  return names;
}

std::vector<OpCheck> run_gradcheck(const GradcheckOptions& options) {
  if (options.trials == 0) throw ValueError("gradcheck: trials must be >= 1");
  if (!(options.tolerance > 0.0)) throw ValueError("gradcheck: tolerance must be positive");
  for (const auto& name : options.ops) {
    const auto names = gradcheck_op_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw ValueError("gradcheck: unknown op '" + name + "'");
    }
  }

  std::vector<OpCheck> checks;
  for (std::size_t k = 0; k < std::size(kOps); ++k) {
    const OpSpec& op = kOps[k];
    if (!options.ops.empty() &&
        std::find(options.ops.begin(), options.ops.end(), op.name) == options.ops.end()) {
      continue;
    }
    OpCheck check;
    check.op = op.name;
    const std::uint64_t op_seed = derive_seed(options.seed, k);
    for (std::size_t trial = 0; trial < options.trials; ++trial) {
      Rng rng(derive_seed(op_seed, trial));
      const GradCase c = op.make(rng);
      WorstCase w = run_trial(c, rng, options.step);
      w.trial = trial;
      // NaN counts as worst so that it is reported.
      if (trial == 0 || !(w.error <= check.max_error)) {
        check.max_error = w.error;
        check.worst = std::move(w);
      }
      ++check.trials;
    }
    check.passed = check.max_error < options.tolerance;
    checks.push_back(std::move(check));
  }
  return checks;
}

std::string worst_cases_json(const std::vector<OpCheck>& checks, std::uint64_t seed) {
  auto list = [](const std::vector<Tensor>& ts) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& t : ts) a.push_back(tensor_json(t));
    return a;
  };
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& check : checks) {
    nlohmann::ordered_json entry;
    entry["op"] = check.op;
    entry["seed"] = seed;
    entry["trial"] = check.worst.trial;
    entry["max_relative_error"] = check.worst.error;
    entry["inputs"] = list(check.worst.inputs);
    entry["autodiff"] = list(check.worst.autodiff);
    entry["finite_difference"] = list(check.worst.finite_difference);
    doc.push_back(std::move(entry));
  }
  return doc.dump(2) + "\n";
}

}  // namespace toposeg::cli
