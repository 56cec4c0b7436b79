#include "toposeg/peft.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "toposeg/error.hpp"
#include "toposeg/rng.hpp"

namespace toposeg {

void LoraLayer::validate() const {
  if (base_weight.rank() != 2) throw ShapeError("lora: base weight must be a matrix");
  const std::size_t din = d_in(), dout = d_out();
  if (base_bias.shape() != Shape{dout}) throw ShapeError("lora: base bias must have d_out entries");
  if (rank < 1 || rank > std::min(din, dout)) {
    throw ValueError("lora: rank " + std::to_string(rank) + " outside [1, min(d_in, d_out)]");
  }
  if (a.shape() != Shape{rank, din}) throw ShapeError("lora: A must be rank x d_in");
  if (b.shape() != Shape{dout, rank}) throw ShapeError("lora: B must be d_out x rank");
  if (!(alpha > 0.0)) throw ValueError("lora: alpha must be positive");
}

LoraFactors lora_init(std::size_t d_in, std::size_t d_out, std::size_t rank, std::uint64_t seed) {
  if (d_in == 0 || d_out == 0) throw ValueError("lora_init: extents must be positive");
  if (rank < 1 || rank > std::min(d_in, d_out)) {
    throw ValueError("lora_init: rank " + std::to_string(rank) + " outside [1, min(d_in, d_out)]");
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(d_in));
  Rng rng(seed);
  std::vector<double> a(rank * d_in);
  for (double& v : a) v = rng.uniform(-bound, bound);
  return {Tensor({rank, d_in}, std::move(a)), Tensor({d_out, rank}, 0.0)};
}

LoraLayer make_lora_layer(Tensor base_weight, Tensor base_bias, std::size_t rank,
                          std::uint64_t seed, std::optional<double> alpha) {
  if (base_weight.rank() != 2) throw ShapeError("lora: base weight must be a matrix");
  auto [a, b] = lora_init(base_weight.dim(1), base_weight.dim(0), rank, seed);
  LoraLayer layer{std::move(base_weight), std::move(base_bias), std::move(a), std::move(b),
                  alpha.value_or(static_cast<double>(rank)), rank};
  layer.validate();
  return layer;
}

LoraVars bind_lora(Tape& tape, const LoraLayer& layer) {
  layer.validate();
  return {tape.constant(layer.base_weight), tape.constant(layer.base_bias),
          tape.variable(layer.a), tape.variable(layer.b), layer.scale()};
}

Var lora_forward(const LoraVars& layer, const Var& x) {
  const std::size_t d_in = layer.base_weight.value().dim(1);
  const std::size_t d_out = layer.base_weight.value().dim(0);
  if (x.shape() != Shape{d_in}) {
    throw ShapeError("lora_forward: input " + shape_to_string(x.shape()) + " but d_in = " +
                     std::to_string(d_in));
  }
  const Var column = reshape(x, {d_in, 1});
  const Var base = add(reshape(matmul(layer.base_weight, column), {d_out}), layer.base_bias);
  const Var delta = reshape(matmul(layer.b, matmul(layer.a, column)), {d_out});
  return add(base, affine(delta, layer.scale, 0.0));
}

Var lora_forward_spatial(const LoraVars& layer, const Var& x) {
  const Var base = conv_pw1x1(x, layer.base_weight, layer.base_bias);
  const Var delta = conv_pw1x1(conv_pw1x1(x, layer.a), layer.b);
  return add(base, affine(delta, layer.scale, 0.0));
}

Tensor lora_forward(const LoraLayer& layer, const Tensor& x) {
  Tape tape;
  return lora_forward(bind_lora(tape, layer), tape.constant(x)).value();
}

AdapterParams AdapterParams::zeros(std::size_t channels) {
  if (channels == 0) throw ValueError("adapter: channel count must be positive");
  return {Tensor({channels, 3, 3}, 0.0), Tensor({channels}, 0.0), Tensor({channels, channels}, 0.0),
          Tensor({channels}, 0.0)};
}

AdapterParams AdapterParams::init(std::size_t channels, std::uint64_t seed) {
  AdapterParams p = zeros(channels);
  Rng rng(seed);
  for (double& v : p.dw_weight.mutable_data()) v = rng.uniform(-1.0 / 3.0, 1.0 / 3.0);
  return p;
}

void AdapterParams::validate() const {
  const std::size_t c = channels();
  if (c == 0 || dw_bias.rank() != 1) throw ShapeError("adapter: depthwise bias must be a vector");
  if (dw_weight.shape() != Shape{c, 3, 3}) throw ShapeError("adapter: depthwise kernel must be Cx3x3");
  if (pw_weight.shape() != Shape{c, c}) throw ShapeError("adapter: pointwise weight must be CxC");
  if (pw_bias.shape() != Shape{c}) throw ShapeError("adapter: pointwise bias must have C entries");
}

AdapterVars bind_adapter(Tape& tape, const AdapterParams& params, bool trainable) {
  params.validate();
  return {tape.leaf(params.dw_weight, trainable), tape.leaf(params.dw_bias, trainable),
          tape.leaf(params.pw_weight, trainable), tape.leaf(params.pw_bias, trainable)};
}

Var adapter_forward(const AdapterVars& params, const Var& z) {
  const std::size_t c = params.dw_bias.value().numel();
  if (z.value().rank() != 3 || z.shape()[0] != c) {
    throw ShapeError("adapter_forward: expected " + std::to_string(c) + " channels, got " +
                     shape_to_string(z.shape()));
  }
  const Var hidden = relu(conv_dw3x3(z, params.dw_weight, params.dw_bias));
  return add(z, conv_pw1x1(hidden, params.pw_weight, params.pw_bias));
}

Tensor adapter_forward(const AdapterParams& params, const Tensor& z) {
  Tape tape;
  return adapter_forward(bind_adapter(tape, params, false), tape.constant(z)).value();
}

ParamConfig ParamConfig::vit_b_ffn(std::size_t rank) {
  ParamConfig cfg;
  cfg.lora_layers = {{768, 3072}, {3072, 768}};
  cfg.rank = rank;
  cfg.n_blocks = 12;
  return cfg;
}

ParamBudget ParamBudget::from_components(std::uint64_t lora, std::uint64_t adapter,
                                         std::uint64_t head, std::uint64_t total) {
  ParamBudget b;
  b.lora = lora;
  b.adapter = adapter;
  b.head = head;
  b.trainable = lora + adapter + head;
  b.total = total;
  if (total < b.trainable) throw ValueError("param budget: total smaller than trainable count");
  b.trainable_fraction =
      total == 0 ? 0.0 : static_cast<double>(b.trainable) / static_cast<double>(total);
  return b;
}

ParamBudget count_params(const ParamConfig& config) {
  std::uint64_t per_block = 0;
  for (auto [d_in, d_out] : config.lora_layers) per_block += config.rank * (d_in + d_out);
  const std::uint64_t lora = config.n_blocks * per_block;
  const std::uint64_t c = config.adapter_channels;
  const std::uint64_t adapter = 9 * c + c + c * c + c;
  const std::uint64_t trainable = lora + adapter + config.head_params;
  return ParamBudget::from_components(lora, adapter, config.head_params,
                                      trainable + config.frozen_params);
}

}  // namespace toposeg
