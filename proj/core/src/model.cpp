#include "toposeg/model.hpp"

#include <cmath>
#include <string>

#include "toposeg/error.hpp"
#include "toposeg/rng.hpp"

namespace toposeg {

void ModelConfig::validate() const {
  if (channels < 1) throw ValueError("model: channels must be >= 1");
  if (lora_rank < 1 || lora_rank > channels) {
    throw ValueError("model: lora rank " + std::to_string(lora_rank) + " outside [1, channels]");
  }
  if (lora_alpha < 0.0) throw ValueError("model: lora alpha must be >= 0");
}

namespace {

// Parameter layout: stem (2), per block (4), adapter (4), head (2).
constexpr std::size_t kStem = 0;
constexpr std::size_t kBlocks = 2;
constexpr std::size_t kPerBlock = 4;

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

ToyModel::ToyModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t c = config_.channels;
  Rng rng(derive_seed(seed, 0));

  params_.push_back({"stem.weight", uniform_tensor({c, 1}, 2.0, rng), false});
  params_.push_back({"stem.bias", uniform_tensor({c}, 1.0, rng), false});
  for (std::size_t b = 0; b < config_.lora_blocks; ++b) {
    const std::string prefix = "block" + std::to_string(b) + ".";
    Tensor base = uniform_tensor({c, c}, std::sqrt(6.0 / static_cast<double>(c)), rng);
    auto [a, bf] = lora_init(c, c, config_.lora_rank, derive_seed(seed, 100 + b));
    params_.push_back({prefix + "base_weight", std::move(base), false});
    params_.push_back({prefix + "base_bias", Tensor({c}, 0.0), false});
    params_.push_back({prefix + "lora_a", std::move(a), true});
    params_.push_back({prefix + "lora_b", std::move(bf), true});
  }
  AdapterParams adapter = AdapterParams::init(c, derive_seed(seed, 200));
  params_.push_back({"adapter.dw_weight", std::move(adapter.dw_weight), true});
  params_.push_back({"adapter.dw_bias", std::move(adapter.dw_bias), true});
  params_.push_back({"adapter.pw_weight", std::move(adapter.pw_weight), true});
  params_.push_back({"adapter.pw_bias", std::move(adapter.pw_bias), true});
  params_.push_back({"head.weight", uniform_tensor({1, c}, 1.0 / std::sqrt(static_cast<double>(c)), rng), true});
  params_.push_back({"head.bias", Tensor({1}, 0.0), true});
}

const Parameter& ToyModel::parameter(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ValueError("model has no parameter '" + std::string(name) + "'");
}

void ToyModel::load_parameters(std::span<const Parameter> values) {
  if (values.size() != params_.size()) throw ShapeError("model: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].name != params_[i].name || values[i].value.shape() != params_[i].value.shape()) {
      throw ShapeError("model: parameter '" + values[i].name + "' does not match '" + params_[i].name + "'");
    }
  }
  for (std::size_t i = 0; i < values.size(); ++i) params_[i].value = values[i].value;
}

ToyModel::Binding ToyModel::bind(Tape& tape) const {
  Binding binding;
  binding.leaves.reserve(params_.size());
  for (const auto& p : params_) binding.leaves.push_back(tape.leaf(p.value, p.trainable));
  return binding;
}

Var ToyModel::forward(const Binding& binding, const Var& image) const {
  const auto& v = binding.leaves;
  if (v.size() != params_.size()) throw ValueError("model: binding does not match parameters");
  if (image.value().rank() != 3 || image.shape()[0] != 1) {
    throw ShapeError("model: expected a 1xHxW image, got " + shape_to_string(image.shape()));
  }
  const double rank = static_cast<double>(config_.lora_rank);
  const double alpha = config_.lora_alpha > 0.0 ? config_.lora_alpha : rank;

  Var h = relu(conv_pw1x1(image, v[kStem], v[kStem + 1]));
  for (std::size_t b = 0; b < config_.lora_blocks; ++b) {
    const std::size_t o = kBlocks + b * kPerBlock;
    const LoraVars lora{v[o], v[o + 1], v[o + 2], v[o + 3], alpha / rank};
    h = relu(lora_forward_spatial(lora, h));
  }
  const std::size_t a = kBlocks + config_.lora_blocks * kPerBlock;
  h = adapter_forward(AdapterVars{v[a], v[a + 1], v[a + 2], v[a + 3]}, h);
  return sigmoid(conv_pw1x1(h, v[a + 4], v[a + 5]));
}

Tensor ToyModel::predict(const Tensor& image) const {
  Tape tape;
  Binding binding;
  for (const auto& p : params_) binding.leaves.push_back(tape.constant(p.value));
  return forward(binding, tape.constant(image)).value();
}

std::size_t ToyModel::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable) n += p.value.numel();
  return n;
}

std::size_t ToyModel::total_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

ParamConfig ToyModel::param_config() const {
  const std::size_t c = config_.channels;
  ParamConfig cfg;
  cfg.lora_layers = {{c, c}};
  cfg.rank = config_.lora_rank;
  cfg.n_blocks = config_.lora_blocks;
  cfg.adapter_channels = c;
  cfg.head_params = c + 1;
  cfg.frozen_params = 2 * c + config_.lora_blocks * (c * c + c);
  return cfg;
}

}  // namespace toposeg
