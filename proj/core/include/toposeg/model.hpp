#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "toposeg/autodiff.hpp"
#include "toposeg/optim.hpp"
#include "toposeg/peft.hpp"

namespace toposeg {

struct ModelConfig {
  std::size_t channels = 32;
  std::size_t lora_blocks = 1;
  std::size_t lora_rank = 16;
  /// 0 means alpha = rank.
  double lora_alpha = 0.0;

  void validate() const;
};

/// Per-pixel thin-structure segmenter in miniature:
///
///   h = relu(stem(x))                 frozen 1 -> C lift
///   h = relu(lora_i(h))               frozen C x C bases, trainable A/B
///   h = adapter(h)                    trainable residual dw3x3 -> relu -> pw
///   p = sigmoid(head(h))              trainable C -> 1
class ToyModel {
 public:
  ToyModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::span<Parameter> parameters() { return params_; }
  std::span<const Parameter> parameters() const { return params_; }
  const Parameter& parameter(std::string_view name) const;

  /// Replaces all parameter values; names and shapes must match.
  void load_parameters(std::span<const Parameter> values);

  struct Binding {
    std::vector<Var> leaves;  // parallel to parameters()
  };
  Binding bind(Tape& tape) const;
  /// image: 1 x H x W; returns the 1 x H x W foreground probability.
  Var forward(const Binding& binding, const Var& image) const;
  Tensor predict(const Tensor& image) const;

  std::size_t trainable_count() const;
  std::size_t total_count() const;
  /// Closed-form counting configuration matching this model.
  ParamConfig param_config() const;

 private:
  ModelConfig config_;
  std::vector<Parameter> params_;
};

}  // namespace toposeg
