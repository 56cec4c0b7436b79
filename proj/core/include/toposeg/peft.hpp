#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "toposeg/autodiff.hpp"
#include "toposeg/tensor.hpp"

namespace toposeg {

/// Frozen linear layer with a trainable low-rank update.
///
///   h = W0 x + b0 + (alpha / rank) * B (A x)
///
/// W0 is d_out x d_in, A is rank x d_in, B is d_out x rank.
struct LoraLayer {
  Tensor base_weight;
  Tensor base_bias;
  Tensor a;
  Tensor b;
  double alpha = 1.0;
  std::size_t rank = 1;

  std::size_t d_in() const { return base_weight.dim(1); }
  std::size_t d_out() const { return base_weight.dim(0); }
  double scale() const { return alpha / static_cast<double>(rank); }
  std::size_t trainable_count() const { return a.numel() + b.numel(); }

  void validate() const;
};

struct LoraFactors {
  Tensor a;
  Tensor b;
};

/// A drawn Kaiming-uniform in [-sqrt(6/d_in), sqrt(6/d_in)], B all zeros.
/// Requires 1 <= rank <= min(d_in, d_out).
LoraFactors lora_init(std::size_t d_in, std::size_t d_out, std::size_t rank, std::uint64_t seed);

/// Wraps a frozen layer. `alpha` defaults to `rank`.
LoraLayer make_lora_layer(Tensor base_weight, Tensor base_bias, std::size_t rank,
                          std::uint64_t seed, std::optional<double> alpha = std::nullopt);

/// Tape bindings: base tensors are constants, factors are variables.
struct LoraVars {
  Var base_weight;
  Var base_bias;
  Var a;
  Var b;
  double scale = 1.0;
};

LoraVars bind_lora(Tape& tape, const LoraLayer& layer);

/// x has shape [d_in]; result has shape [d_out].
Var lora_forward(const LoraVars& layer, const Var& x);
/// Applies the layer independently at every pixel of a d_in x H x W map.
Var lora_forward_spatial(const LoraVars& layer, const Var& x);

Tensor lora_forward(const LoraLayer& layer, const Tensor& x);

/// Residual depthwise-separable adapter:
///   z' = z + pw(relu(dw3x3(z)))
struct AdapterParams {
  Tensor dw_weight;  // C x 3 x 3
  Tensor dw_bias;    // C
  Tensor pw_weight;  // C x C
  Tensor pw_bias;    // C

  static AdapterParams zeros(std::size_t channels);
  /// Depthwise kernels uniform in +-1/3, pointwise projection zero, so the
  /// adapter starts as the identity but receives gradient on every weight.
  static AdapterParams init(std::size_t channels, std::uint64_t seed);

  std::size_t channels() const { return dw_bias.numel(); }
  std::size_t parameter_count() const {
    return dw_weight.numel() + dw_bias.numel() + pw_weight.numel() + pw_bias.numel();
  }
  void validate() const;
};

struct AdapterVars {
  Var dw_weight;
  Var dw_bias;
  Var pw_weight;
  Var pw_bias;
};

AdapterVars bind_adapter(Tape& tape, const AdapterParams& params, bool trainable = true);
Var adapter_forward(const AdapterVars& params, const Var& z);
Tensor adapter_forward(const AdapterParams& params, const Tensor& z);

/// Shape of a PEFT configuration for closed-form parameter counting.
struct ParamConfig {
  /// (d_in, d_out) of every LoRA-wrapped layer inside one block.
  std::vector<std::pair<std::size_t, std::size_t>> lora_layers;
  std::size_t rank = 16;
  std::size_t n_blocks = 0;
  /// Adapter channel count; 0 disables the adapter.
  std::size_t adapter_channels = 0;
  std::size_t head_params = 0;
  /// Parameters that stay frozen (backbone, LoRA bases).
  std::uint64_t frozen_params = 0;

  /// LoRA on lin1 (768->3072) and lin2 (3072->768) of 12 ViT-B blocks.
  static ParamConfig vit_b_ffn(std::size_t rank);
};

struct ParamBudget {
  std::uint64_t lora = 0;
  std::uint64_t adapter = 0;
  std::uint64_t head = 0;
  std::uint64_t trainable = 0;
  std::uint64_t total = 0;
  double trainable_fraction = 0.0;

  /// Budget from explicit component sizes and an overall model size.
  static ParamBudget from_components(std::uint64_t lora, std::uint64_t adapter,
                                     std::uint64_t head, std::uint64_t total);
};

/// lora = n_blocks * sum_layers rank * (d_in + d_out);
/// adapter = 9C + C + C^2 + C; total = trainable + frozen.
ParamBudget count_params(const ParamConfig& config);

}  // namespace toposeg
