#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "toposeg/error.hpp"
#include "toposeg/model.hpp"
#include "toposeg/optim.hpp"
#include "toposeg/peft.hpp"

namespace toposeg {
namespace {

using test::random_tensor;

Tensor base_output(const LoraLayer& layer, const Tensor& x) {
  std::vector<double> out(layer.d_out());
  for (std::size_t o = 0; o < layer.d_out(); ++o) {
    double acc = 0.0;
    for (std::size_t i = 0; i < layer.d_in(); ++i) acc += layer.base_weight[o * layer.d_in() + i] * x[i];
    out[o] = acc + layer.base_bias[o];
  }
  return Tensor({layer.d_out()}, std::move(out));
}

TEST(LoraInit, BIsZeroAndADeterministic) {
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    const auto f = lora_init(12, 7, 3, seed);
    EXPECT_EQ(f.b, Tensor({7, 3}, 0.0));
    EXPECT_EQ(f.a.shape(), (Shape{3, 12}));
    EXPECT_EQ(lora_init(12, 7, 3, seed).a, f.a);
  }
  EXPECT_NE(lora_init(12, 7, 3, 0).a, lora_init(12, 7, 3, 1).a);
}

TEST(LoraInit, KaimingBound) {
  const auto f = lora_init(768, 768, 16, 5);
  const double bound = std::sqrt(6.0 / 768.0);
  EXPECT_NEAR(bound, 0.0884, 1e-4);
  double widest = 0.0;
  for (double v : f.a.data()) widest = std::max(widest, std::abs(v));
  EXPECT_LE(widest, bound);
  EXPECT_GT(widest, 0.9 * bound);
}

TEST(LoraInit, RankOutOfRangeThrows) {
  EXPECT_THROW(lora_init(4, 8, 0, 0), ValueError);
  EXPECT_THROW(lora_init(4, 8, 5, 0), ValueError);
  EXPECT_NO_THROW(lora_init(4, 8, 4, 0));
}

TEST(Lora, FreshLayerEqualsFrozenBaseExactly) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d_in = 1 + rng.index(12), d_out = 1 + rng.index(12);
    const std::size_t rank = 1 + rng.index(std::min(d_in, d_out));
    const LoraLayer layer = make_lora_layer(random_tensor(rng, {d_out, d_in}, -1, 1),
                                            random_tensor(rng, {d_out}, -1, 1), rank, rng.next_u64());
    const Tensor x = random_tensor(rng, {d_in}, -2, 2);
    ASSERT_EQ(lora_forward(layer, x), base_output(layer, x));
  }
}

TEST(Lora, HandComputedValue) {
  LoraLayer layer{Tensor::matrix({{2}}), Tensor::vector({0}), Tensor::matrix({{3}}), Tensor::matrix({{4}}), 2.0, 1};
  EXPECT_EQ(lora_forward(layer, Tensor::vector({1})).item(), 26.0);
}

TEST(Lora, AlphaScalesTheLowRankTermLinearly) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    LoraLayer layer = make_lora_layer(random_tensor(rng, {5, 6}, -1, 1), random_tensor(rng, {5}, -1, 1), 3, trial);
    layer.b = random_tensor(rng, {5, 3}, -1, 1);
    const Tensor x = random_tensor(rng, {6}, -1, 1);
    const Tensor base = base_output(layer, x);
    layer.alpha = 1.5;
    const Tensor one = lora_forward(layer, x);
    layer.alpha = 3.0;
    const Tensor two = lora_forward(layer, x);
    for (std::size_t i = 0; i < 5; ++i) {
      const double d1 = one[i] - base[i], d2 = two[i] - base[i];
      EXPECT_NEAR(d2, 2.0 * d1, 1e-12 * std::max(1.0, std::abs(d2)));
    }
  }
}

TEST(Lora, AlphaDefaultsToRank) {
  const LoraLayer layer = make_lora_layer(Tensor({4, 4}, 0.5), Tensor({4}, 0.0), 3, 0);
  EXPECT_EQ(layer.alpha, 3.0);
  EXPECT_EQ(layer.scale(), 1.0);
  EXPECT_EQ(layer.trainable_count(), 3u * 4 + 4 * 3);
}

TEST(Lora, OnlyFactorsReceiveGradient) {
  Rng rng(3);
  const LoraLayer layer = make_lora_layer(random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, {3}, -1, 1), 2, 0);
  Tape tape;
  const LoraVars v = bind_lora(tape, layer);
  const Gradients g = tape.backward(sum(lora_forward(v, tape.constant(random_tensor(rng, {4}, -1, 1)))));
  EXPECT_FALSE(g.contains(v.base_weight));
  EXPECT_FALSE(g.contains(v.base_bias));
  EXPECT_TRUE(g.contains(v.a));
  EXPECT_TRUE(g.contains(v.b));
}

TEST(Lora, SpatialFormMatchesPerPixelForm) {
  Rng rng(4);
  LoraLayer layer = make_lora_layer(random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, {3}, -1, 1), 2, 0);
  layer.b = random_tensor(rng, {3, 2}, -1, 1);
  const Tensor x = random_tensor(rng, {4, 2, 3}, -1, 1);
  Tape tape;
  const Tensor y = lora_forward_spatial(bind_lora(tape, layer), tape.constant(x)).value();
  for (std::size_t px = 0; px < 6; ++px) {
    const Tensor xi({4}, std::vector<double>{x[px], x[6 + px], x[12 + px], x[18 + px]});
    const Tensor yi = lora_forward(layer, xi);
    for (std::size_t o = 0; o < 3; ++o) EXPECT_NEAR(y[o * 6 + px], yi[o], 1e-12);
  }
}

TEST(Adapter, ZeroParametersAreIdentity) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 1 + rng.index(6);
    const Tensor z = random_tensor(rng, {c, 5, 4}, -3, 3);
    ASSERT_EQ(adapter_forward(AdapterParams::zeros(c), z), z);
  }
}

TEST(Adapter, FreshInitIsIdentity) {
  Rng rng(6);
  const Tensor z = random_tensor(rng, {4, 6, 6}, -1, 1);
  EXPECT_EQ(adapter_forward(AdapterParams::init(4, 3), z), z);
}

TEST(Adapter, DoublesNonNegativeInputUnderIdentityKernels) {
  AdapterParams p = AdapterParams::zeros(1);
  p.dw_weight[4] = 1.0;
  p.pw_weight[0] = 1.0;
  Rng rng(7);
  const Tensor z = random_tensor(rng, {1, 4, 5}, 0, 2);
  const Tensor out = adapter_forward(p, z);
  for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_EQ(out[i], 2.0 * z[i]);
}

TEST(Adapter, RejectsChannelMismatch) {
  EXPECT_THROW(adapter_forward(AdapterParams::zeros(2), Tensor({3, 2, 2}, 0.0)), ShapeError);
  EXPECT_THROW(AdapterParams::zeros(0), ValueError);
}

TEST(ParamCount, AdapterAt256Channels) {
  ParamConfig cfg;
  cfg.adapter_channels = 256;
  const ParamBudget b = count_params(cfg);
  EXPECT_EQ(b.adapter, 68352u);
  EXPECT_EQ(b.lora, 0u);
  EXPECT_EQ(AdapterParams::zeros(256).parameter_count(), 68352u);
}

TEST(ParamCount, VitBFeedForwardLora) {
  EXPECT_EQ(count_params(ParamConfig::vit_b_ffn(16)).lora, 1474560u);
  ParamConfig none = ParamConfig::vit_b_ffn(16);
  none.n_blocks = 0;
  EXPECT_EQ(count_params(none).lora, 0u);
}

TEST(ParamCount, StatedComponentsGiveTableFraction) {
  const ParamBudget b = ParamBudget::from_components(2'400'000, 66'000, 2'400'000, 93'700'000);
  EXPECT_EQ(b.trainable, 4'866'000u);
  EXPECT_NEAR(100.0 * b.trainable_fraction, 5.19, 0.005);
  EXPECT_THROW(ParamBudget::from_components(10, 0, 0, 5), ValueError);
}

TEST(ParamCount, PartsSumToTotals) {
  ParamConfig cfg = ParamConfig::vit_b_ffn(8);
  cfg.adapter_channels = 32;
  cfg.head_params = 33;
  cfg.frozen_params = 1000;
  const ParamBudget b = count_params(cfg);
  EXPECT_EQ(b.trainable, b.lora + b.adapter + b.head);
  EXPECT_EQ(b.total, b.trainable + 1000);
  EXPECT_GT(b.trainable_fraction, 0.0);
  EXPECT_LE(b.trainable_fraction, 1.0);
}

TEST(ParamCount, MatchesToyModelTensors) {
  for (std::size_t rank : {4u, 8u, 16u, 32u}) {
    const ToyModel model(ModelConfig{.lora_rank = rank}, 0);
    const ParamBudget b = count_params(model.param_config());
    EXPECT_EQ(b.trainable, model.trainable_count());
    EXPECT_EQ(b.total, model.total_count());
  }
}

TEST(FrozenWeights, OptimizerNeverTouchesThem) {
  ToyModel model(ModelConfig{.channels = 4, .lora_rank = 2}, 1);
  std::vector<Parameter> params(model.parameters().begin(), model.parameters().end());
  const std::vector<Parameter> initial = params;
  OptState state = OptState::zeros_like(params);
  Rng rng(8);
  for (int step = 0; step < 10; ++step) {
    std::vector<Tensor> grads;
    for (const auto& p : params) grads.push_back(random_tensor(rng, p.value.shape(), -1, 1));
    adamw_step(params, grads, state, AdamWHyper{.lr = 0.1, .weight_decay = 0.1});
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].trainable) {
      EXPECT_NE(params[i].value, initial[i].value) << params[i].name;
    } else {
      EXPECT_EQ(params[i].value, initial[i].value) << params[i].name;
    }
  }
}

}  // namespace
}  // namespace toposeg
