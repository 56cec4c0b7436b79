#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "toposeg/error.hpp"
#include "toposeg/optim.hpp"

namespace toposeg {
namespace {

std::vector<Parameter> scalar_param(double v) { return {{"p", Tensor::vector({v}), true}}; }

TEST(AdamW, ZeroGradientWithoutDecayLeavesParameters) {
  auto params = scalar_param(0.75);
  OptState state = OptState::zeros_like(params);
  const std::vector<Tensor> grads{Tensor::vector({0.0})};
  for (int i = 0; i < 5; ++i) adamw_step(params, grads, state, AdamWHyper{.lr = 0.1, .weight_decay = 0.0});
  EXPECT_EQ(params[0].value[0], 0.75);
  EXPECT_EQ(state.step, 5u);
}

TEST(AdamW, FirstStepMovesBySignTimesLr) {
  for (double g : {3.0, -0.02, 1e-3}) {
    auto params = scalar_param(1.0);
    OptState state = OptState::zeros_like(params);
    const AdamWHyper hyper{.lr = 0.01, .weight_decay = 0.0};
    adamw_step(params, std::vector<Tensor>{Tensor::vector({g})}, state, hyper);
    const double expected = -hyper.lr * g / (std::abs(g) + hyper.eps);
    EXPECT_NEAR(params[0].value[0] - 1.0, expected, 1e-15);
    EXPECT_NEAR(params[0].value[0] - 1.0, -0.01 * (g > 0 ? 1 : -1), 1e-7);
  }
}

TEST(AdamW, DecoupledDecayShrinksParameters) {
  auto params = scalar_param(2.0);
  OptState state = OptState::zeros_like(params);
  adamw_step(params, std::vector<Tensor>{Tensor::vector({0.0})}, state, AdamWHyper{.lr = 0.01, .weight_decay = 0.1});
  EXPECT_NEAR(params[0].value[0], 2.0 * (1.0 - 0.001), 1e-15);
}

TEST(AdamW, SkipsFrozenParameters) {
  std::vector<Parameter> params{{"frozen", Tensor::vector({1.0}), false}, {"live", Tensor::vector({1.0}), true}};
  OptState state = OptState::zeros_like(params);
  adamw_step(params, std::vector<Tensor>{Tensor::vector({5.0}), Tensor::vector({0.0})}, state, AdamWHyper{.lr = 0.1});
  adamw_step(params, std::vector<Tensor>{Tensor(), Tensor::vector({0.0})}, state, AdamWHyper{.lr = 0.1});
  EXPECT_EQ(params[0].value[0], 1.0);
  EXPECT_LT(params[1].value[0], 1.0);  // decay still applies
}

TEST(AdamW, RejectsMismatchedInputs) {
  auto params = scalar_param(1.0);
  OptState state = OptState::zeros_like(params);
  EXPECT_THROW(adamw_step(params, std::vector<Tensor>{Tensor::vector({1, 2})}, state, AdamWHyper{}), ShapeError);
  EXPECT_THROW(adamw_step(params, std::vector<Tensor>{}, state, AdamWHyper{}), ShapeError);
  EXPECT_THROW((AdamWHyper{.beta1 = 1.0}).validate(), ValueError);
  EXPECT_THROW((AdamWHyper{.eps = 0.0}).validate(), ValueError);
}

TEST(CosineLr, EndpointsAndMidpoint) {
  EXPECT_EQ(cosine_lr(0, 200, 1e-3, 1e-5), 1e-3);
  EXPECT_NEAR(cosine_lr(200, 200, 1e-3, 1e-5), 1e-5, 1e-18);
  EXPECT_NEAR(cosine_lr(100, 200, 1e-3, 1e-5), (1e-3 + 1e-5) / 2, 1e-15);
  EXPECT_THROW(cosine_lr(201, 200, 1e-3, 1e-5), ValueError);
}

TEST(CosineLr, MonotoneNonIncreasing) {
  double prev = cosine_lr(0, 317, 0.1, 0.001);
  for (std::uint64_t s = 1; s <= 317; ++s) {
    const double lr = cosine_lr(s, 317, 0.1, 0.001);
    ASSERT_LE(lr, prev);
    prev = lr;
  }
}

TEST(GlobalNorm, SkipsEmptyTensors) {
  const std::vector<Tensor> g{Tensor::vector({3}), Tensor(), Tensor::vector({4})};
  EXPECT_EQ(global_norm(g), 5.0);
}

}  // namespace
}  // namespace toposeg
