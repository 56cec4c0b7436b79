#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "toposeg/autodiff.hpp"
#include "toposeg/error.hpp"
#include "toposeg/losses.hpp"

namespace toposeg {
namespace {

using test::random_tensor;

Tensor plane(std::size_t h, std::size_t w, std::vector<double> v) { return Tensor({1, h, w}, std::move(v)); }

// Gradient of f(vars) = sum(op(vars)) with respect to input `which`.
template <typename Op>
Tensor grad_of(const std::vector<Tensor>& inputs, std::size_t which, Op op) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  const Gradients g = tape.backward(sum(op(vars)));
  return g.at(vars[which]);
}

template <typename Op>
Tensor numeric_grad_of(const std::vector<Tensor>& inputs, std::size_t which, Op op) {
  return finite_diff_grad(
      [&](const Tensor& x) {
        Tape tape;
        std::vector<Var> vars;
        for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.constant(i == which ? x : inputs[i]));
        return sum(op(vars)).item();
      },
      inputs[which]);
}

TEST(Elementwise, ReluAndSigmoidValues) {
  Tape tape;
  const Var x = tape.constant(Tensor::vector({-1, 0, 2}));
  EXPECT_EQ(relu(x).value().values(), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(sigmoid(tape.constant(Tensor::vector({0}))).item(), 0.5);
}

TEST(Elementwise, SigmoidStaysInsideOpenInterval) {
  Tape tape;
  const Var y = sigmoid(tape.constant(Tensor::vector({-30, -5, 0, 5, 30})));
  for (double v : y.value().data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Elementwise, ProductRuleGradient) {
  const std::vector<Tensor> in{Tensor::vector({2, 3}), Tensor::vector({4, 5})};
  Tape tape;
  EXPECT_EQ(mul(tape.constant(in[0]), tape.constant(in[1])).value().values(), (std::vector<double>{8, 15}));
  EXPECT_EQ(grad_of(in, 0, [](const auto& v) { return mul(v[0], v[1]); }).values(), (std::vector<double>{4, 5}));
}

TEST(Elementwise, ScalarOperandBroadcasts) {
  const std::vector<Tensor> in{Tensor::vector({1, 2, 3}), Tensor::scalar(2)};
  auto op = [](const auto& v) { return mul(v[0], v[1]); };
  EXPECT_EQ(grad_of(in, 1, op).values(), (std::vector<double>{6}));
  Tape tape;
  EXPECT_EQ(sub(tape.constant(in[1]), tape.constant(in[0])).value().values(), (std::vector<double>{1, 0, -1}));
}

TEST(Elementwise, ShapeMismatchAndBadArgumentsThrow) {
  Tape tape;
  const Var a = tape.constant(Tensor::vector({1, 2}));
  const Var b = tape.constant(Tensor::vector({1, 2, 3}));
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(clamp(a, 1.0, 0.0), ValueError);
  EXPECT_THROW(log(tape.constant(Tensor::vector({0.0}))), NumericError);
  EXPECT_THROW(div(a, tape.constant(Tensor::vector({1.0, 0.0}))), NumericError);
}

TEST(Elementwise, ClampPassesGradientOnlyInsideRange) {
  const std::vector<Tensor> in{Tensor::vector({-2, 0.3, 2})};
  EXPECT_EQ(grad_of(in, 0, [](const auto& v) { return clamp(v[0], -1, 1); }).values(),
            (std::vector<double>{0, 1, 0}));
}

TEST(Matmul, ValuesAndDimensionCheck) {
  Tape tape;
  const Var eye = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  const Var col = tape.constant(Tensor::matrix({{3}, {4}}));
  EXPECT_EQ(matmul(eye, col).value().values(), (std::vector<double>{3, 4}));
  const Var row = tape.constant(Tensor::matrix({{1, 2}}));
  EXPECT_EQ(matmul(row, col).item(), 11.0);
  EXPECT_THROW(matmul(col, col), ShapeError);
}

TEST(Matmul, GradientsMatchFiniteDifferences) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<Tensor> in{random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, {4, 2}, -1, 1)};
    auto op = [](const auto& v) { return matmul(v[0], v[1]); };
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_LT(max_relative_error(grad_of(in, i, op), numeric_grad_of(in, i, op)), 1e-6);
    }
  }
}

TEST(MorphPool, MinPoolErodesBorderOfOnes) {
  Tape tape;
  const Tensor out = min_pool(tape.constant(Tensor({1, 5, 5}, 1.0))).value();
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      const bool border = r == 0 || c == 0 || r == 4 || c == 4;
      EXPECT_EQ(out[r * 5 + c], border ? 0.0 : 1.0) << r << "," << c;
    }
}

TEST(MorphPool, MaxPoolOfZerosIsZero) {
  Tape tape;
  const Tensor out = max_pool(tape.constant(Tensor({2, 4, 4}, 0.0))).value();
  EXPECT_EQ(out, Tensor({2, 4, 4}, 0.0));
}

TEST(MorphPool, MinPoolSpreadsASingleZero) {
  std::vector<double> v(49, 1.0);
  v[3 * 7 + 3] = 0.0;
  Tape tape;
  const Tensor out = min_pool(tape.constant(plane(7, 7, v))).value();
  for (std::size_t r = 2; r <= 4; ++r)
    for (std::size_t c = 2; c <= 4; ++c) EXPECT_EQ(out[r * 7 + c], 0.0);
  EXPECT_EQ(out[1 * 7 + 1], 1.0);
  EXPECT_EQ(out[5 * 7 + 5], 1.0);
}

TEST(MorphPool, MinIsNegatedMaxOfNegation) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor(rng, {2, 6, 5}, -1, 1);
    Tape tape;
    const Tensor lhs = min_pool(tape.constant(x)).value();
    const Tensor rhs = affine(max_pool(affine(tape.constant(x), -1.0, 0.0)), -1.0, 0.0).value();
    ASSERT_EQ(lhs, rhs);
  }
}

TEST(MorphPool, TiesRouteGradientToFirstPositionInRowMajorOrder) {
  // Every window sees the same maximum 1 at several places.
  const std::vector<Tensor> in{plane(1, 3, {1, 1, 1})};
  const Tensor g = grad_of(in, 0, [](const auto& v) { return max_pool(v[0]); });
  // Windows: (0,1) -> pos 0; (0,1,2) -> pos 0; (1,2) -> pos 1.
  EXPECT_EQ(g.values(), (std::vector<double>{2, 1, 0}));
}

TEST(MorphPool, PaddingWinnerRoutesNoGradient) {
  const std::vector<Tensor> in{plane(3, 3, std::vector<double>(9, -1.0))};
  const Tensor g = grad_of(in, 0, [](const auto& v) { return max_pool(v[0]); });
  // Border outputs pick the zero pad; only the centre output selects an input.
  double total = 0.0;
  for (double v : g.data()) total += v;
  EXPECT_EQ(total, 1.0);
  EXPECT_EQ(g[0], 1.0);
}

TEST(ConvDw, IdentityKernelCopiesInput) {
  Rng rng(3);
  const Tensor x = random_tensor(rng, {2, 4, 5}, -1, 1);
  std::vector<double> k(18, 0.0);
  k[4] = k[13] = 1.0;
  Tape tape;
  const Tensor y =
      conv_dw3x3(tape.constant(x), tape.constant(Tensor({2, 3, 3}, k)), tape.constant(Tensor({2}, 0.0))).value();
  EXPECT_EQ(y, x);
}

TEST(ConvDw, OnesKernelSumsNeighbourhood) {
  Tape tape;
  const Tensor y = conv_dw3x3(tape.constant(Tensor({1, 3, 3}, 1.0)), tape.constant(Tensor({1, 3, 3}, 1.0)),
                              tape.constant(Tensor({1}, 0.0)))
                       .value();
  EXPECT_EQ(y[4], 9.0);
  for (std::size_t corner : {0u, 2u, 6u, 8u}) EXPECT_EQ(y[corner], 4.0);
  EXPECT_EQ(y[1], 6.0);
}

TEST(ConvDw, AllGradientsMatchFiniteDifferences) {
  Rng rng(4);
  const std::vector<Tensor> in{random_tensor(rng, {2, 5, 5}, -1, 1), random_tensor(rng, {2, 3, 3}, -1, 1),
                               random_tensor(rng, {2}, -1, 1)};
  // Weight the output so that every position matters differently.
  const Tensor weights = random_tensor(rng, {2, 5, 5}, 0.5, 1.5);
  auto op = [&](const auto& v) { return mul(conv_dw3x3(v[0], v[1], v[2]), v[0].tape()->constant(weights)); };
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LT(max_relative_error(grad_of(in, i, op), numeric_grad_of(in, i, op)), 1e-4) << "input " << i;
  }
}

TEST(ConvDw, ChannelMismatchThrows) {
  Tape tape;
  EXPECT_THROW(conv_dw3x3(tape.constant(Tensor({2, 3, 3}, 1.0)), tape.constant(Tensor({1, 3, 3}, 1.0)),
                          tape.constant(Tensor({1}, 0.0))),
               ShapeError);
}

TEST(ConvPw, IdentityAndChannelSum) {
  Rng rng(5);
  const Tensor x = random_tensor(rng, {3, 2, 2}, -1, 1);
  Tape tape;
  const Tensor eye({3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(conv_pw1x1(tape.constant(x), tape.constant(eye), tape.constant(Tensor({3}, 0.0))).value(), x);

  const Var pixel = tape.constant(Tensor({2, 1, 1}, std::vector<double>{3, 4}));
  EXPECT_EQ(conv_pw1x1(pixel, tape.constant(Tensor::matrix({{1, 1}})), tape.constant(Tensor({1}, 0.0))).item(), 7.0);
  EXPECT_THROW(conv_pw1x1(pixel, tape.constant(Tensor::matrix({{1, 1, 1}}))), ShapeError);
}

TEST(ConvPw, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  const std::vector<Tensor> in{random_tensor(rng, {3, 4, 4}, -1, 1), random_tensor(rng, {2, 3}, -1, 1),
                               random_tensor(rng, {2}, -1, 1)};
  const Tensor weights = random_tensor(rng, {2, 4, 4}, 0.5, 1.5);
  auto op = [&](const auto& v) { return mul(conv_pw1x1(v[0], v[1], v[2]), v[0].tape()->constant(weights)); };
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LT(max_relative_error(grad_of(in, i, op), numeric_grad_of(in, i, op)), 1e-4) << "input " << i;
  }
}

TEST(Reduce, SumMeanAndMeanGradient) {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({1, 2, 3}));
  EXPECT_EQ(sum(x).item(), 6.0);
  EXPECT_EQ(mean(x).item(), 2.0);
  const Gradients g = tape.backward(mean(x));
  for (double v : g.at(x).data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Backward, QuadraticGradient) {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({1, 2}));
  const Gradients g = tape.backward(sum(mul(x, x)));
  EXPECT_EQ(g.at(x).values(), (std::vector<double>{2, 4}));
}

TEST(Backward, BceOfSigmoidCompositeMatchesFiniteDifferences) {
  Rng rng(7);
  const Tensor target({1, 4, 4}, std::vector<double>{1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 0, 1, 0, 1, 0});
  const std::vector<Tensor> in{random_tensor(rng, {1, 4, 4}, -3, 3)};
  auto op = [&](const auto& v) { return bce_loss(sigmoid(v[0]), target); };
  EXPECT_LT(max_relative_error(grad_of(in, 0, op), numeric_grad_of(in, 0, op)), 1e-4);
}

TEST(Backward, ConstantsGetNoGradientEntry) {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({1, 2}));
  const Var c = tape.constant(Tensor::vector({3, 4}));
  const Gradients g = tape.backward(sum(mul(x, c)));
  EXPECT_TRUE(g.contains(x));
  EXPECT_FALSE(g.contains(c));
  EXPECT_EQ(g.find(c), nullptr);
}

TEST(Backward, UnreachedVariableGetsZeroGradient) {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({1, 2}));
  const Var unused = tape.variable(Tensor::vector({5}));
  const Gradients g = tape.backward(sum(x));
  EXPECT_EQ(g.at(unused).values(), (std::vector<double>{0}));
}

TEST(Backward, RejectsNonScalarAndForeignLoss) {
  Tape tape, other;
  const Var x = tape.variable(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(x), ShapeError);
  EXPECT_THROW(other.backward(sum(x)), ValueError);
  EXPECT_THROW(add(x, other.variable(Tensor::vector({1, 2}))), ValueError);
}

TEST(Backward, ReplayIsBitIdentical) {
  Rng rng(8);
  const Tensor x0 = random_tensor(rng, {1, 6, 6}, 0.05, 0.95);
  const Tensor target({1, 6, 6}, 1.0);
  auto run = [&] {
    Tape tape;
    const Var x = tape.variable(x0);
    const Var loss = add(cl_dice_loss(x, target, SkeletonConfig{}), soft_dice_loss(x, target));
    return tape.backward(loss).at(x);
  };
  EXPECT_EQ(run(), run());
}

TEST(FiniteDiff, ClosedFormCases) {
  const Tensor x = Tensor::vector({0.3, -2, 7});
  const Tensor ones = finite_diff_grad(
      [](const Tensor& t) {
        double s = 0;
        for (double v : t.data()) s += v;
        return s;
      },
      x);
  for (double v : ones.data()) EXPECT_NEAR(v, 1.0, 1e-9);

  const Tensor sq = finite_diff_grad([](const Tensor& t) { return t[0] * t[0]; }, Tensor::vector({3}), 1e-5);
  EXPECT_NEAR(sq[0], 6.0, 1e-8);

  const Tensor r = finite_diff_grad([](const Tensor& t) { return std::max(t[0], 0.0); }, Tensor::vector({5}));
  EXPECT_NEAR(r[0], 1.0, 1e-9);
}

TEST(FiniteDiff, RelativeErrorUsesLargestMagnitude) {
  EXPECT_DOUBLE_EQ(max_relative_error(Tensor::vector({1, 10}), Tensor::vector({1, 11})), 1.0 / 11.0);
  EXPECT_EQ(max_relative_error(Tensor::vector({0}), Tensor::vector({0})), 0.0);
}

}  // namespace
}  // namespace toposeg
