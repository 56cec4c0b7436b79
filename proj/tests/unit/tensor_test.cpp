#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "test_util.hpp"
#include "toposeg/error.hpp"
#include "toposeg/mask.hpp"
#include "toposeg/rng.hpp"
#include "toposeg/tensor.hpp"

namespace toposeg {
namespace {

TEST(Tensor, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_NO_THROW(Tensor({2, 3}, std::vector<double>(6)));
}

TEST(Tensor, RejectsZeroExtentsAndEmptyShape) {
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor(Shape{}), ShapeError);
}

TEST(Tensor, RejectsNonFiniteValues) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(Tensor({2}, std::vector<double>{1.0, nan}), NumericError);
  EXPECT_THROW(Tensor({1}, std::vector<double>{inf}), NumericError);
  EXPECT_THROW(Tensor({3}, inf), NumericError);
}

TEST(Tensor, RowMajorLayoutAndAccessors) {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.shape(), (Shape{2, 3}));
  EXPECT_EQ(m.rank(), 2u);
  EXPECT_EQ(m.dim(1), 3u);
  EXPECT_EQ(m[4], 5.0);
  EXPECT_THROW(m.dim(2), ShapeError);
  EXPECT_THROW(m.item(), ShapeError);
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
  EXPECT_THROW(Tensor::matrix({{1, 2}, {3}}), ShapeError);
}

TEST(Tensor, ReshapeKeepsDataAndChecksCount) {
  const Tensor v = Tensor::vector({1, 2, 3, 4, 5, 6});
  const Tensor r = v.reshaped({3, 2});
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(r.values(), v.values());
  EXPECT_THROW(v.reshaped({4, 2}), ShapeError);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    ASSERT_EQ(a.next_u64(), b.next_u64());
  }
  Rng c(42), d(42);
  for (int i = 0; i < 100; ++i) {
    ASSERT_EQ(c.normal(), d.normal());
  }
}

TEST(Rng, UniformAndIndexStayInRange) {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.index(7), 7u);
  }
}

TEST(Rng, NormalMomentsAreRoughlyStandard) {
  Rng rng(3);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, PermutationIsABijection) {
  Rng rng(11);
  for (std::size_t n : {1u, 2u, 17u, 100u}) {
    auto p = rng.permutation(n);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(p[i], i);
  }
}

TEST(Rng, DerivedSeedsDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t base = 0; base < 10; ++base)
    for (std::uint64_t stream = 0; stream < 100; ++stream) seen.insert(derive_seed(base, stream));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(derive_seed(5, 9), derive_seed(5, 9));
}

TEST(Mask, BinarizeUsesGreaterOrEqual) {
  const Tensor p({1, 3}, std::vector<double>{0.4, 0.5, 0.6});
  const BinaryMask m = binarize(p, 0.5);
  EXPECT_FALSE(m[0]);
  EXPECT_TRUE(m[1]);
  EXPECT_TRUE(m[2]);
  EXPECT_TRUE(binarize(Tensor({4, 4}, 0.0)).none());
  EXPECT_THROW(binarize(p, 0.0), ValueError);
  EXPECT_THROW(binarize(p, 1.0), ValueError);
}

TEST(Mask, AcceptsPlaneOrSingleChannelTensor) {
  EXPECT_EQ(binarize(Tensor({1, 3, 4}, 1.0)).width(), 4u);
  EXPECT_EQ(binarize(Tensor({3, 4}, 1.0)).height(), 3u);
  EXPECT_THROW(binarize(Tensor({2, 3, 4}, 1.0)), ShapeError);
}

TEST(Mask, ComponentsAreEightConnected) {
  EXPECT_EQ(count_components(test::mask_from({
                "#..",
                ".#.",
                "..#",
            })),
            1u);
  EXPECT_EQ(count_components(test::mask_from({
                "#.#",
                "...",
                "#.#",
            })),
            4u);
  EXPECT_EQ(count_components(BinaryMask(3, 3)), 0u);
}

TEST(Mask, TransposeAndFlipAreInvolutions) {
  Rng rng(5);
  const BinaryMask m = test::random_mask(rng, 5, 7, 0.4);
  EXPECT_EQ(m.transposed().height(), 7u);
  EXPECT_EQ(m.transposed().transposed(), m);
  EXPECT_EQ(m.flipped_horizontally().flipped_horizontally(), m);
  EXPECT_EQ(m.flipped_horizontally()(2, 0), m(2, 6));
}

}  // namespace
}  // namespace toposeg
