#include <cmath>

#include <gtest/gtest.h>

#include "sffnet/wtfd.hpp"
#include "test_util.hpp"

namespace sffnet {
namespace {

using testing::D;
using testing::rand_leaf;
using testing::rand_tensor;

double energy(const WaveletQuad<D>& q) {
  return sum_squares(q.a) + sum_squares(q.h) + sum_squares(q.v) + sum_squares(q.d);
}

TEST(HaarDwt, ConstantHasNoDetail) {
  const auto q = haar_dwt2(Tensor<D>(Shape{1, 2, 6, 4}, 3.5));
  for (D v : q.a.data()) EXPECT_EQ(v, 3.5);
  for (const auto* band : {&q.h, &q.v, &q.d})
    for (D v : band->data()) EXPECT_EQ(v, 0.0);
}

TEST(HaarDwt, TwoByTwoByHand) {
  const auto q = haar_dwt2(Tensor<D>(Shape{1, 1, 2, 2}, std::vector<D>{1, 3, 5, 7}));
  EXPECT_EQ(q.a[0], 4.0);
  EXPECT_EQ(q.v[0], -1.0);
  EXPECT_EQ(q.h[0], -2.0);
  EXPECT_EQ(q.d[0], 0.0);
}

TEST(HaarDwt, VerticalStepLightsOnlyV) {
  // Columns 0..4 are 0, columns 5.. are 1: the pair (4, 5) straddles the step.
  const int step = 4;
  Tensor<D> x(Shape{1, 1, 8, 12});
  for (int i = 0; i < 8; ++i)
    for (int j = step + 1; j < 12; ++j) x(0, 0, i, j) = 1.0;
  const auto q = haar_dwt2(x);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 6; ++j) {
      EXPECT_EQ(q.h(0, 0, i, j), 0.0);
      EXPECT_EQ(q.d(0, 0, i, j), 0.0);
      EXPECT_EQ(q.v(0, 0, i, j), j == step / 2 ? -0.5 : 0.0);
    }
}

TEST(HaarDwt, HorizontalStepLightsOnlyH) {
  Tensor<D> x(Shape{1, 1, 10, 6});
  for (int i = 3; i < 10; ++i)
    for (int j = 0; j < 6; ++j) x(0, 0, i, j) = 2.0;
  const auto q = haar_dwt2(x);
  EXPECT_GT(sum_squares(q.h), 0.0);
  EXPECT_EQ(sum_squares(q.v), 0.0);
  EXPECT_EQ(sum_squares(q.d), 0.0);
}

TEST(HaarDwt, OddExtentIsShapeError) {
  EXPECT_THROW(haar_dwt2(Tensor<D>(Shape{1, 1, 3, 4})), ShapeError);
  EXPECT_THROW(haar_dwt2(Tensor<D>(Shape{1, 1, 4, 5})), ShapeError);
}

TEST(HaarIdwt, ConstantApproximationGivesConstantImage) {
  const Shape b{1, 2, 3, 3};
  const auto x = haar_idwt2(WaveletQuad<D>{Tensor<D>(b, -1.25), Tensor<D>(b), Tensor<D>(b), Tensor<D>(b)});
  ASSERT_EQ(x.shape(), (Shape{1, 2, 6, 6}));
  for (D v : x.data()) EXPECT_EQ(v, -1.25);
}

TEST(HaarIdwt, TwoByTwoByHand) {
  const Shape b{1, 1, 1, 1};
  const auto x = haar_idwt2(WaveletQuad<D>{Tensor<D>(b, 4.0), Tensor<D>(b, -2.0), Tensor<D>(b, -1.0), Tensor<D>(b)});
  const std::vector<D> expected{1, 3, 5, 7};
  for (int i = 0; i < 4; ++i) EXPECT_EQ(x[i], expected[i]);
}

TEST(HaarIdwt, BandMismatchIsShapeError) {
  WaveletQuad<D> q{Tensor<D>(Shape{1, 1, 2, 2}), Tensor<D>(Shape{1, 1, 2, 2}), Tensor<D>(Shape{1, 1, 2, 3}),
                   Tensor<D>(Shape{1, 1, 2, 2})};
  EXPECT_THROW(haar_idwt2(q), ShapeError);
}

TEST(HaarProperties, ReconstructionAndEnergyOverRandomTensors) {
  Rng shape_rng(99);
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    const Shape s{1 + static_cast<int>(shape_rng.below(2)), 1 + static_cast<int>(shape_rng.below(4)),
                  2 * (1 + static_cast<int>(shape_rng.below(8))), 2 * (1 + static_cast<int>(shape_rng.below(8)))};
    const Tensor<D> x = rand_tensor(s, seed, -5, 5);
    const auto q = haar_dwt2(x);
    EXPECT_LE(max_abs_diff(haar_idwt2(q), x), 1e-12) << s.str();
    const D ex = sum_squares(x);
    EXPECT_NEAR(ex, 4 * energy(q), 1e-12 * ex) << s.str();
  }
}

TEST(HaarProperties, Linearity) {
  const Shape s{2, 3, 8, 6};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor<D> x = rand_tensor(s, 2 * seed), y = rand_tensor(s, 2 * seed + 1);
    const D alpha = 1.7, beta = -0.3;
    Tensor<D> mix(s);
    for (std::size_t i = 0; i < mix.numel(); ++i) mix[i] = alpha * x[i] + beta * y[i];
    const auto qm = haar_dwt2(mix), qx = haar_dwt2(x), qy = haar_dwt2(y);
    auto check = [&](const Tensor<D>& m, const Tensor<D>& a, const Tensor<D>& b) {
      for (std::size_t i = 0; i < m.numel(); ++i) {
        const D expected = alpha * a[i] + beta * b[i];
        EXPECT_LE(std::abs(m[i] - expected), 1e-10 * std::max(1.0, std::abs(expected)));
      }
    };
    check(qm.a, qx.a, qy.a);
    check(qm.h, qx.h, qy.h);
    check(qm.v, qx.v, qy.v);
    check(qm.d, qx.d, qy.d);
  }
}

TEST(HaarPacked, MatchesBandLayoutAndGradchecks) {
  const Tensor<D> x = rand_tensor(Shape{2, 3, 6, 4}, 5);
  const auto q = haar_dwt2(x);
  const auto packed = haar_dwt2_packed(Var<D>(x));
  ASSERT_EQ(packed.shape(), (Shape{2, 12, 3, 2}));
  const Tensor<D>* bands[4] = {&q.a, &q.h, &q.v, &q.d};
  for (int n = 0; n < 2; ++n)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 2; ++j) EXPECT_EQ(packed.value()(n, b * 3 + c, i, j), (*bands[b])(n, c, i, j));

  auto v = rand_leaf(Shape{1, 2, 4, 6}, 6);
  auto r = testing::check_projected([&] { return haar_dwt2_packed(v); }, {{"x", v}}, 7);
  EXPECT_TRUE(r.passed) << testing::describe(r);
}

// --- WTFD block --------------------------------------------------------------

TEST(Wtfd, OutputShapes) {
  Registry<D> reg;
  Rng rng(1);
  Wtfd<D> block(reg, "wtfd", 12, 12, true, true, rng);
  const auto out = block(Var<D>(rand_tensor(Shape{1, 12, 16, 16}, 2)), Mode::eval);
  ASSERT_TRUE(out.low && out.high);
  EXPECT_EQ(out.low->shape(), (Shape{1, 12, 8, 8}));
  EXPECT_EQ(out.high->shape(), (Shape{1, 12, 8, 8}));
  EXPECT_EQ(block.high_proj->weight().shape().c, 36);
}

TEST(Wtfd, OddExtentIsReflectPadded) {
  Registry<D> reg;
  Rng rng(1);
  Wtfd<D> block(reg, "wtfd", 4, 6, true, true, rng);
  const auto out = block(Var<D>(rand_tensor(Shape{1, 4, 7, 9}, 2)), Mode::eval);
  EXPECT_EQ(out.low->shape(), (Shape{1, 6, 4, 5}));
}

TEST(Wtfd, ZeroInputZeroBiasGivesZero) {
  Registry<D> reg;
  Rng rng(3);
  Wtfd<D> block(reg, "wtfd", 4, 4, true, true, rng);
  set_zero_bias(block.pre_proj);
  const auto out = block(Var<D>(Tensor<D>(Shape{1, 4, 8, 8})), Mode::eval);
  for (D v : out.low->value().data()) EXPECT_EQ(v, 0.0);
  for (D v : out.high->value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Wtfd, IdentityProjectionsExposeBatchNormOfApproximation) {
  Registry<D> reg;
  Rng rng(4);
  Wtfd<D> block(reg, "wtfd", 3, 3, true, true, rng);
  set_identity(block.pre_proj);
  set_identity(*block.low_proj);
  const Tensor<D> x = rand_tensor(Shape{2, 3, 6, 8}, 5);
  const auto out = block(Var<D>(x), Mode::train);
  const auto a = Var<D>(haar_dwt2(x).a);
  const Var<D> one(Tensor<D>(Shape{1, 3, 1, 1}, 1.0)), zero(Tensor<D>(Shape{1, 3, 1, 1}, 0.0));
  const auto expected = batch_norm<D>(a, one, zero, nullptr, Mode::train);
  EXPECT_LT(max_abs_diff(out.low->value(), expected.value()), 1e-12);
}

TEST(Wtfd, DisabledBandsAreAbsent) {
  Registry<D> reg_full, reg_low, reg_high;
  Rng r1(1), r2(1), r3(1);
  Wtfd<D> full(reg_full, "w", 4, 4, true, true, r1);
  Wtfd<D> low_only(reg_low, "w", 4, 4, true, false, r2);
  Wtfd<D> high_only(reg_high, "w", 4, 4, false, true, r3);
  const auto x = Var<D>(rand_tensor(Shape{1, 4, 4, 4}, 1));
  EXPECT_FALSE(low_only(x, Mode::eval).high.has_value());
  EXPECT_FALSE(high_only(x, Mode::eval).low.has_value());
  EXPECT_LT(reg_low.parameter_count(), reg_full.parameter_count());
  EXPECT_LT(reg_high.parameter_count(), reg_full.parameter_count());
  EXPECT_THROW(Wtfd<D>(reg_full, "none", 4, 4, false, false, r1), ConfigError);
}

TEST(Wtfd, GradcheckEvalMode) {
  Registry<D> reg;
  Rng rng(8);
  Wtfd<D> block(reg, "wtfd", 3, 4, true, true, rng);
  auto x = rand_leaf(Shape{1, 3, 6, 6}, 9);
  std::vector<std::pair<std::string, Var<D>>> inputs{{"x", x}};
  for (const auto& p : reg.parameters()) inputs.emplace_back(p.name, p.var);
  auto r = testing::check_projected(
      [&] {
        const auto o = block(x, Mode::eval);
        return concat_channels<D>({*o.low, *o.high});
      },
      inputs, 10);
  EXPECT_TRUE(r.passed) << testing::describe(r);
}

}  // namespace
}  // namespace sffnet
