#include <gtest/gtest.h>

#include "sffnet/local_branch.hpp"
#include "test_util.hpp"

namespace sffnet {
namespace {

using testing::D;
using testing::rand_leaf;
using testing::rand_tensor;

TEST(Bottleneck, ZeroInputZeroBiasGivesZero) {
  Registry<D> reg;
  Rng rng(1);
  Bottleneck<D> b(reg, "b", 4, 2, 4, rng);
  set_zero_bias(b.reduce);
  set_zero_bias(b.expand);
  const auto y = b(Var<D>(Tensor<D>(Shape{1, 4, 5, 5})));
  for (D v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Bottleneck, IdentityKernelsPassThrough) {
  Registry<D> reg;
  Rng rng(2);
  Bottleneck<D> b(reg, "b", 3, 3, 3, rng);
  set_identity(b.reduce);
  set_identity(b.expand);
  const auto x = Var<D>(rand_tensor(Shape{2, 3, 6, 7}, 3));
  EXPECT_EQ(max_abs_diff(b(x).value(), x.value()), 0.0);
}

TEST(Bottleneck, PreservesSpatialExtent) {
  Rng shapes(4);
  for (int trial = 0; trial < 20; ++trial) {
    Registry<D> reg;
    Rng rng(trial);
    Bottleneck<D> b(reg, "b", 2, 1, 3, rng);
    const int h = 1 + static_cast<int>(shapes.below(12)), w = 1 + static_cast<int>(shapes.below(12));
    EXPECT_EQ(b(Var<D>(Tensor<D>(Shape{1, 2, h, w}))).shape(), (Shape{1, 3, h, w}));
  }
}

TEST(Spp, ConstantInputStaysConstantAndChannelsQuadruple) {
  const auto y = spp(Var<D>(Tensor<D>(Shape{1, 8, 6, 6}, 2.5)));
  EXPECT_EQ(y.shape(), (Shape{1, 32, 6, 6}));
  for (D v : y.value().data()) EXPECT_EQ(v, 2.5);
}

TEST(Spp, BrightPixelSpreadsToKernelSquares) {
  Tensor<D> x(Shape{1, 1, 15, 15});
  x(0, 0, 7, 7) = 1.0;
  const auto y = spp(Var<D>(x)).value();
  for (int g = 0; g < 3; ++g) {
    const int r = (kSppKernels[g] - 1) / 2;
    for (int i = 0; i < 15; ++i)
      for (int j = 0; j < 15; ++j) {
        const bool lit = std::abs(i - 7) <= r && std::abs(j - 7) <= r;
        EXPECT_EQ(y(0, g, i, j), lit ? 1.0 : 0.0) << "group " << g << " at " << i << "," << j;
      }
  }
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < 15; ++j) EXPECT_EQ(y(0, 3, i, j), x(0, 0, i, j));
}

TEST(Spp, PooledGroupsDominateIdentityGroup) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto y = spp(Var<D>(rand_tensor(Shape{1, 2, 9, 11}, seed))).value();
    for (int g = 0; g < 3; ++g)
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 9; ++i)
          for (int j = 0; j < 11; ++j) ASSERT_GE(y(0, g * 2 + c, i, j), y(0, 6 + c, i, j));
  }
}

LocalBranch<D> make_branch(Registry<D>& reg, int in, int width, int out, std::uint64_t seed) {
  Rng rng(seed);
  return LocalBranch<D>(reg, "local", LocalBranchOptions{in, width, out}, rng);
}

TEST(LocalBranch, HalvesSpatialExtent) {
  Registry<D> reg;
  auto branch = make_branch(reg, 12, 8, 16, 5);
  EXPECT_EQ(branch(Var<D>(rand_tensor(Shape{1, 12, 16, 16}, 6)), Mode::train).shape(), (Shape{1, 16, 8, 8}));
  EXPECT_EQ(branch(Var<D>(rand_tensor(Shape{1, 12, 10, 14}, 6)), Mode::train).shape(), (Shape{1, 16, 5, 7}));
  EXPECT_EQ(branch.bottleneck_out.reduce.weight().shape().c, 4 * 8);
}

TEST(LocalBranch, ZeroInputZeroBiasGivesZero) {
  Registry<D> reg;
  auto branch = make_branch(reg, 4, 4, 4, 7);
  for (Conv2d<D>* c : {&branch.direct_a, &branch.direct_b, &branch.bottleneck_in.reduce,
                       &branch.bottleneck_in.expand, &branch.bottleneck_out.reduce, &branch.bottleneck_out.expand}) {
    set_zero_bias(*c);
  }
  const auto y = branch(Var<D>(Tensor<D>(Shape{1, 4, 8, 8})), Mode::eval);
  for (D v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(LocalBranch, GradcheckEvalMode) {
  Registry<D> reg;
  auto branch = make_branch(reg, 3, 4, 4, 8);
  auto x = rand_leaf(Shape{1, 3, 8, 8}, 9);
  std::vector<std::pair<std::string, Var<D>>> inputs{{"x", x}};
  for (const auto& p : reg.parameters()) inputs.emplace_back(p.name, p.var);
  auto r = testing::check_projected([&] { return branch(x, Mode::eval); }, inputs, 10);
  EXPECT_TRUE(r.passed) << testing::describe(r);
}

}  // namespace
}  // namespace sffnet
