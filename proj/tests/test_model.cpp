#include <map>
#include <string>

#include <gtest/gtest.h>

#include "sffnet/accounting.hpp"
#include "sffnet/model.hpp"
#include "test_util.hpp"

namespace sffnet {
namespace {

using testing::D;
using testing::rand_tensor;

ModelConfig tiny(int c = 4, int cm = 4, int ws = 2) {
  ModelConfig cfg;
  cfg.base_channels = c;
  cfg.mapped_channels = cm;
  cfg.window_size = ws;
  return cfg;
}

std::string module_of(const std::string& name) { return name.substr(0, name.find('.')); }

TEST(SffNet, EveryAblationProducesFullResolutionLogits) {
  for (const auto& v : ablation_variant_names()) {
    for (Pairing p : {Pairing::standard, Pairing::crossed}) {
      ModelConfig cfg = with_ablation(tiny(), v);
      cfg.pairing = p;
      SffNet<float> net(cfg, 3);
      const auto img = Var<float>(rand_tensor(Shape{2, 3, 32, 48}, 4).cast<float>());
      for (Mode m : {Mode::train, Mode::eval}) {
        const auto y = net(img, m);
        EXPECT_EQ(y.shape(), (Shape{2, 6, 32, 48})) << v;
        EXPECT_TRUE(y.value().all_finite()) << v;
      }
    }
  }
}

TEST(SffNet, RejectsBadInputs) {
  SffNet<float> net(tiny(), 0);
  EXPECT_THROW(net(Var<float>(Tensor<float>(Shape{1, 3, 40, 32})), Mode::eval), ShapeError);
  EXPECT_THROW(net(Var<float>(Tensor<float>(Shape{1, 1, 32, 32})), Mode::eval), ShapeError);
  ModelConfig bad = tiny();
  bad.use_global = bad.use_local = bad.use_wtfd_low = bad.use_wtfd_high = false;
  EXPECT_THROW(SffNet<float>(bad, 0), ConfigError);
  EXPECT_THROW(with_ablation(tiny(), "w/o Everything"), ConfigError);
}

TEST(SffNet, SameSeedIsBitwiseReproducible) {
  const auto img = Var<float>(rand_tensor(Shape{1, 3, 32, 32}, 9).cast<float>());
  SffNet<float> a(tiny(), 11), b(tiny(), 11), c(tiny(), 12);
  const auto ya = a(img, Mode::train).value(), yb = b(img, Mode::train).value(), yc = c(img, Mode::train).value();
  EXPECT_TRUE(ya.bitwise_equal(yb));
  EXPECT_GT(max_abs_diff(ya, yc), 0.0f);
}

TEST(SffNet, RemovingAComponentRemovesParameters) {
  const std::size_t full = SffNet<float>(tiny(), 0).registry().parameter_count();
  for (const auto& v : ablation_variant_names()) {
    if (v == "full") continue;
    EXPECT_LT(SffNet<float>(with_ablation(tiny(), v), 0).registry().parameter_count(), full) << v;
  }
}

TEST(Accounting, MatchesRegisteredTensorsPerModule) {
  for (const auto& v : ablation_variant_names()) {
    for (int heads : {1, 2}) {
      ModelConfig cfg = with_ablation(tiny(8, 6, 4), v);
      cfg.heads = heads;
      cfg.relative_position_bias = heads == 2;
      SffNet<float> net(cfg, 0);
      std::map<std::string, std::uint64_t> enumerated;
      for (const auto& p : net.registry().parameters()) enumerated[module_of(p.name)] += p.var.value().numel();
      const auto report = count_params_flops(cfg, 64, 64);
      std::map<std::string, std::uint64_t> analytic;
      for (const auto& m : report.modules)
        if (m.params > 0) analytic[m.name] = m.params;  // plain addition owns no tensors
      EXPECT_EQ(enumerated, analytic) << v << " heads " << heads;
      EXPECT_EQ(report.total_params(), net.registry().parameter_count()) << v;
    }
  }
}

TEST(Accounting, ConvOnlyModulesScaleWithArea) {
  const auto small = count_params_flops(tiny(), 64, 64), big = count_params_flops(tiny(), 128, 128);
  for (const char* name : {"backbone", "stage1", "local", "wtfd", "head"}) {
    EXPECT_EQ(big.find(name)->macs, 4 * small.find(name)->macs) << name;
    EXPECT_EQ(big.find(name)->params, small.find(name)->params) << name;
  }
  // Dense token attention grows with the square of the token count.
  EXPECT_GT(big.find("fuse_g")->macs, 4 * small.find("fuse_g")->macs);
}

TEST(Accounting, HandCountedStemAndHead) {
  // C=4, K=6, 32x32 input: x1 is 16x16, X' is 8x8.
  ModelConfig cfg = tiny();
  cfg.use_global = cfg.use_local = false;
  cfg.use_wtfd_high = false;
  const auto r = count_params_flops(cfg, 32, 32);
  // stage1: three 1x1 convs from 8, 16, 32 channels to 4 with bias.
  EXPECT_EQ(r.find("stage1")->params, 8 * 4 + 16 * 4 + 32 * 4 + 12u);
  EXPECT_EQ(r.find("stage1")->macs, (8 * 4 + 16 * 4 + 32 * 4) * 64u);
  // Only fuse_g is active (pass-through of the low band).
  EXPECT_EQ(r.find("fuse_m"), nullptr);
  EXPECT_EQ(r.find("fuse_g")->params, 4 * 4 + 4u);
  // head: xp_proj 12->4, fuse (4 + 8)->4, 3x3 4->4, BN, classifier 4->6.
  EXPECT_EQ(r.find("head")->params, (48 + 4) + (48 + 4) + 144 + 8 + (24 + 6u));
  EXPECT_EQ(r.find("head")->macs, 48 * 64u + (48 + 144 + 24) * 256u);
}

TEST(SffNet, FullNetworkGradcheck) {
  ModelConfig cfg = tiny(4, 4, 2);
  cfg.heads = 2;
  cfg.relative_position_bias = true;
  SffNet<D> net(cfg, 5);
  auto img = testing::leaf(rand_tensor(Shape{1, 3, 32, 32}, 6));
  std::vector<std::pair<std::string, Var<D>>> inputs{{"image", img}};
  for (const auto& p : net.registry().parameters()) inputs.emplace_back(p.name, p.var);
  GradcheckOptions opt;
  opt.tolerance = 1e-3;
  opt.denominator_floor = 1e-5;  // biases ahead of batch norm have zero gradient
  opt.max_entries_per_input = 6;
  opt.seed = 7;
  const auto r = testing::check_projected([&] { return net(img, Mode::train); }, inputs, 8, opt);
  EXPECT_TRUE(r.passed) << testing::describe(r);
}

}  // namespace
}  // namespace sffnet
