#ifndef SFFNET_LOCAL_BRANCH_HPP
#define SFFNET_LOCAL_BRANCH_HPP

#include <array>
#include <string>

#include "sffnet/layers.hpp"

namespace sffnet {

inline constexpr std::array<int, 3> kSppKernels{5, 9, 13};

/// Concatenation of same-size 5/9/13 max-pools and the input: 4x the channels.
template <typename T>
Var<T> spp(const Var<T>& x) {
  return concat_channels<T>({max_pool2d_same(x, kSppKernels[0]), max_pool2d_same(x, kSppKernels[1]),
                             max_pool2d_same(x, kSppKernels[2]), x});
}

/// 1x1 conv followed by a same-size 3x3 conv.
template <typename T>
class Bottleneck {
 public:
  Bottleneck() = default;
  Bottleneck(Registry<T>& reg, const std::string& name, int cin, int mid, int cout, Rng& rng)
      : reduce(reg, name + ".reduce", cin, mid, 1, 1, {}, true, rng),
        expand(Conv2d<T>::same(reg, name + ".expand", mid, cout, 3, true, rng)) {}

  Var<T> operator()(const Var<T>& x) const { return expand(reduce(x)); }

  Conv2d<T> reduce;
  Conv2d<T> expand;
};

struct LocalBranchOptions {
  int in_channels = 48;
  int width = 16;
  int out_channels = 16;
};

/// Local multi-scale branch. Two paths from the input, both downsampling by 2:
///   direct: 3x3 conv -> 3x3 stride-2 conv
///   pyramid: 3x3 stride-2 conv -> BN -> bottleneck -> SPP -> bottleneck
/// concatenated and projected with 1x1 conv + BN.
template <typename T>
class LocalBranch {
 public:
  LocalBranch() = default;
  LocalBranch(Registry<T>& reg, const std::string& name, const LocalBranchOptions& opt, Rng& rng) {
    const int c = opt.width;
    const int half = std::max(1, c / 2);
    direct_a = Conv2d<T>::same(reg, name + ".direct.conv1", opt.in_channels, c, 3, true, rng);
    direct_b = Conv2d<T>::same(reg, name + ".direct.conv2", c, c, 3, true, rng, 2);
    spp_down = Conv2d<T>::same(reg, name + ".spp.down", opt.in_channels, c, 3, false, rng, 2);
    spp_bn = BatchNorm2d<T>(reg, name + ".spp.bn", c);
    bottleneck_in = Bottleneck<T>(reg, name + ".spp.bottleneck_in", c, half, c, rng);
    bottleneck_out = Bottleneck<T>(reg, name + ".spp.bottleneck_out", 4 * c, 2 * c, c, rng);
    fuse_proj = Conv2d<T>(reg, name + ".fuse_proj", 2 * c, opt.out_channels, 1, 1, {}, false, rng);
    fuse_bn = BatchNorm2d<T>(reg, name + ".fuse_bn", opt.out_channels);
  }

  Var<T> pyramid_path(const Var<T>& x, Mode mode) const {
    return bottleneck_out(spp(bottleneck_in(spp_bn(spp_down(x), mode))));
  }

  Var<T> operator()(const Var<T>& x, Mode mode) const {
    const Var<T> direct = direct_b(direct_a(x));
    return fuse_bn(fuse_proj(concat_channels<T>({direct, pyramid_path(x, mode)})), mode);
  }

  Conv2d<T> direct_a, direct_b, spp_down;
  BatchNorm2d<T> spp_bn;
  Bottleneck<T> bottleneck_in, bottleneck_out;
  Conv2d<T> fuse_proj;
  BatchNorm2d<T> fuse_bn;
};

}  // namespace sffnet

#endif  // SFFNET_LOCAL_BRANCH_HPP
