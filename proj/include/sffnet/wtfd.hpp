#ifndef SFFNET_WTFD_HPP
#define SFFNET_WTFD_HPP

#include <optional>
#include <string>

#include "sffnet/layers.hpp"
#include "sffnet/wavelet.hpp"

namespace sffnet {

/// Wavelet feature decomposer: 1x1 conv, one Haar level, then separate 1x1 conv + BN
/// projections of the approximation band (low) and of the stacked H, V, D bands (high).
template <typename T>
class Wtfd {
 public:
  struct Output {
    std::optional<Var<T>> low;   // F_l
    std::optional<Var<T>> high;  // F_h
  };

  Wtfd() = default;
  Wtfd(Registry<T>& reg, const std::string& name, int in_channels, int out_channels, bool with_low,
       bool with_high, Rng& rng)
      : in_channels_(in_channels) {
    if (!with_low && !with_high) throw ConfigError("Wtfd: at least one of low/high must be enabled");
    pre_proj = Conv2d<T>(reg, name + ".pre_proj", in_channels, in_channels, 1, 1, {}, true, rng);
    if (with_low) {
      low_proj = Conv2d<T>(reg, name + ".low_proj", in_channels, out_channels, 1, 1, {}, false, rng);
      low_bn = BatchNorm2d<T>(reg, name + ".low_bn", out_channels);
    }
    if (with_high) {
      high_proj = Conv2d<T>(reg, name + ".high_proj", 3 * in_channels, out_channels, 1, 1, {}, false, rng);
      high_bn = BatchNorm2d<T>(reg, name + ".high_bn", out_channels);
    }
  }

  /// Odd extents are reflect-padded by one row/column before the transform.
  Output operator()(Var<T> x, Mode mode) const {
    const Shape s = x.shape();
    x = pad_reflect(x, 0, s.h % 2, 0, s.w % 2);
    const Var<T> bands = haar_dwt2_packed(pre_proj(x));
    const int c = in_channels_;
    Output out;
    if (low_proj) out.low = (*low_bn)((*low_proj)(slice_channels(bands, 0, c)), mode);
    if (high_proj) out.high = (*high_bn)((*high_proj)(slice_channels(bands, c, 4 * c)), mode);
    return out;
  }

  Conv2d<T> pre_proj;
  std::optional<Conv2d<T>> low_proj;
  std::optional<BatchNorm2d<T>> low_bn;
  std::optional<Conv2d<T>> high_proj;
  std::optional<BatchNorm2d<T>> high_bn;

 private:
  int in_channels_ = 0;
};

}  // namespace sffnet

#endif  // SFFNET_WTFD_HPP
