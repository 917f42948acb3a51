#ifndef SFFNET_RESAMPLE_HPP
#define SFFNET_RESAMPLE_HPP

#include <cmath>
#include <vector>

#include "sffnet/ops_basic.hpp"

namespace sffnet {

namespace detail {

// Source taps for one output axis under the half-pixel convention:
// src = (dst + 0.5) * in/out - 0.5, clamped at 0 from below.
struct LinearTap {
  int i0, i1;
  double w1;
};

inline std::vector<LinearTap> linear_taps(int in, int out) {
  std::vector<LinearTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = i0 + 1 < in ? i0 + 1 : in - 1;
    taps[d] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace detail

/// Bilinear resize, corner alignment off.
template <typename T>
Var<T> interpolate_bilinear(const Var<T>& input, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("interpolate_bilinear: output extents must be >= 1");
  const Shape s = input.shape();
  if (s.h == out_h && s.w == out_w) return input;
  const auto ty = detail::linear_taps(s.h, out_h);
  const auto tx = detail::linear_taps(s.w, out_w);
  const Shape o{s.n, s.c, out_h, out_w};
  Tensor<T> out(o);
  const auto& x = input.value();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.raw() + x.offset(n, c, 0, 0);
      T* dst = out.raw() + out.offset(n, c, 0, 0);
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& a = ty[oy];
        const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
        for (int ox = 0; ox < out_w; ++ox) {
          const auto& b = tx[ox];
          const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
          dst[oy * out_w + ox] = wy0 * (wx0 * src[a.i0 * s.w + b.i0] + wx1 * src[a.i0 * s.w + b.i1]) +
                                 wy1 * (wx0 * src[a.i1 * s.w + b.i0] + wx1 * src[a.i1 * s.w + b.i1]);
        }
      }
    }
  return make_result<T>(std::move(out), {input}, "interpolate_bilinear", [ty, tx](Node<T>& self) {
    auto* in = grad_target(self, 0);
    if (!in) return;
    auto& g = in->ensure_grad();
    const Shape s = in->value.shape();
    const Shape o = self.value.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        T* dst = g.raw() + g.offset(n, c, 0, 0);
        const T* dy = self.grad.raw() + self.grad.offset(n, c, 0, 0);
        for (int oy = 0; oy < o.h; ++oy) {
          const auto& a = ty[oy];
          const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
          for (int ox = 0; ox < o.w; ++ox) {
            const auto& b = tx[ox];
            const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
            const T d = dy[oy * o.w + ox];
            dst[a.i0 * s.w + b.i0] += wy0 * wx0 * d;
            dst[a.i0 * s.w + b.i1] += wy0 * wx1 * d;
            dst[a.i1 * s.w + b.i0] += wy1 * wx0 * d;
            dst[a.i1 * s.w + b.i1] += wy1 * wx1 * d;
          }
        }
      }
  });
}

}  // namespace sffnet

#endif  // SFFNET_RESAMPLE_HPP
