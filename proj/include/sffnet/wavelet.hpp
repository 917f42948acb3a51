#ifndef SFFNET_WAVELET_HPP
#define SFFNET_WAVELET_HPP

#include <string>

#include "sffnet/ops_basic.hpp"

namespace sffnet {

/// One-level Haar sub-bands of a feature map, each (N, C, H/2, W/2).
///   a  low along width,  low along height   (approximation)
///   h  low along width,  high along height  (horizontal edges)
///   v  high along width, low along height   (vertical edges)
///   d  high along both                      (diagonal detail)
template <typename T>
struct WaveletQuad {
  Tensor<T> a, h, v, d;
};

namespace detail {

inline void require_even(const Shape& s, const char* op) {
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError(std::string(op) + ": spatial extents must be even, got " + s.str() +
                     " (reflect-pad by one row/column first)");
  }
}

// Both 1-D passes use a = (p + q) / 2 and d = (p - q) / 2, width first.
// For the 2x2 block [[x00, x01], [x10, x11]] that expands to the closed forms below.
template <typename T>
inline void haar_block(T x00, T x01, T x10, T x11, T& a, T& h, T& v, T& d) {
  const T a0 = (x00 + x01) / 2, d0 = (x00 - x01) / 2;
  const T a1 = (x10 + x11) / 2, d1 = (x10 - x11) / 2;
  a = (a0 + a1) / 2;
  h = (a0 - a1) / 2;
  v = (d0 + d1) / 2;
  d = (d0 - d1) / 2;
}

template <typename T>
inline void haar_block_inverse(T a, T h, T v, T d, T& x00, T& x01, T& x10, T& x11) {
  const T a0 = a + h, a1 = a - h;
  const T d0 = v + d, d1 = v - d;
  x00 = a0 + d0;
  x01 = a0 - d0;
  x10 = a1 + d1;
  x11 = a1 - d1;
}

}  // namespace detail

template <typename T>
WaveletQuad<T> haar_dwt2(const Tensor<T>& x) {
  const Shape s = x.shape();
  detail::require_even(s, "haar_dwt2");
  const Shape b{s.n, s.c, s.h / 2, s.w / 2};
  WaveletQuad<T> q{Tensor<T>(b), Tensor<T>(b), Tensor<T>(b), Tensor<T>(b)};
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < b.h; ++i)
        for (int j = 0; j < b.w; ++j) {
          detail::haar_block(x(n, c, 2 * i, 2 * j), x(n, c, 2 * i, 2 * j + 1), x(n, c, 2 * i + 1, 2 * j),
                             x(n, c, 2 * i + 1, 2 * j + 1), q.a(n, c, i, j), q.h(n, c, i, j),
                             q.v(n, c, i, j), q.d(n, c, i, j));
        }
  return q;
}

template <typename T>
Tensor<T> haar_idwt2(const WaveletQuad<T>& q) {
  const Shape b = q.a.shape();
  if (q.h.shape() != b || q.v.shape() != b || q.d.shape() != b) {
    throw ShapeError("haar_idwt2: sub-band shapes differ: " + b.str() + " " + q.h.shape().str() + " " +
                     q.v.shape().str() + " " + q.d.shape().str());
  }
  Tensor<T> x(Shape{b.n, b.c, b.h * 2, b.w * 2});
  for (int n = 0; n < b.n; ++n)
    for (int c = 0; c < b.c; ++c)
      for (int i = 0; i < b.h; ++i)
        for (int j = 0; j < b.w; ++j) {
          detail::haar_block_inverse(q.a(n, c, i, j), q.h(n, c, i, j), q.v(n, c, i, j), q.d(n, c, i, j),
                                     x(n, c, 2 * i, 2 * j), x(n, c, 2 * i, 2 * j + 1),
                                     x(n, c, 2 * i + 1, 2 * j), x(n, c, 2 * i + 1, 2 * j + 1));
        }
  return x;
}

/// Differentiable analysis packing the bands along channels as [A | H | V | D],
/// output (N, 4C, H/2, W/2).
template <typename T>
Var<T> haar_dwt2_packed(const Var<T>& x) {
  const Shape s = x.shape();
  detail::require_even(s, "haar_dwt2");
  const int c = s.c;
  const Shape o{s.n, 4 * c, s.h / 2, s.w / 2};
  Tensor<T> out(o);
  const auto& xv = x.value();
  for (int n = 0; n < s.n; ++n)
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < o.h; ++i)
        for (int j = 0; j < o.w; ++j) {
          detail::haar_block(xv(n, ch, 2 * i, 2 * j), xv(n, ch, 2 * i, 2 * j + 1),
                             xv(n, ch, 2 * i + 1, 2 * j), xv(n, ch, 2 * i + 1, 2 * j + 1),
                             out(n, ch, i, j), out(n, c + ch, i, j), out(n, 2 * c + ch, i, j),
                             out(n, 3 * c + ch, i, j));
        }
  return make_result<T>(std::move(out), {x}, "haar_dwt2", [c](Node<T>& self) {
    auto* in = grad_target(self, 0);
    if (!in) return;
    // The analysis map is 1/2 times an orthogonal map, so its adjoint is the
    // synthesis map scaled by 1/4.
    auto& g = in->ensure_grad();
    const Shape o = self.value.shape();
    const auto& dy = self.grad;
    for (int n = 0; n < o.n; ++n)
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < o.h; ++i)
          for (int j = 0; j < o.w; ++j) {
            T x00, x01, x10, x11;
            detail::haar_block_inverse(dy(n, ch, i, j), dy(n, c + ch, i, j), dy(n, 2 * c + ch, i, j),
                                       dy(n, 3 * c + ch, i, j), x00, x01, x10, x11);
            g(n, ch, 2 * i, 2 * j) += x00 / 4;
            g(n, ch, 2 * i, 2 * j + 1) += x01 / 4;
            g(n, ch, 2 * i + 1, 2 * j) += x10 / 4;
            g(n, ch, 2 * i + 1, 2 * j + 1) += x11 / 4;
          }
  });
}

}  // namespace sffnet

#endif  // SFFNET_WAVELET_HPP
