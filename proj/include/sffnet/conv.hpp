#ifndef SFFNET_CONV_HPP
#define SFFNET_CONV_HPP

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sffnet/gemm.hpp"
#include "sffnet/ops_basic.hpp"

namespace sffnet {

/// Per-side zero padding.
struct Padding2d {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;

  static constexpr Padding2d symmetric(int ph, int pw) { return {ph, ph, pw, pw}; }

  /// Output extent equals input extent at stride 1. Even kernels put the extra
  /// row/column of padding at the bottom/right.
  static constexpr Padding2d same(int kh, int kw) {
    return {(kh - 1) / 2, kh / 2, (kw - 1) / 2, kw / 2};
  }
};

struct Conv2dOptions {
  int stride = 1;
  Padding2d pad{};
};

inline int conv_out_extent(int in, int k, int pad_lo, int pad_hi, int stride) {
  const int span = in + pad_lo + pad_hi - k;
  if (span < 0) return 0;
  return span / stride + 1;
}

namespace detail {

struct ConvGeom {
  int cin, h, w, kh, kw, stride, hout, wout;
  Padding2d pad;
  bool pointwise() const {
    return kh == 1 && kw == 1 && stride == 1 && pad.top == 0 && pad.bottom == 0 && pad.left == 0 &&
           pad.right == 0;
  }
};

// col[(ci*kh + ki)*kw + kj][oy*wout + ox] = x[ci][oy*s - top + ki][ox*s - left + kj]
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const std::size_t p = static_cast<std::size_t>(g.hout) * g.wout;
  for (int ci = 0; ci < g.cin; ++ci)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        T* row = col + (static_cast<std::size_t>(ci * g.kh + ki) * g.kw + kj) * p;
        for (int oy = 0; oy < g.hout; ++oy) {
          const int iy = oy * g.stride - g.pad.top + ki;
          T* dst = row + static_cast<std::size_t>(oy) * g.wout;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wout, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(ci) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wout; ++ox) {
            const int ix = ox * g.stride - g.pad.left + kj;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* dx) {
  const std::size_t p = static_cast<std::size_t>(g.hout) * g.wout;
  for (int ci = 0; ci < g.cin; ++ci)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        const T* row = col + (static_cast<std::size_t>(ci * g.kh + ki) * g.kw + kj) * p;
        for (int oy = 0; oy < g.hout; ++oy) {
          const int iy = oy * g.stride - g.pad.top + ki;
          if (iy < 0 || iy >= g.h) continue;
          T* dst = dx + (static_cast<std::size_t>(ci) * g.h + iy) * g.w;
          const T* src = row + static_cast<std::size_t>(oy) * g.wout;
          for (int ox = 0; ox < g.wout; ++ox) {
            const int ix = ox * g.stride - g.pad.left + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace detail

/// 2-D cross-correlation. weight is (Cout, Cin, kh, kw); bias, when given, is (1, Cout, 1, 1).
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const std::optional<Var<T>>& bias,
              Conv2dOptions opt = {}) {
  const Shape xs = input.shape();
  const Shape ws = weight.shape();
  if (xs.c != ws.c) {
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels but weight " +
                     ws.str() + " expects " + std::to_string(ws.c));
  }
  if (opt.stride < 1) throw ShapeError("conv2d: stride must be positive");
  if (bias && (bias->shape().numel() != static_cast<std::size_t>(ws.n))) {
    throw ShapeError("conv2d: bias " + bias->shape().str() + " does not match " +
                     std::to_string(ws.n) + " output channels");
  }
  detail::ConvGeom g{xs.c, xs.h, xs.w, ws.h, ws.w, opt.stride,
                     conv_out_extent(xs.h, ws.h, opt.pad.top, opt.pad.bottom, opt.stride),
                     conv_out_extent(xs.w, ws.w, opt.pad.left, opt.pad.right, opt.stride), opt.pad};
  if (g.hout <= 0 || g.wout <= 0) {
    throw ShapeError("conv2d: kernel " + ws.str() + " leaves no output for input " + xs.str());
  }
  const int cout = ws.n;
  const std::size_t kdim = static_cast<std::size_t>(ws.c) * ws.h * ws.w;
  const std::size_t p = static_cast<std::size_t>(g.hout) * g.wout;
  Tensor<T> out(Shape{xs.n, cout, g.hout, g.wout});
  std::vector<T> col(g.pointwise() ? 0 : kdim * p);
  for (int n = 0; n < xs.n; ++n) {
    const T* x = input.value().raw() + static_cast<std::size_t>(n) * xs.c * xs.plane();
    const T* cm = x;
    if (!g.pointwise()) {
      detail::im2col(x, g, col.data());
      cm = col.data();
    }
    T* y = out.raw() + static_cast<std::size_t>(n) * cout * p;
    if (bias) {
      for (int co = 0; co < cout; ++co) std::fill(y + co * p, y + (co + 1) * p, bias->value()[co]);
    }
    detail::gemm_nn<T>(cout, p, kdim, weight.value().raw(), cm, y);
  }
  out.require_finite("conv2d");

  std::vector<Var<T>> ins{input, weight};
  if (bias) ins.push_back(*bias);
  return make_result<T>(std::move(out), std::move(ins), "conv2d", [g, kdim, p, cout](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    Node<T>* dx_node = grad_target(self, 0);
    Node<T>* dw_node = grad_target(self, 1);
    Node<T>* db_node = self.inputs.size() > 2 ? grad_target(self, 2) : nullptr;
    const int batch = xv.shape().n;
    const std::size_t in_per = static_cast<std::size_t>(g.cin) * g.h * g.w;
    std::vector<T> col(g.pointwise() ? 0 : kdim * p);
    std::vector<T> dcol(dx_node && !g.pointwise() ? kdim * p : 0);
    for (int n = 0; n < batch; ++n) {
      const T* dy = self.grad.raw() + static_cast<std::size_t>(n) * cout * p;
      if (db_node) {
        auto& gb = db_node->ensure_grad();
        for (int co = 0; co < cout; ++co) {
          T acc = 0;
          for (std::size_t i = 0; i < p; ++i) acc += dy[co * p + i];
          gb[co] += acc;
        }
      }
      const T* x = xv.raw() + n * in_per;
      if (dw_node) {
        const T* cm = x;
        if (!g.pointwise()) {
          detail::im2col(x, g, col.data());
          cm = col.data();
        }
        detail::gemm_nt<T>(cout, kdim, p, dy, cm, dw_node->ensure_grad().raw());
      }
      if (dx_node) {
        T* dx = dx_node->ensure_grad().raw() + n * in_per;
        if (g.pointwise()) {
          detail::gemm_tn<T>(kdim, p, cout, wv.raw(), dy, dx);
        } else {
          std::fill(dcol.begin(), dcol.end(), T(0));
          detail::gemm_tn<T>(kdim, p, cout, wv.raw(), dy, dcol.data());
          detail::col2im_add(dcol.data(), g, dx);
        }
      }
    }
  });
}

/// Max pooling with implicit -inf padding. Backward routes to the first maximal
/// cell in row-major window order.
template <typename T>
Var<T> max_pool2d(const Var<T>& input, int k, int stride, int padding) {
  if (k < 1 || stride < 1 || padding < 0) throw ConfigError("max_pool2d: invalid k/stride/padding");
  if (padding >= k) {
    throw ConfigError("max_pool2d: padding must be smaller than the kernel");
  }
  const Shape s = input.shape();
  const int ho = conv_out_extent(s.h, k, padding, padding, stride);
  const int wo = conv_out_extent(s.w, k, padding, padding, stride);
  if (ho <= 0 || wo <= 0) throw ShapeError("max_pool2d: no output for " + s.str());
  const Shape o{s.n, s.c, ho, wo};
  Tensor<T> out(o);
  auto argmax = std::make_shared<std::vector<std::size_t>>(o.numel());
  const auto& x = input.value();
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++i) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = 0;
          bool found = false;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= s.h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * stride - padding + kx;
              if (ix < 0 || ix >= s.w) continue;
              const std::size_t off = x.offset(n, c, iy, ix);
              if (!found || x[off] > best) {
                best = x[off];
                best_idx = off;
                found = true;
              }
            }
          }
          out[i] = best;
          (*argmax)[i] = best_idx;
        }
  return make_result<T>(std::move(out), {input}, "max_pool2d", [argmax](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) {
      auto& g = in->ensure_grad();
      for (std::size_t j = 0; j < argmax->size(); ++j) g[(*argmax)[j]] += self.grad[j];
    }
  });
}

/// Stride-1 pooling that preserves extents; k must be odd.
template <typename T>
Var<T> max_pool2d_same(const Var<T>& input, int k) {
  if (k < 1 || k % 2 == 0) {
    throw ConfigError("max_pool2d_same: kernel " + std::to_string(k) +
                      " is even; same-size pooling needs an odd kernel");
  }
  return max_pool2d(input, k, 1, (k - 1) / 2);
}

}  // namespace sffnet

#endif  // SFFNET_CONV_HPP
