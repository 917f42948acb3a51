#ifndef SFFNET_LINALG_HPP
#define SFFNET_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "sffnet/gemm.hpp"
#include "sffnet/ops_basic.hpp"

namespace sffnet {

/// Softmax along the last axis. Each (n, c, h) row is a distribution.
template <typename T>
Var<T> softmax_rows(const Var<T>& input) {
  const Shape s = input.shape();
  const std::size_t rows = static_cast<std::size_t>(s.n) * s.c * s.h;
  const std::size_t cols = s.w;
  Tensor<T> out(s);
  const T* x = input.value().raw();
  T* y = out.raw();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    T* yr = y + r * cols;
    const T mx = *std::max_element(xr, xr + cols);
    T z = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yr[j] /= z;
  }
  return make_result<T>(std::move(out), {input}, "softmax_rows", [rows, cols](Node<T>& self) {
    auto* in = grad_target(self, 0);
    if (!in) return;
    auto& g = in->ensure_grad();
    const T* y = self.value.raw();
    const T* dy = self.grad.raw();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < cols; ++j) dot += dy[r * cols + j] * y[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        g[r * cols + j] += y[r * cols + j] * (dy[r * cols + j] - dot);
      }
    }
  });
}

/// Batched product over the leading two axes: (B1,B2,R,S) x (B1,B2,S,T) -> (B1,B2,R,T).
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  if (as.n != bs.n || as.c != bs.c || as.w != bs.h) {
    throw ShapeError("matmul: cannot multiply " + as.str() + " by " + bs.str());
  }
  const std::size_t r = as.h, k = as.w, t = bs.w;
  const std::size_t batches = static_cast<std::size_t>(as.n) * as.c;
  Tensor<T> out(Shape{as.n, as.c, as.h, bs.w});
  for (std::size_t i = 0; i < batches; ++i) {
    detail::gemm_nn<T>(r, t, k, a.value().raw() + i * r * k, b.value().raw() + i * k * t,
                       out.raw() + i * r * t);
  }
  return make_result<T>(std::move(out), {a, b}, "matmul", [r, k, t, batches](Node<T>& self) {
    const T* av = self.inputs[0]->value.raw();
    const T* bv = self.inputs[1]->value.raw();
    auto* ga = grad_target(self, 0);
    auto* gb = grad_target(self, 1);
    for (std::size_t i = 0; i < batches; ++i) {
      const T* dy = self.grad.raw() + i * r * t;
      if (ga) detail::gemm_nt<T>(r, k, t, dy, bv + i * k * t, ga->ensure_grad().raw() + i * r * k);
      if (gb) detail::gemm_tn<T>(k, t, r, av + i * r * k, dy, gb->ensure_grad().raw() + i * k * t);
    }
  });
}

/// Softmax over the channel axis at every (n, y, x).
template <typename T>
Var<T> softmax_channels(const Var<T>& input) {
  const Shape s = input.shape();
  const std::size_t plane = s.plane();
  Tensor<T> out(s);
  const auto& x = input.value();
  for (int n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t base = x.offset(n, 0, 0, 0) + i;
      T mx = x[base];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, x[base + c * plane]);
      T z = 0;
      for (int c = 0; c < s.c; ++c) {
        const T e = std::exp(x[base + c * plane] - mx);
        out[base + c * plane] = e;
        z += e;
      }
      for (int c = 0; c < s.c; ++c) out[base + c * plane] /= z;
    }
  return make_result<T>(std::move(out), {input}, "softmax_channels", [plane](Node<T>& self) {
    auto* in = grad_target(self, 0);
    if (!in) return;
    auto& g = in->ensure_grad();
    const Shape s = self.value.shape();
    const auto& y = self.value;
    const auto& dy = self.grad;
    for (int n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t base = y.offset(n, 0, 0, 0) + i;
        T dot = 0;
        for (int c = 0; c < s.c; ++c) dot += dy[base + c * plane] * y[base + c * plane];
        for (int c = 0; c < s.c; ++c) {
          g[base + c * plane] += y[base + c * plane] * (dy[base + c * plane] - dot);
        }
      }
  });
}

}  // namespace sffnet

#endif  // SFFNET_LINALG_HPP
