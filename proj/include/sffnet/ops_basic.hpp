#ifndef SFFNET_OPS_BASIC_HPP
#define SFFNET_OPS_BASIC_HPP

#include <array>
#include <numeric>
#include <string>
#include <vector>

#include "sffnet/autograd.hpp"

namespace sffnet {

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src, T scale = T(1)) {
  T* d = dst.raw();
  const T* s = src.raw();
  for (std::size_t i = 0; i < dst.numel(); ++i) d[i] += scale * s[i];
}

}  // namespace detail

/// Constant (non-differentiable) wrapper.
template <typename T>
Var<T> constant(Tensor<T> t) {
  return Var<T>(std::move(t), false);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  detail::accumulate(out, b.value());
  return make_result<T>(std::move(out), {a, b}, "add", [](Node<T>& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (auto* in = grad_target(self, i)) detail::accumulate(in->ensure_grad(), self.grad);
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  detail::accumulate(out, b.value(), T(-1));
  return make_result<T>(std::move(out), {a, b}, "sub", [](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) detail::accumulate(in->ensure_grad(), self.grad);
    if (auto* in = grad_target(self, 1)) detail::accumulate(in->ensure_grad(), self.grad, T(-1));
  });
}

/// Elementwise product.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, "mul", [](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* in = grad_target(self, 0)) {
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (auto* in = grad_target(self, 1)) {
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  return make_result<T>(std::move(out), {a}, "scale", [s](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) detail::accumulate(in->ensure_grad(), self.grad, s);
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return make_result<T>(std::move(out), {a}, "relu", [](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) {
      auto& g = in->ensure_grad();
      const auto& x = in->value;
      for (std::size_t i = 0; i < g.numel(); ++i) {
        if (x[i] > T(0)) g[i] += self.grad[i];
      }
    }
  });
}

/// Sum of all entries as a (1,1,1,1) scalar.
template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc = 0;
  for (T v : a.value().data()) acc += v;
  return make_result<T>(Tensor<T>(Shape{1, 1, 1, 1}, acc), {a}, "sum", [](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) {
      const T g0 = self.grad[0];
      for (auto& g : in->ensure_grad().data()) g += g0;
    }
  });
}

/// Same data under new extents.
template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(shape);
  return make_result<T>(std::move(out), {a}, "reshape", [](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) {
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

/// out.flat[i] = a.flat[index[i]]. Backward scatter-adds. Covers permutations,
/// window tiling and table lookups.
template <typename T>
Var<T> gather_flat(const Var<T>& a, std::shared_ptr<const std::vector<std::size_t>> index,
                   Shape out_shape, const char* op = "gather") {
  if (index->size() != out_shape.numel()) {
    throw ShapeError(std::string(op) + ": index map size does not match output shape " +
                     out_shape.str());
  }
  Tensor<T> out(out_shape);
  const auto& src = a.value();
  for (std::size_t i = 0; i < index->size(); ++i) {
    const std::size_t j = (*index)[i];
    if (j >= src.numel()) throw ShapeError(std::string(op) + ": index out of range");
    out[i] = src[j];
  }
  return make_result<T>(std::move(out), {a}, op, [index](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) {
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < index->size(); ++i) g[(*index)[i]] += self.grad[i];
    }
  });
}

/// Axis permutation; out axis k is input axis perm[k].
template <typename T>
Var<T> permute(const Var<T>& a, std::array<int, 4> perm) {
  const Shape s = a.shape();
  const std::array<int, 4> in_dims{s.n, s.c, s.h, s.w};
  std::array<bool, 4> used{};
  for (int p : perm) {
    if (p < 0 || p > 3 || used[p]) throw ShapeError("permute: invalid axis permutation");
    used[p] = true;
  }
  const Shape o{in_dims[perm[0]], in_dims[perm[1]], in_dims[perm[2]], in_dims[perm[3]]};
  const std::array<std::size_t, 4> in_stride{
      static_cast<std::size_t>(s.c) * s.h * s.w, static_cast<std::size_t>(s.h) * s.w,
      static_cast<std::size_t>(s.w), 1};
  auto index = std::make_shared<std::vector<std::size_t>>(o.numel());
  std::size_t i = 0;
  for (int a0 = 0; a0 < o.n; ++a0)
    for (int a1 = 0; a1 < o.c; ++a1)
      for (int a2 = 0; a2 < o.h; ++a2)
        for (int a3 = 0; a3 < o.w; ++a3) {
          const std::array<int, 4> idx{a0, a1, a2, a3};
          std::size_t off = 0;
          for (int k = 0; k < 4; ++k) off += static_cast<std::size_t>(idx[k]) * in_stride[perm[k]];
          (*index)[i++] = off;
        }
  return gather_flat(a, std::move(index), o, "permute");
}

/// Swap the last two axes: (N,C,H,W) -> (N,C,W,H).
template <typename T>
Var<T> transpose_last(const Var<T>& a) {
  return permute(a, {0, 1, 3, 2});
}

/// Concatenate along the channel axis.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Shape o = parts[0].shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    if (s.n != o.n || s.h != o.h || s.w != o.w) {
      throw ShapeError("concat_channels: " + s.str() + " does not match " + o.str());
    }
    channels += s.c;
  }
  o.c = channels;
  Tensor<T> out(o);
  const std::size_t plane = o.plane();
  std::vector<int> offsets;
  int c0 = 0;
  for (const auto& p : parts) {
    offsets.push_back(c0);
    const Shape s = p.shape();
    for (int n = 0; n < s.n; ++n) {
      const T* src = p.value().raw() + static_cast<std::size_t>(n) * s.c * plane;
      T* dst = out.raw() + (static_cast<std::size_t>(n) * o.c + c0) * plane;
      std::copy(src, src + s.c * plane, dst);
    }
    c0 += s.c;
  }
  return make_result<T>(std::move(out), parts, "concat", [offsets, plane](Node<T>& self) {
    const Shape o = self.value.shape();
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      auto* in = grad_target(self, i);
      if (!in) continue;
      auto& g = in->ensure_grad();
      const int c = in->value.shape().c;
      for (int n = 0; n < o.n; ++n) {
        const T* src = self.grad.raw() + (static_cast<std::size_t>(n) * o.c + offsets[i]) * plane;
        T* dst = g.raw() + static_cast<std::size_t>(n) * c * plane;
        for (std::size_t k = 0; k < c * plane; ++k) dst[k] += src[k];
      }
    }
  });
}

/// Channels [begin, end).
template <typename T>
Var<T> slice_channels(const Var<T>& a, int begin, int end) {
  const Shape s = a.shape();
  if (begin < 0 || end > s.c || begin >= end) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside " + std::to_string(s.c) + " channels");
  }
  const Shape o{s.n, end - begin, s.h, s.w};
  const std::size_t plane = s.plane();
  Tensor<T> out(o);
  for (int n = 0; n < s.n; ++n) {
    const T* src = a.value().raw() + (static_cast<std::size_t>(n) * s.c + begin) * plane;
    std::copy(src, src + o.c * plane, out.raw() + static_cast<std::size_t>(n) * o.c * plane);
  }
  return make_result<T>(std::move(out), {a}, "slice_channels", [begin, plane](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) {
      auto& g = in->ensure_grad();
      const Shape s = in->value.shape();
      const Shape o = self.value.shape();
      for (int n = 0; n < s.n; ++n) {
        T* dst = g.raw() + (static_cast<std::size_t>(n) * s.c + begin) * plane;
        const T* src = self.grad.raw() + static_cast<std::size_t>(n) * o.c * plane;
        for (std::size_t k = 0; k < o.c * plane; ++k) dst[k] += src[k];
      }
    }
  });
}

/// Spatial window [top, top+h) x [left, left+w).
template <typename T>
Var<T> crop(const Var<T>& a, int top, int left, int h, int w) {
  const Shape s = a.shape();
  if (top < 0 || left < 0 || h <= 0 || w <= 0 || top + h > s.h || left + w > s.w) {
    throw ShapeError("crop: window outside " + s.str());
  }
  auto index = std::make_shared<std::vector<std::size_t>>();
  index->reserve(static_cast<std::size_t>(s.n) * s.c * h * w);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) index->push_back(a.value().offset(n, c, top + y, left + x));
  return gather_flat(a, std::move(index), Shape{s.n, s.c, h, w}, "crop");
}

/// Reflection padding (edge sample not repeated). Each pad must be < extent.
template <typename T>
Var<T> pad_reflect(const Var<T>& a, int top, int bottom, int left, int right) {
  const Shape s = a.shape();
  if (top < 0 || bottom < 0 || left < 0 || right < 0) throw ShapeError("pad_reflect: negative pad");
  if (top == 0 && bottom == 0 && left == 0 && right == 0) return a;
  if (std::max(top, bottom) >= s.h || std::max(left, right) >= s.w) {
    throw ShapeError("pad_reflect: pad must be smaller than the extent of " + s.str());
  }
  auto reflect = [](int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
  };
  const Shape o{s.n, s.c, s.h + top + bottom, s.w + left + right};
  auto index = std::make_shared<std::vector<std::size_t>>();
  index->reserve(o.numel());
  for (int n = 0; n < o.n; ++n)
    for (int c = 0; c < o.c; ++c)
      for (int y = 0; y < o.h; ++y)
        for (int x = 0; x < o.w; ++x) {
          index->push_back(a.value().offset(n, c, reflect(y - top, s.h), reflect(x - left, s.w)));
        }
  return gather_flat(a, std::move(index), o, "pad_reflect");
}

/// x (B,C,H,W) + b broadcast from (1,C,H,W) over the batch axis.
template <typename T>
Var<T> add_batch_broadcast(const Var<T>& x, const Var<T>& b) {
  const Shape s = x.shape();
  const Shape bs = b.shape();
  if (bs.n != 1 || bs.c != s.c || bs.h != s.h || bs.w != s.w) {
    throw ShapeError("add_batch_broadcast: " + bs.str() + " cannot broadcast to " + s.str());
  }
  Tensor<T> out = x.value();
  const std::size_t per = bs.numel();
  for (int n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < per; ++i) out[n * per + i] += b.value()[i];
  return make_result<T>(std::move(out), {x, b}, "add_batch_broadcast", [per](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) detail::accumulate(in->ensure_grad(), self.grad);
    if (auto* in = grad_target(self, 1)) {
      auto& g = in->ensure_grad();
      const std::size_t batches = self.grad.numel() / per;
      for (std::size_t n = 0; n < batches; ++n)
        for (std::size_t i = 0; i < per; ++i) g[i] += self.grad[n * per + i];
    }
  });
}

}  // namespace sffnet

#endif  // SFFNET_OPS_BASIC_HPP
