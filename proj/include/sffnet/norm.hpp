#ifndef SFFNET_NORM_HPP
#define SFFNET_NORM_HPP

#include <cmath>
#include <memory>
#include <vector>

#include "sffnet/ops_basic.hpp"

namespace sffnet {

enum class Mode { train, eval };

/// Running statistics for batch normalization, one entry per channel.
template <typename T>
struct RunningStats {
  std::shared_ptr<Tensor<T>> mean;
  std::shared_ptr<Tensor<T>> var;
};

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kNormEps = 1e-5;

/// Per-channel batch normalization. gamma/beta are (1,C,1,1). In train mode the
/// batch statistics normalize and, when `running` is non-null, update the running
/// estimates (unbiased variance). Eval mode reads the running estimates.
template <typename T>
Var<T> batch_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta,
                  const RunningStats<T>* running, Mode mode, double momentum = kBatchNormMomentum,
                  double eps = kNormEps) {
  const Shape s = input.shape();
  if (gamma.value().numel() != static_cast<std::size_t>(s.c) ||
      beta.value().numel() != static_cast<std::size_t>(s.c)) {
    throw ShapeError("batch_norm: gamma/beta length must equal channel count " + std::to_string(s.c));
  }
  if (mode == Mode::eval && !running) throw ConfigError("batch_norm: eval mode needs running stats");
  const std::size_t plane = s.plane();
  const std::size_t count = static_cast<std::size_t>(s.n) * plane;
  const auto& x = input.value();

  std::vector<T> mean(s.c), inv_std(s.c);
  for (int c = 0; c < s.c; ++c) {
    T m, v;
    if (mode == Mode::train) {
      T acc = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = x.raw() + x.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      m = acc / static_cast<T>(count);
      T sq = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = x.raw() + x.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - m) * (p[i] - m);
      }
      v = sq / static_cast<T>(count);
      if (running) {
        const T mom = static_cast<T>(momentum);
        const T unbiased = count > 1 ? sq / static_cast<T>(count - 1) : v;
        (*running->mean)[c] = (T(1) - mom) * (*running->mean)[c] + mom * m;
        (*running->var)[c] = (T(1) - mom) * (*running->var)[c] + mom * unbiased;
      }
    } else {
      m = (*running->mean)[c];
      v = (*running->var)[c];
    }
    mean[c] = m;
    inv_std[c] = T(1) / std::sqrt(v + static_cast<T>(eps));
  }

  Tensor<T> xhat(s);
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.raw() + x.offset(n, c, 0, 0);
      T* h = xhat.raw() + x.offset(n, c, 0, 0);
      T* y = out.raw() + x.offset(n, c, 0, 0);
      const T gm = gamma.value()[c], bt = beta.value()[c];
      for (std::size_t i = 0; i < plane; ++i) {
        h[i] = (p[i] - mean[c]) * inv_std[c];
        y[i] = gm * h[i] + bt;
      }
    }

  const bool batch_stats = mode == Mode::train;
  return make_result<T>(
      std::move(out), {input, gamma, beta}, "batch_norm",
      [xhat = std::move(xhat), inv_std, batch_stats, plane, count](Node<T>& self) {
        const Shape s = self.value.shape();
        const auto& dy = self.grad;
        const auto& gm = self.inputs[1]->value;
        std::vector<T> sum_dy(s.c, 0), sum_dy_xhat(s.c, 0);
        for (int n = 0; n < s.n; ++n)
          for (int c = 0; c < s.c; ++c) {
            const std::size_t base = dy.offset(n, c, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy[c] += dy[base + i];
              sum_dy_xhat[c] += dy[base + i] * xhat[base + i];
            }
          }
        if (auto* in = grad_target(self, 1)) {
          auto& g = in->ensure_grad();
          for (int c = 0; c < s.c; ++c) g[c] += sum_dy_xhat[c];
        }
        if (auto* in = grad_target(self, 2)) {
          auto& g = in->ensure_grad();
          for (int c = 0; c < s.c; ++c) g[c] += sum_dy[c];
        }
        if (auto* in = grad_target(self, 0)) {
          auto& g = in->ensure_grad();
          const T inv_count = T(1) / static_cast<T>(count);
          for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
              const std::size_t base = dy.offset(n, c, 0, 0);
              const T k = gm[c] * inv_std[c];
              for (std::size_t i = 0; i < plane; ++i) {
                if (batch_stats) {
                  g[base + i] += k * (dy[base + i] - inv_count * sum_dy[c] -
                                      xhat[base + i] * inv_count * sum_dy_xhat[c]);
                } else {
                  g[base + i] += k * dy[base + i];
                }
              }
            }
        }
      });
}

/// Layer normalization over the channel axis at every (n, y, x), with per-channel
/// affine gamma/beta of shape (1,C,1,1).
template <typename T>
Var<T> layer_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta,
                  double eps = kNormEps) {
  const Shape s = input.shape();
  if (gamma.value().numel() != static_cast<std::size_t>(s.c) ||
      beta.value().numel() != static_cast<std::size_t>(s.c)) {
    throw ShapeError("layer_norm: gamma/beta length must equal channel count " + std::to_string(s.c));
  }
  const std::size_t plane = s.plane();
  const auto& x = input.value();
  Tensor<T> xhat(s);
  Tensor<T> out(s);
  std::vector<T> inv_std(static_cast<std::size_t>(s.n) * plane);
  for (int n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t base = x.offset(n, 0, 0, 0) + i;
      T m = 0;
      for (int c = 0; c < s.c; ++c) m += x[base + c * plane];
      m /= static_cast<T>(s.c);
      T v = 0;
      for (int c = 0; c < s.c; ++c) {
        const T d = x[base + c * plane] - m;
        v += d * d;
      }
      v /= static_cast<T>(s.c);
      const T is = T(1) / std::sqrt(v + static_cast<T>(eps));
      inv_std[n * plane + i] = is;
      for (int c = 0; c < s.c; ++c) {
        const T h = (x[base + c * plane] - m) * is;
        xhat[base + c * plane] = h;
        out[base + c * plane] = gamma.value()[c] * h + beta.value()[c];
      }
    }
  return make_result<T>(
      std::move(out), {input, gamma, beta}, "layer_norm",
      [xhat = std::move(xhat), inv_std = std::move(inv_std), plane](Node<T>& self) {
        const Shape s = self.value.shape();
        const auto& dy = self.grad;
        const auto& gm = self.inputs[1]->value;
        auto* gx = grad_target(self, 0);
        auto* gg = grad_target(self, 1);
        auto* gb = grad_target(self, 2);
        const T inv_c = T(1) / static_cast<T>(s.c);
        for (int n = 0; n < s.n; ++n)
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t base = dy.offset(n, 0, 0, 0) + i;
            T sum_dh = 0, sum_dh_h = 0;
            for (int c = 0; c < s.c; ++c) {
              const std::size_t k = base + c * plane;
              const T dh = dy[k] * gm[c];
              sum_dh += dh;
              sum_dh_h += dh * xhat[k];
              if (gg) gg->ensure_grad()[c] += dy[k] * xhat[k];
              if (gb) gb->ensure_grad()[c] += dy[k];
            }
            if (gx) {
              auto& g = gx->ensure_grad();
              const T is = inv_std[n * plane + i];
              for (int c = 0; c < s.c; ++c) {
                const std::size_t k = base + c * plane;
                g[k] += is * (dy[k] * gm[c] - inv_c * sum_dh - xhat[k] * inv_c * sum_dh_h);
              }
            }
          }
      });
}

}  // namespace sffnet

#endif  // SFFNET_NORM_HPP
