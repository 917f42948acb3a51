#ifndef SFFNET_LOSSES_HPP
#define SFFNET_LOSSES_HPP

#include <cmath>
#include <memory>
#include <string>

#include "sffnet/labels.hpp"
#include "sffnet/linalg.hpp"

namespace sffnet {

inline constexpr double kDiceEps = 1e-6;

namespace detail {

inline void require_label_layout(const Shape& s, const LabelMap& labels, const char* op) {
  if (labels.n != s.n || labels.h != s.h || labels.w != s.w) {
    throw ShapeError(std::string(op) + ": labels (" + std::to_string(labels.n) + "," + std::to_string(labels.h) + "," +
                     std::to_string(labels.w) + ") do not match predictions " + s.str());
  }
}

inline std::size_t count_valid(const LabelMap& labels, int ignore_index) {
  std::size_t n = 0;
  for (int v : labels.data) n += v != ignore_index;
  return n;
}

}  // namespace detail

/// Mean negative log-likelihood of softmax(logits) over non-ignored pixels.
/// Returns 0 when every pixel is ignored (`all_ignored` is then set if given).
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const LabelMap& labels, int ignore_index = kDefaultIgnoreIndex,
                     bool* all_ignored = nullptr) {
  const Shape s = logits.shape();
  detail::require_label_layout(s, labels, "cross_entropy");
  labels.validate(s.c, ignore_index);
  const std::size_t valid = detail::count_valid(labels, ignore_index);
  if (all_ignored) *all_ignored = valid == 0;
  const std::size_t plane = s.plane();
  const auto& x = logits.value();
  auto prob = std::make_shared<Tensor<T>>(s);
  double total = 0;
  for (int n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      const int y = labels.data[n * plane + i];
      if (y == ignore_index) continue;
      const std::size_t base = x.offset(n, 0, 0, 0) + i;
      T mx = x[base];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, x[base + c * plane]);
      T z = 0;
      for (int c = 0; c < s.c; ++c) z += std::exp(x[base + c * plane] - mx);
      const T lse = mx + std::log(z);
      for (int c = 0; c < s.c; ++c) (*prob)[base + c * plane] = std::exp(x[base + c * plane] - lse);
      total += static_cast<double>(lse - x[base + y * plane]);
    }
  const T value = valid ? static_cast<T>(total / valid) : T(0);
  return make_result<T>(Tensor<T>(Shape{1, 1, 1, 1}, value), {logits}, "cross_entropy",
                        [prob, labels, ignore_index, valid, plane](Node<T>& self) {
                          auto* in = grad_target(self, 0);
                          if (!in || valid == 0) return;
                          auto& g = in->ensure_grad();
                          const Shape s = in->value.shape();
                          const T scale = self.grad[0] / static_cast<T>(valid);
                          for (int n = 0; n < s.n; ++n)
                            for (std::size_t i = 0; i < plane; ++i) {
                              const int y = labels.data[n * plane + i];
                              if (y == ignore_index) continue;
                              const std::size_t base = g.offset(n, 0, 0, 0) + i;
                              for (int c = 0; c < s.c; ++c) {
                                g[base + c * plane] += scale * ((*prob)[base + c * plane] - T(c == y));
                              }
                            }
                        });
}

/// Soft dice loss on class probabilities:
///   1 - (2/N) * sum over pixels and classes of p*y / (p + y + eps)
/// with N the number of non-ignored pixels. Only the true class has y = 1, so
/// each pixel contributes p_true / (p_true + 1 + eps).
template <typename T>
Var<T> dice_loss(const Var<T>& probs, const LabelMap& labels, int ignore_index = kDefaultIgnoreIndex,
                 double eps = kDiceEps) {
  const Shape s = probs.shape();
  detail::require_label_layout(s, labels, "dice_loss");
  labels.validate(s.c, ignore_index);
  const std::size_t valid = detail::count_valid(labels, ignore_index);
  const std::size_t plane = s.plane();
  const auto& p = probs.value();
  const T e = static_cast<T>(eps);
  double acc = 0;
  for (int n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      const int y = labels.data[n * plane + i];
      if (y == ignore_index) continue;
      const T pt = p[p.offset(n, y, 0, 0) + i];
      acc += static_cast<double>(pt / (pt + T(1) + e));
    }
  const T value = valid ? static_cast<T>(1.0 - 2.0 * acc / valid) : T(0);
  return make_result<T>(Tensor<T>(Shape{1, 1, 1, 1}, value), {probs}, "dice_loss",
                        [labels, ignore_index, valid, plane, e](Node<T>& self) {
                          auto* in = grad_target(self, 0);
                          if (!in || valid == 0) return;
                          auto& g = in->ensure_grad();
                          const auto& p = in->value;
                          const Shape s = p.shape();
                          const T scale = -T(2) * self.grad[0] / static_cast<T>(valid);
                          for (int n = 0; n < s.n; ++n)
                            for (std::size_t i = 0; i < plane; ++i) {
                              const int y = labels.data[n * plane + i];
                              if (y == ignore_index) continue;
                              const std::size_t at = p.offset(n, y, 0, 0) + i;
                              const T d = p[at] + T(1) + e;
                              g[at] += scale * (T(1) + e) / (d * d);
                            }
                        });
}

template <typename T>
struct LossValue {
  Var<T> total, ce, dice;
  bool all_ignored = false;
};

/// L = CE(logits) + Dice(softmax(logits)).
template <typename T>
LossValue<T> total_loss(const Var<T>& logits, const LabelMap& labels, int ignore_index = kDefaultIgnoreIndex,
                        double eps = kDiceEps) {
  LossValue<T> l;
  l.ce = cross_entropy(logits, labels, ignore_index, &l.all_ignored);
  l.dice = dice_loss(softmax_channels(logits), labels, ignore_index, eps);
  l.total = add(l.ce, l.dice);
  if (!l.total.value().all_finite()) throw NumericError("total_loss: non-finite loss");
  return l;
}

}  // namespace sffnet

#endif  // SFFNET_LOSSES_HPP
