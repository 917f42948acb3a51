#ifndef SFFNET_LAYERS_HPP
#define SFFNET_LAYERS_HPP

#include <cmath>
#include <optional>
#include <string>

#include "sffnet/autograd.hpp"
#include "sffnet/conv.hpp"
#include "sffnet/norm.hpp"
#include "sffnet/rng.hpp"

namespace sffnet {

template <typename T>
Tensor<T> uniform_init(Shape shape, double bound, Rng& rng) {
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

/// Convolution layer: weight (Cout,Cin,kh,kw), optional bias, fan-in uniform init.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Registry<T>& reg, const std::string& name, int cin, int cout, int kh, int kw,
         Conv2dOptions opt, bool with_bias, Rng& rng)
      : opt_(opt) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * kh * kw);
    weight_ = reg.add_parameter(name + ".weight", uniform_init<T>(Shape{cout, cin, kh, kw}, bound, rng));
    if (with_bias) {
      bias_ = reg.add_parameter(name + ".bias", uniform_init<T>(Shape{1, cout, 1, 1}, bound, rng));
    }
  }

  /// Square kernel with same-size padding.
  static Conv2d same(Registry<T>& reg, const std::string& name, int cin, int cout, int k,
                     bool with_bias, Rng& rng, int stride = 1) {
    return Conv2d(reg, name, cin, cout, k, k, Conv2dOptions{stride, Padding2d::same(k, k)}, with_bias,
                  rng);
  }

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight_, bias_, opt_); }

  const Var<T>& weight() const { return weight_; }
  const std::optional<Var<T>>& bias() const { return bias_; }
  Var<T>& weight() { return weight_; }
  std::optional<Var<T>>& bias() { return bias_; }
  const Conv2dOptions& options() const { return opt_; }

 private:
  Var<T> weight_;
  std::optional<Var<T>> bias_;
  Conv2dOptions opt_{};
};

/// Batch normalization layer with running statistics registered as buffers.
template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(Registry<T>& reg, const std::string& name, int channels) {
    gamma_ = reg.add_parameter(name + ".gamma", Tensor<T>(Shape{1, channels, 1, 1}, T(1)));
    beta_ = reg.add_parameter(name + ".beta", Tensor<T>(Shape{1, channels, 1, 1}, T(0)));
    stats_.mean = reg.add_buffer(name + ".running_mean", Tensor<T>(Shape{1, channels, 1, 1}, T(0)));
    stats_.var = reg.add_buffer(name + ".running_var", Tensor<T>(Shape{1, channels, 1, 1}, T(1)));
  }

  Var<T> operator()(const Var<T>& x, Mode mode) const {
    return batch_norm(x, gamma_, beta_, &stats_, mode);
  }

  Var<T>& gamma() { return gamma_; }
  Var<T>& beta() { return beta_; }
  const RunningStats<T>& stats() const { return stats_; }

 private:
  Var<T> gamma_, beta_;
  RunningStats<T> stats_;
};

/// Channel-axis layer normalization with affine parameters.
template <typename T>
class LayerNorm2d {
 public:
  LayerNorm2d() = default;
  LayerNorm2d(Registry<T>& reg, const std::string& name, int channels) {
    gamma_ = reg.add_parameter(name + ".gamma", Tensor<T>(Shape{1, channels, 1, 1}, T(1)));
    beta_ = reg.add_parameter(name + ".beta", Tensor<T>(Shape{1, channels, 1, 1}, T(0)));
  }

  Var<T> operator()(const Var<T>& x) const { return layer_norm(x, gamma_, beta_); }

  Var<T>& gamma() { return gamma_; }
  Var<T>& beta() { return beta_; }

 private:
  Var<T> gamma_, beta_;
};

/// Overwrite a conv weight with the identity map (centre tap 1 on matching
/// channels) and zero its bias. Test and probe helper.
template <typename T>
void set_identity(Conv2d<T>& conv) {
  auto& w = conv.weight().mutable_value();
  w.fill(T(0));
  const Shape s = w.shape();
  for (int c = 0; c < std::min(s.n, s.c); ++c) w(c, c, (s.h - 1) / 2, (s.w - 1) / 2) = T(1);
  if (conv.bias()) conv.bias()->mutable_value().fill(T(0));
}

template <typename T>
void set_zero_bias(Conv2d<T>& conv) {
  if (conv.bias()) conv.bias()->mutable_value().fill(T(0));
}

}  // namespace sffnet

#endif  // SFFNET_LAYERS_HPP
