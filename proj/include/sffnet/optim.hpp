#ifndef SFFNET_OPTIM_HPP
#define SFFNET_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sffnet/autograd.hpp"

namespace sffnet {

struct AdamWOptions {
  double lr = 6e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay:
///   p <- p * (1 - lr*wd)
///   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
template <typename T>
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::vector<Parameter<T>> params, AdamWOptions opt) : params_(std::move(params)), opt_(opt) {
    for (const auto& p : params_) {
      m_.emplace_back(p.var.shape());
      v_.emplace_back(p.var.shape());
    }
  }

  /// One update at learning rate `lr`. Throws NumericError naming the first
  /// parameter whose gradient is not finite; nothing is modified in that case.
  void step(double lr) {
    for (const auto& p : params_) {
      if (p.var.has_grad() && !p.var.node().grad.all_finite()) {
        throw NumericError("non-finite gradient in parameter '" + p.name + "' at step " + std::to_string(t_ + 1));
      }
    }
    ++t_;
    const double c1 = 1 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1 - std::pow(opt_.beta2, static_cast<double>(t_));
    const double decay = 1 - lr * opt_.weight_decay;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Var<T> var = params_[k].var;
      Tensor<T>& p = var.mutable_value();
      const bool has = var.has_grad();
      const Tensor<T>* g = has ? &var.node().grad : nullptr;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const double gi = has ? static_cast<double>((*g)[i]) : 0.0;
        const double mi = opt_.beta1 * m[i] + (1 - opt_.beta1) * gi;
        const double vi = opt_.beta2 * v[i] + (1 - opt_.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + opt_.eps);
        p[i] = static_cast<T>(static_cast<double>(p[i]) * decay - update);
      }
    }
  }

  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  const AdamWOptions& options() const { return opt_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }

 private:
  std::vector<Parameter<T>> params_;
  AdamWOptions opt_;
  std::vector<Tensor<T>> m_, v_;
  std::int64_t t_ = 0;
};

/// Cosine annealing with warm restarts. Cycle i spans T_i = T0 * mult^i epochs
/// and covers t = 0..T_i inclusive, so its last epoch sits at the minimum and
/// the following epoch restarts at the maximum.
struct CosineSchedule {
  double lr_max = 6e-4;
  double lr_min = 1e-6;
  int t0 = 15;
  int mult = 2;

  /// Learning rate at epoch `e` (0-based).
  double lr_at(std::int64_t e) const {
    if (t0 < 1 || mult < 1) throw ConfigError("schedule: t0 and mult must be >= 1");
    if (e < 0) throw ConfigError("schedule: negative epoch");
    std::int64_t period = t0;
    while (e > period) {
      e -= period + 1;
      period *= mult;
    }
    const double pi = 3.14159265358979323846;
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + std::cos(pi * static_cast<double>(e) / static_cast<double>(period)));
  }
};

}  // namespace sffnet

#endif  // SFFNET_OPTIM_HPP
