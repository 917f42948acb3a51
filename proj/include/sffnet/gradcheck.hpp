#ifndef SFFNET_GRADCHECK_HPP
#define SFFNET_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sffnet/autograd.hpp"
#include "sffnet/ops_basic.hpp"
#include "sffnet/rng.hpp"

namespace sffnet {

/// The audited function is not a deterministic function of its inputs.
class AuditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Smallest denominator of the relative error. Raise it when the objective is
  /// large enough that roundoff in the difference quotient exceeds 1e-8.
  double denominator_floor = 1e-8;
  /// Entries probed per input; 0 probes every entry. Sampled entries are chosen
  /// with `seed`.
  std::size_t max_entries_per_input = 0;
  std::uint64_t seed = 0;
  /// Doubles the analytic gradient at the root. Negative control for the harness.
  bool inject_fault = false;
};

struct InputGradReport {
  std::string name;
  std::size_t entries_checked = 0;
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<InputGradReport> inputs;
  double max_rel_error = 0;
  bool passed = true;
};

/// |a - n| / max(|a|, |n|, floor)
inline double grad_relative_error(double analytic, double numeric, double floor = 1e-8) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Identity in the forward pass; multiplies the incoming gradient by `factor`.
template <typename T>
Var<T> scale_gradient(const Var<T>& x, T factor) {
  return make_result<T>(x.value(), {x}, "scale_gradient", [factor](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) detail::accumulate(in->ensure_grad(), self.grad, factor);
  });
}

/// sum(x * weights) with constant weights; turns a tensor output into a scalar probe.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights) {
  return sum(mul(x, constant(weights)));
}

/// Fixed random weights in [-1, 1] for `weighted_sum`.
template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Central-difference audit of reverse-mode gradients. `fn` rebuilds the scalar
/// objective from the current values of `inputs` on every call.
inline GradcheckReport gradcheck(const std::function<Var<double>()>& fn,
                                 std::vector<std::pair<std::string, Var<double>>> inputs,
                                 const GradcheckOptions& opt = {}) {
  for (auto& [name, v] : inputs) v.zero_grad();
  {
    Var<double> root = fn();
    if (root.value().numel() != 1) throw ShapeError("gradcheck: objective must be scalar");
    if (opt.inject_fault) root = scale_gradient(root, 2.0);
    backward(root);
  }
  std::vector<Tensor<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& [name, v] : inputs) analytic.push_back(v.grad());

  NoGradGuard no_grad;
  auto eval = [&] { return fn().value()[0]; };
  const double f0 = eval();
  if (eval() != f0) throw AuditError("gradcheck: objective is not deterministic");

  GradcheckReport report;
  Rng rng(opt.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& [name, v] = inputs[k];
    InputGradReport r;
    r.name = name;
    const std::size_t n = v.value().numel();
    std::vector<std::size_t> probe(n);
    std::iota(probe.begin(), probe.end(), std::size_t{0});
    if (opt.max_entries_per_input > 0 && n > opt.max_entries_per_input) {
      for (std::size_t i = 0; i < opt.max_entries_per_input; ++i) {
        std::swap(probe[i], probe[i + rng.below(n - i)]);
      }
      probe.resize(opt.max_entries_per_input);
    }
    for (std::size_t idx : probe) {
      double& x = v.mutable_value()[idx];
      const double saved = x;
      x = saved + opt.step;
      const double fp = eval();
      x = saved - opt.step;
      const double fm = eval();
      x = saved;
      const double numeric = (fp - fm) / (2 * opt.step);
      const double a = analytic[k][idx];
      const double err = grad_relative_error(a, numeric, opt.denominator_floor);
      if (err > r.max_rel_error || r.entries_checked == 0) {
        r.max_rel_error = err;
        r.worst_index = idx;
        r.worst_analytic = a;
        r.worst_numeric = numeric;
      }
      ++r.entries_checked;
    }
    r.passed = r.max_rel_error <= opt.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, r.max_rel_error);
    report.passed = report.passed && r.passed;
    report.inputs.push_back(std::move(r));
  }
  return report;
}

}  // namespace sffnet

#endif  // SFFNET_GRADCHECK_HPP
