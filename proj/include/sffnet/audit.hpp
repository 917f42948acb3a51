#ifndef SFFNET_AUDIT_HPP
#define SFFNET_AUDIT_HPP

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sffnet/conv.hpp"
#include "sffnet/global_branch.hpp"
#include "sffnet/gradcheck.hpp"
#include "sffnet/linalg.hpp"
#include "sffnet/local_branch.hpp"
#include "sffnet/losses.hpp"
#include "sffnet/mdaf.hpp"
#include "sffnet/model.hpp"
#include "sffnet/norm.hpp"
#include "sffnet/resample.hpp"
#include "sffnet/wavelet.hpp"
#include "sffnet/wtfd.hpp"

namespace sffnet {

/// One named gradient audit over f64 inputs. `group` is "op", "branch" or "network".
struct AuditCase {
  std::string name;
  std::string group;
  GradcheckOptions options;
  std::function<GradcheckReport(std::uint64_t seed, const GradcheckOptions&)> run;
};

struct AuditResult {
  std::string name;
  std::string group;
  double tolerance = 0;
  GradcheckReport report;
  double seconds = 0;
};

namespace audit_detail {

using D = double;
using Inputs = std::vector<std::pair<std::string, Var<D>>>;

inline Var<D> leaf(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Var<D>(random_tensor<D>(s, rng, lo, hi), true);
}

/// Gradcheck of sum(fn() * W) with fixed random W.
inline GradcheckReport projected(const std::function<Var<D>()>& fn, Inputs inputs, Rng& rng,
                                 const GradcheckOptions& opt) {
  Shape out;
  {
    NoGradGuard g;
    out = fn().shape();
  }
  const Tensor<D> w = random_tensor<D>(out, rng);
  return gradcheck([&] { return weighted_sum(fn(), w); }, std::move(inputs), opt);
}

inline void add_params(Inputs& inputs, const Registry<D>& reg) {
  for (const auto& p : reg.parameters()) inputs.emplace_back(p.name, p.var);
}

inline LabelMap random_labels(int n, int h, int w, int k, Rng& rng) {
  LabelMap m(n, h, w);
  for (auto& v : m.data) v = rng.uniform(0, 1) < 0.15 ? kDefaultIgnoreIndex : static_cast<std::int32_t>(rng.below(k));
  return m;
}

}  // namespace audit_detail

inline std::vector<AuditCase> audit_cases() {
  using namespace audit_detail;
  std::vector<AuditCase> cases;
  auto op = [&](std::string name, auto fn) {
    cases.push_back({std::move(name), "op", {}, [fn](std::uint64_t seed, const GradcheckOptions& o) {
                       Rng rng(seed);
                       return fn(rng, o);
                     }});
  };
  op("elementwise", [](Rng& rng, const GradcheckOptions& o) {
    auto a = leaf(Shape{2, 3, 3, 3}, rng), b = leaf(Shape{2, 3, 3, 3}, rng), c = leaf(Shape{1, 3, 3, 3}, rng);
    return projected([&] { return add_batch_broadcast(scale(mul(sub(a, b), add(a, b)), 0.7), c); },
                     {{"a", a}, {"b", b}, {"c", c}}, rng, o);
  });
  op("relu", [](Rng& rng, const GradcheckOptions& o) {
    auto x = leaf(Shape{1, 2, 4, 4}, rng);
    return projected([&] { return relu(x); }, {{"x", x}}, rng, o);
  });
  op("conv2d", [](Rng& rng, const GradcheckOptions& o) {
    auto x = leaf(Shape{2, 3, 7, 6}, rng), w = leaf(Shape{4, 3, 3, 2}, rng), b = leaf(Shape{1, 4, 1, 1}, rng);
    return projected([&] { return conv2d<D>(x, w, b, {2, Padding2d{1, 0, 1, 1}}); },
                     {{"x", x}, {"weight", w}, {"bias", b}}, rng, o);
  });
  op("max_pool2d", [](Rng& rng, const GradcheckOptions& o) {
    auto x = leaf(Shape{1, 2, 6, 6}, rng);
    return projected([&] { return add(max_pool2d_same(x, 5), max_pool2d(x, 3, 1, 1)); }, {{"x", x}}, rng, o);
  });
  op("bilinear", [](Rng& rng, const GradcheckOptions& o) {
    auto x = leaf(Shape{1, 2, 3, 5}, rng);
    return projected([&] { return interpolate_bilinear(x, 7, 4); }, {{"x", x}}, rng, o);
  });
  op("batch_norm", [](Rng& rng, const GradcheckOptions& o) {
    auto x = leaf(Shape{2, 3, 3, 3}, rng), g = leaf(Shape{1, 3, 1, 1}, rng), b = leaf(Shape{1, 3, 1, 1}, rng);
    return projected([&] { return batch_norm<D>(x, g, b, nullptr, Mode::train); },
                     {{"x", x}, {"gamma", g}, {"beta", b}}, rng, o);
  });
  op("layer_norm", [](Rng& rng, const GradcheckOptions& o) {
    auto x = leaf(Shape{2, 4, 2, 3}, rng), g = leaf(Shape{1, 4, 1, 1}, rng), b = leaf(Shape{1, 4, 1, 1}, rng);
    return projected([&] { return layer_norm<D>(x, g, b); }, {{"x", x}, {"gamma", g}, {"beta", b}}, rng, o);
  });
  op("softmax", [](Rng& rng, const GradcheckOptions& o) {
    auto x = leaf(Shape{1, 2, 3, 5}, rng), y = leaf(Shape{1, 4, 2, 3}, rng);
    return projected([&] { return concat_channels<D>({reshape(softmax_rows(x), Shape{1, 30, 1, 1}),
                                                      reshape(softmax_channels(y), Shape{1, 24, 1, 1})}); },
                     {{"x", x}, {"y", y}}, rng, o);
  });
  op("matmul", [](Rng& rng, const GradcheckOptions& o) {
    auto a = leaf(Shape{2, 2, 3, 4}, rng), b = leaf(Shape{2, 2, 4, 5}, rng);
    return projected([&] { return matmul(a, transpose_last(transpose_last(b))); }, {{"a", a}, {"b", b}}, rng, o);
  });
  op("structural", [](Rng& rng, const GradcheckOptions& o) {
    auto a = leaf(Shape{1, 2, 4, 5}, rng), b = leaf(Shape{1, 3, 4, 5}, rng);
    return projected(
        [&] {
          auto c = slice_channels(concat_channels<D>({a, b}), 1, 4);
          return permute(crop(pad_reflect(c, 1, 2, 2, 1), 1, 0, 5, 6), {0, 2, 3, 1});
        },
        {{"a", a}, {"b", b}}, rng, o);
  });
  op("haar_dwt", [](Rng& rng, const GradcheckOptions& o) {
    auto x = leaf(Shape{1, 2, 4, 6}, rng);
    return projected([&] { return haar_dwt2_packed(x); }, {{"x", x}}, rng, o);
  });
  op("cross_entropy", [](Rng& rng, const GradcheckOptions& o) {
    auto x = leaf(Shape{2, 4, 3, 3}, rng, -3, 3);
    const LabelMap labels = random_labels(2, 3, 3, 4, rng);
    return gradcheck([&] { return cross_entropy(x, labels); }, {{"logits", x}}, o);
  });
  op("dice", [](Rng& rng, const GradcheckOptions& o) {
    auto x = leaf(Shape{2, 4, 3, 3}, rng, -3, 3);
    const LabelMap labels = random_labels(2, 3, 3, 4, rng);
    return gradcheck([&] { return dice_loss(softmax_channels(x), labels); }, {{"logits", x}}, o);
  });
  op("total_loss", [](Rng& rng, const GradcheckOptions& o) {
    auto x = leaf(Shape{1, 6, 4, 4}, rng, -3, 3);
    const LabelMap labels = random_labels(1, 4, 4, 6, rng);
    return gradcheck([&] { return total_loss(x, labels).total; }, {{"logits", x}}, o);
  });

  auto branch = [&](std::string name, auto fn) {
    cases.push_back({std::move(name), "branch", {}, [fn](std::uint64_t seed, const GradcheckOptions& o) {
                       Rng rng(seed);
                       return fn(rng, o);
                     }});
  };
  branch("wtfd", [](Rng& rng, const GradcheckOptions& o) {
    Registry<D> reg;
    Wtfd<D> block(reg, "wtfd", 3, 4, true, true, rng);
    auto x = leaf(Shape{1, 3, 6, 6}, rng);
    Inputs in{{"x", x}};
    add_params(in, reg);
    return projected(
        [&] {
          const auto out = block(x, Mode::eval);
          return concat_channels<D>({*out.low, *out.high});
        },
        in, rng, o);
  });
  branch("global", [](Rng& rng, const GradcheckOptions& o) {
    Registry<D> reg;
    GlobalBranchOptions g;
    g.in_channels = 2;
    g.width = 4;
    g.out_channels = 2;
    g.window_size = 2;
    g.heads = 2;
    g.relative_position_bias = true;
    GlobalBranch<D> b(reg, "global", g, rng);
    auto x = leaf(Shape{1, 2, 8, 8}, rng);
    Inputs in{{"x", x}};
    add_params(in, reg);
    return projected([&] { return b(x, Mode::eval); }, in, rng, o);
  });
  branch("local", [](Rng& rng, const GradcheckOptions& o) {
    Registry<D> reg;
    LocalBranch<D> b(reg, "local", LocalBranchOptions{3, 4, 4}, rng);
    auto x = leaf(Shape{1, 3, 8, 8}, rng);
    Inputs in{{"x", x}};
    add_params(in, reg);
    return projected([&] { return b(x, Mode::eval); }, in, rng, o);
  });
  branch("mdaf", [](Rng& rng, const GradcheckOptions& o) {
    Registry<D> reg;
    Mdaf<D> m(reg, "mdaf", 4, 0, rng);
    auto fs = leaf(Shape{1, 4, 4, 4}, rng), ff = leaf(Shape{1, 4, 4, 4}, rng);
    Inputs in{{"F_s", fs}, {"F_f", ff}};
    add_params(in, reg);
    return projected([&] { return m(fs, ff); }, in, rng, o);
  });

  GradcheckOptions net_opt;
  net_opt.tolerance = 1e-3;
  net_opt.denominator_floor = 1e-5;  // biases ahead of batch norm have zero gradient
  net_opt.max_entries_per_input = 6;
  cases.push_back({"network", "network", net_opt, [](std::uint64_t seed, const GradcheckOptions& o) {
                     ModelConfig cfg;
                     cfg.base_channels = 4;
                     cfg.mapped_channels = 4;
                     cfg.window_size = 2;
                     cfg.heads = 2;
                     cfg.relative_position_bias = true;
                     SffNet<D> net(cfg, seed);
                     Rng rng(Rng::mix(seed, 1));
                     auto img = leaf(Shape{1, 3, 32, 32}, rng);
                     Inputs in{{"image", img}};
                     add_params(in, net.registry());
                     GradcheckOptions opt = o;
                     opt.seed = Rng::mix(seed, 2);
                     return projected([&] { return net(img, Mode::train); }, in, rng, opt);
                   }});
  return cases;
}

inline std::vector<std::string> audit_module_names() {
  std::vector<std::string> names;
  for (const auto& c : audit_cases()) names.push_back(c.name);
  return names;
}

/// Runs every case whose name or group equals `filter` ("all" selects everything).
/// Throws ConfigError when nothing matches.
inline std::vector<AuditResult> run_audit(const std::string& filter, std::uint64_t seed, bool inject_fault = false) {
  std::vector<AuditResult> out;
  const auto cases = audit_cases();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    if (filter != "all" && filter != c.name && filter != c.group) continue;
    GradcheckOptions opt = c.options;
    opt.inject_fault = inject_fault;
    const auto t0 = std::chrono::steady_clock::now();
    AuditResult r{c.name, c.group, opt.tolerance, c.run(Rng::mix(seed, i), opt), 0};
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  if (out.empty()) throw ConfigError("gradcheck: unknown module '" + filter + "'");
  return out;
}

}  // namespace sffnet

#endif  // SFFNET_AUDIT_HPP
