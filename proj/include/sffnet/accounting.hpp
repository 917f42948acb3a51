#ifndef SFFNET_ACCOUNTING_HPP
#define SFFNET_ACCOUNTING_HPP

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "sffnet/mdaf.hpp"
#include "sffnet/model.hpp"

namespace sffnet {

/// Parameters and multiply-accumulates of one module. MACs count convolutions
/// (Cout*Cin*kh*kw*Hout*Wout) and matrix products (R*S*T) only.
struct ModuleCost {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct ParamFlopReport {
  std::vector<ModuleCost> modules;

  std::uint64_t total_params() const {
    std::uint64_t n = 0;
    for (const auto& m : modules) n += m.params;
    return n;
  }
  std::uint64_t total_macs() const {
    std::uint64_t n = 0;
    for (const auto& m : modules) n += m.macs;
    return n;
  }
  const ModuleCost* find(const std::string& name) const {
    for (const auto& m : modules)
      if (m.name == name) return &m;
    return nullptr;
  }
};

namespace cost {

using u64 = std::uint64_t;

inline int same_out(int in, int stride) { return (in - 1) / stride + 1; }

struct Acc {
  u64 params = 0, macs = 0;

  void conv(u64 cin, u64 cout, u64 kh, u64 kw, bool bias, u64 hout, u64 wout) {
    params += cout * cin * kh * kw + (bias ? cout : 0);
    macs += cout * cin * kh * kw * hout * wout;
  }
  void norm(u64 c) { params += 2 * c; }
  void matmul(u64 batch, u64 r, u64 s, u64 t) { macs += batch * r * s * t; }
  ModuleCost named(std::string n) const { return {std::move(n), params, macs}; }
};

/// Global branch on an (in_channels, h, w) map.
inline ModuleCost global_branch(int in_channels, int width, int out_channels, int ws, int heads, bool rel_bias,
                                int h, int w) {
  Acc a;
  const u64 c = width;
  const int hd = same_out(h, 2), wd = same_out(w, 2);
  a.conv(in_channels, c, 3, 3, true, hd, wd);
  a.conv(c, c, 1, 1, true, hd, wd);   // q
  a.conv(c, c, 1, 1, false, hd, wd);  // k
  a.conv(c, c, 1, 1, true, hd, wd);   // v
  a.conv(c, c, 1, 1, true, hd, wd);   // out
  const int e = std::min({ws, hd, wd});
  const u64 windows = u64((hd + e - 1) / e) * ((wd + e - 1) / e);
  const u64 tokens = u64(e) * e;
  a.matmul(windows * heads, tokens, c / heads, tokens);  // scores
  a.matmul(windows * heads, tokens, tokens, c / heads);  // weighted values
  if (rel_bias) a.params += u64(heads) * (2 * ws - 1) * (2 * ws - 1);
  a.conv(c, c, ws, ws, true, hd, wd);
  a.conv(c, c, 1, ws, true, hd, wd);
  a.conv(c, c, ws, 1, true, hd, wd);
  a.conv(2 * c, out_channels, 1, 1, false, hd, wd);
  a.norm(out_channels);
  return a.named("global");
}

inline ModuleCost local_branch(int in_channels, int width, int out_channels, int h, int w) {
  Acc a;
  const u64 c = width, half = std::max(1, width / 2);
  const int hd = same_out(h, 2), wd = same_out(w, 2);
  a.conv(in_channels, c, 3, 3, true, h, w);
  a.conv(c, c, 3, 3, true, hd, wd);
  a.conv(in_channels, c, 3, 3, false, hd, wd);
  a.norm(c);
  a.conv(c, half, 1, 1, true, hd, wd);
  a.conv(half, c, 3, 3, true, hd, wd);
  a.conv(4 * c, 2 * c, 1, 1, true, hd, wd);
  a.conv(2 * c, c, 3, 3, true, hd, wd);
  a.conv(2 * c, out_channels, 1, 1, false, hd, wd);
  a.norm(out_channels);
  return a.named("local");
}

inline ModuleCost wtfd(int in_channels, int out_channels, bool low, bool high, int h, int w) {
  Acc a;
  const int he = h + h % 2, we = w + w % 2;
  a.conv(in_channels, in_channels, 1, 1, true, he, we);
  if (low) {
    a.conv(in_channels, out_channels, 1, 1, false, he / 2, we / 2);
    a.norm(out_channels);
  }
  if (high) {
    a.conv(3 * u64(in_channels), out_channels, 1, 1, false, he / 2, we / 2);
    a.norm(out_channels);
  }
  return a.named("wtfd");
}

inline ModuleCost mdaf(int c, int h, int w, std::string name) {
  Acc a;
  for (int map = 0; map < 2; ++map) {
    a.norm(c);
    for (int k : kStripScales) {
      a.conv(c, c, 1, k, true, h, w);
      a.conv(c, c, k, 1, true, h, w);
    }
    a.conv(c, c, 1, 1, true, h, w);
    a.conv(c, c, 1, 1, false, h, w);
    a.conv(c, c, 1, 1, true, h, w);
  }
  const u64 tokens = u64(h) * w;
  for (int dir = 0; dir < 2; ++dir) {
    a.matmul(1, tokens, c, tokens);
    a.matmul(1, tokens, tokens, c);
    a.conv(c, c / 2, 1, 1, true, h, w);
  }
  return a.named(std::move(name));
}

}  // namespace cost

/// Analytic parameter and MAC counts of SffNet for one image of size (h, w).
inline ParamFlopReport count_params_flops(const ModelConfig& cfg, int h, int w) {
  using cost::Acc;
  using cost::u64;
  cfg.validate();
  ParamFlopReport r;
  const int c = cfg.base_channels, cm = cfg.mapped_channels, c3 = 3 * c;
  const int h1 = cost::same_out(h, 2), w1 = cost::same_out(w, 2);  // x1
  {
    Acc a;
    a.conv(cfg.in_channels, c, 3, 3, false, h1, w1);
    a.norm(c);
    a.conv(c, c, 3, 3, false, h1, w1);
    a.norm(c);
    int hh = h1, ww = w1;
    for (int i = 0; i < 3; ++i) {
      const int cin = c << i;
      hh = cost::same_out(hh, 2);
      ww = cost::same_out(ww, 2);
      a.conv(cin, 2 * cin, 3, 3, false, hh, ww);
      a.norm(2 * cin);
      a.conv(2 * cin, 2 * cin, 3, 3, false, hh, ww);
      a.norm(2 * cin);
    }
    r.modules.push_back(a.named("backbone"));
  }
  const int hx = cost::same_out(h1, 2), wx = cost::same_out(w1, 2);  // X'
  {
    Acc a;
    for (int i = 0; i < 3; ++i) a.conv(c << (i + 1), c, 1, 1, true, hx, wx);
    r.modules.push_back(a.named("stage1"));
  }
  if (cfg.use_global) {
    r.modules.push_back(
        cost::global_branch(c3, c, cm, cfg.window_size, cfg.heads, cfg.relative_position_bias, hx, wx));
  }
  if (cfg.use_local) r.modules.push_back(cost::local_branch(c3, c, cm, hx, wx));
  if (cfg.use_wtfd_low || cfg.use_wtfd_high) {
    r.modules.push_back(cost::wtfd(c3, cm, cfg.use_wtfd_low, cfg.use_wtfd_high, hx, wx));
  }
  const int h2 = cost::same_out(hx, 2), w2 = cost::same_out(wx, 2);  // stage-2 outputs
  const bool standard = cfg.pairing == Pairing::standard;
  const bool freq[2] = {standard ? cfg.use_wtfd_low : cfg.use_wtfd_high, standard ? cfg.use_wtfd_high : cfg.use_wtfd_low};
  const bool spatial[2] = {cfg.use_global, cfg.use_local};
  const char* names[2] = {"fuse_g", "fuse_m"};
  int pairs = 0;
  for (int p = 0; p < 2; ++p) {
    if (!spatial[p] && !freq[p]) continue;
    ++pairs;
    if (spatial[p] && freq[p] && cfg.fusion == FusionMode::mdaf) {
      r.modules.push_back(cost::mdaf(cm, h2, w2, names[p]));
      continue;
    }
    Acc a;
    if (spatial[p] && freq[p]) {
      if (cfg.fusion == FusionMode::concat) a.conv(2 * cm, cm, 1, 1, true, h2, w2);
    } else {
      a.conv(cm, cm, 1, 1, true, h2, w2);
    }
    r.modules.push_back(a.named(names[p]));
  }
  {
    Acc a;
    a.conv(c3, c, 1, 1, true, hx, wx);
    a.conv(u64(pairs) * cm + 2 * c, c, 1, 1, true, h1, w1);
    a.conv(c, c, 3, 3, false, h1, w1);
    a.norm(c);
    a.conv(c, cfg.num_classes, 1, 1, true, h1, w1);
    r.modules.push_back(a.named("head"));
  }
  return r;
}

}  // namespace sffnet

#endif  // SFFNET_ACCOUNTING_HPP
