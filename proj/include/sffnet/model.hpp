#ifndef SFFNET_MODEL_HPP
#define SFFNET_MODEL_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sffnet/global_branch.hpp"
#include "sffnet/local_branch.hpp"
#include "sffnet/mdaf.hpp"
#include "sffnet/resample.hpp"
#include "sffnet/wtfd.hpp"

namespace sffnet {

/// How a spatial feature and its frequency partner are combined in stage 2.
enum class FusionMode { mdaf, concat, add };

/// Which frequency band each spatial branch is aligned with.
///   standard: global <-> low,  local <-> high
///   crossed: global <-> high, local <-> low
enum class Pairing { standard, crossed };

inline const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::mdaf: return "mdaf";
    case FusionMode::concat: return "concat";
    case FusionMode::add: return "add";
  }
  return "?";
}

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "mdaf") return FusionMode::mdaf;
  if (s == "concat") return FusionMode::concat;
  if (s == "add") return FusionMode::add;
  throw ConfigError("fusion mode must be mdaf, concat or add, got '" + s + "'");
}

inline const char* to_string(Pairing p) { return p == Pairing::standard ? "standard" : "crossed"; }

inline Pairing parse_pairing(const std::string& s) {
  if (s == "standard") return Pairing::standard;
  if (s == "crossed") return Pairing::crossed;
  throw ConfigError("pairing must be standard or crossed, got '" + s + "'");
}

struct ModelConfig {
  int in_channels = 3;
  int base_channels = 16;    // C
  int mapped_channels = 16;  // C_m, width of every stage-2 branch output
  int window_size = 8;
  int num_classes = 6;
  int heads = 1;
  bool relative_position_bias = false;
  bool use_global = true;
  bool use_local = true;
  bool use_wtfd_low = true;
  bool use_wtfd_high = true;
  FusionMode fusion = FusionMode::mdaf;
  Pairing pairing = Pairing::standard;
  double mdaf_temperature = 0;  // <= 0: sqrt(C_m * H * W)

  void validate() const {
    auto need = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    need(in_channels >= 1, "in_channels must be >= 1");
    need(base_channels >= 1, "base_channels must be >= 1");
    need(mapped_channels >= 1, "mapped_channels must be >= 1");
    need(num_classes >= 2, "num_classes must be >= 2");
    need(window_size >= 1, "window_size must be >= 1");
    need(heads >= 1 && base_channels % heads == 0, "heads must divide base_channels");
    need(fusion != FusionMode::mdaf || mapped_channels % 2 == 0, "mdaf fusion needs an even mapped_channels");
    need(use_global || use_local || use_wtfd_low || use_wtfd_high, "at least one stage-2 branch must be enabled");
  }
};

/// The seven component-removal variants, in table order.
inline const std::vector<std::string>& ablation_variant_names() {
  static const std::vector<std::string> names{"full",          "w/o Global",       "w/o Local",      "w/o WTFD-L",
                                              "w/o WTFD-H",    "w/o MDAF + Cat",   "w/o MDAF + Add"};
  return names;
}

inline ModelConfig with_ablation(ModelConfig cfg, const std::string& variant) {
  if (variant == "full") {
  } else if (variant == "w/o Global") {
    cfg.use_global = false;
  } else if (variant == "w/o Local") {
    cfg.use_local = false;
  } else if (variant == "w/o WTFD-L") {
    cfg.use_wtfd_low = false;
  } else if (variant == "w/o WTFD-H") {
    cfg.use_wtfd_high = false;
  } else if (variant == "w/o MDAF + Cat") {
    cfg.fusion = FusionMode::concat;
  } else if (variant == "w/o MDAF + Add") {
    cfg.fusion = FusionMode::add;
  } else {
    throw ConfigError("unknown ablation variant '" + variant + "'");
  }
  return cfg;
}

/// Backbone outputs; extents relative to the post-stem map (h/2, w/2).
template <typename T>
struct BackboneFeatures {
  Var<T> x1;  // (C,  H,   W)
  Var<T> x2;  // (2C, H/2, W/2)
  Var<T> x3;  // (4C, H/4, W/4)
  Var<T> x4;  // (8C, H/8, W/8)
};

/// Stage-2 branch outputs. Disabled branches are empty.
template <typename T>
struct BranchFeatures {
  std::optional<Var<T>> global, local, low, high;
};

/// 3x3 conv (no bias) + BN + ReLU.
template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(Registry<T>& reg, const std::string& name, int cin, int cout, int stride, Rng& rng)
      : conv(Conv2d<T>::same(reg, name + ".conv", cin, cout, 3, false, rng, stride)),
        bn(reg, name + ".bn", cout) {}

  Var<T> operator()(const Var<T>& x, Mode mode) const { return relu(bn(conv(x), mode)); }

  Conv2d<T> conv;
  BatchNorm2d<T> bn;
};

/// Plain four-stage conv backbone: stride-2 stem, then three stride-2 stages,
/// giving the (C, 2C, 4C, 8C) ladder at strides 2, 4, 8, 16 of the image.
template <typename T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(Registry<T>& reg, const std::string& name, int in_channels, int c, Rng& rng) {
    stem = ConvBnRelu<T>(reg, name + ".stem", in_channels, c, 2, rng);
    stage1 = ConvBnRelu<T>(reg, name + ".stage1", c, c, 1, rng);
    for (int i = 0; i < 3; ++i) {
      const int cin = c << i;
      const std::string s = name + ".stage" + std::to_string(i + 2);
      down[i] = ConvBnRelu<T>(reg, s + ".down", cin, 2 * cin, 2, rng);
      block[i] = ConvBnRelu<T>(reg, s + ".block", 2 * cin, 2 * cin, 1, rng);
    }
  }

  BackboneFeatures<T> operator()(const Var<T>& img, Mode mode) const {
    BackboneFeatures<T> f;
    f.x1 = stage1(stem(img, mode), mode);
    f.x2 = block[0](down[0](f.x1, mode), mode);
    f.x3 = block[1](down[1](f.x2, mode), mode);
    f.x4 = block[2](down[2](f.x3, mode), mode);
    return f;
  }

  ConvBnRelu<T> stem, stage1;
  std::array<ConvBnRelu<T>, 3> down, block;
};

/// Combines one spatial feature with its frequency partner. With both present it
/// applies the configured fusion; with one present the survivor goes through a
/// 1x1 conv; with neither the slot produces nothing.
template <typename T>
class PairFusion {
 public:
  PairFusion() = default;
  PairFusion(Registry<T>& reg, const std::string& name, bool has_spatial, bool has_frequency,
             const ModelConfig& cfg, Rng& rng)
      : has_spatial_(has_spatial), has_frequency_(has_frequency), mode_(cfg.fusion) {
    const int c = cfg.mapped_channels;
    if (has_spatial && has_frequency) {
      if (mode_ == FusionMode::mdaf) {
        mdaf = Mdaf<T>(reg, name + ".mdaf", c, cfg.mdaf_temperature, rng);
      } else if (mode_ == FusionMode::concat) {
        proj = Conv2d<T>(reg, name + ".cat_proj", 2 * c, c, 1, 1, {}, true, rng);
      }
    } else if (has_spatial || has_frequency) {
      proj = Conv2d<T>(reg, name + ".pass_proj", c, c, 1, 1, {}, true, rng);
    }
  }

  bool active() const { return has_spatial_ || has_frequency_; }

  std::optional<Var<T>> operator()(const std::optional<Var<T>>& s, const std::optional<Var<T>>& f) const {
    if (has_spatial_ && has_frequency_) {
      if (mdaf) return (*mdaf)(*s, *f);
      if (mode_ == FusionMode::concat) return (*proj)(concat_channels<T>({*s, *f}));
      return add(*s, *f);
    }
    if (has_spatial_) return (*proj)(*s);
    if (has_frequency_) return (*proj)(*f);
    return std::nullopt;
  }

  std::optional<Mdaf<T>> mdaf;
  std::optional<Conv2d<T>> proj;

 private:
  bool has_spatial_ = false, has_frequency_ = false;
  FusionMode mode_ = FusionMode::mdaf;
};

/// Two-stage segmentation network.
template <typename T>
class SffNet {
 public:
  explicit SffNet(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg.validate();
    Rng rng(seed);
    const int c = cfg.base_channels, cm = cfg.mapped_channels, c3 = 3 * c;
    backbone = Backbone<T>(reg_, "backbone", cfg.in_channels, c, rng);
    for (int i = 0; i < 3; ++i) {
      fuse1[i] = Conv2d<T>(reg_, "stage1.proj_x" + std::to_string(i + 2), c << (i + 1), c, 1, 1, {}, true, rng);
    }
    if (cfg.use_global) {
      GlobalBranchOptions g;
      g.in_channels = c3;
      g.width = c;
      g.out_channels = cm;
      g.window_size = cfg.window_size;
      g.heads = cfg.heads;
      g.relative_position_bias = cfg.relative_position_bias;
      global = GlobalBranch<T>(reg_, "global", g, rng);
    }
    if (cfg.use_local) local = LocalBranch<T>(reg_, "local", LocalBranchOptions{c3, c, cm}, rng);
    if (cfg.use_wtfd_low || cfg.use_wtfd_high) {
      wtfd = Wtfd<T>(reg_, "wtfd", c3, cm, cfg.use_wtfd_low, cfg.use_wtfd_high, rng);
    }
    const bool standard = cfg.pairing == Pairing::standard;
    const bool freq_g = standard ? cfg.use_wtfd_low : cfg.use_wtfd_high;
    const bool freq_m = standard ? cfg.use_wtfd_high : cfg.use_wtfd_low;
    pair_g = PairFusion<T>(reg_, "fuse_g", cfg.use_global, freq_g, cfg, rng);
    pair_m = PairFusion<T>(reg_, "fuse_m", cfg.use_local, freq_m, cfg, rng);
    const int pairs = int(pair_g.active()) + int(pair_m.active());
    xp_proj = Conv2d<T>(reg_, "head.xp_proj", c3, c, 1, 1, {}, true, rng);
    fuse_out = Conv2d<T>(reg_, "head.fuse", pairs * cm + 2 * c, c, 1, 1, {}, true, rng);
    head = ConvBnRelu<T>(reg_, "head.block", c, c, 1, rng);
    classifier = Conv2d<T>(reg_, "head.classifier", c, cfg.num_classes, 1, 1, {}, true, rng);
  }

  SffNet(const SffNet&) = delete;
  SffNet& operator=(const SffNet&) = delete;
  SffNet(SffNet&&) = default;
  SffNet& operator=(SffNet&&) = default;

  /// X' = Cat(1x1(resize(x2)), 1x1(resize(x3)), 1x1(resize(x4))) at the extent of x2.
  Var<T> stage1_fuse(const BackboneFeatures<T>& f) const {
    const int h = f.x2.shape().h, w = f.x2.shape().w;
    return concat_channels<T>({fuse1[0](interpolate_bilinear(f.x2, h, w)), fuse1[1](interpolate_bilinear(f.x3, h, w)),
                               fuse1[2](interpolate_bilinear(f.x4, h, w))});
  }

  BranchFeatures<T> stage2_map(const Var<T>& xp, Mode mode) const {
    BranchFeatures<T> b;
    if (global) b.global = (*global)(xp, mode);
    if (local) b.local = (*local)(xp, mode);
    if (wtfd) {
      auto out = (*wtfd)(xp, mode);
      b.low = std::move(out.low);
      b.high = std::move(out.high);
    }
    return b;
  }

  /// Pairs the branch outputs (F_g', F_m') per the configured pairing and fusion.
  std::array<std::optional<Var<T>>, 2> stage2_fuse(const BranchFeatures<T>& b) const {
    const bool standard = cfg_.pairing == Pairing::standard;
    return {pair_g(b.global, standard ? b.low : b.high), pair_m(b.local, standard ? b.high : b.low)};
  }

  /// Y = fuse(Cat(resize(F_g'), resize(F_m'), x1, resize(1x1(X')))) followed by the head.
  Var<T> head_forward(const std::array<std::optional<Var<T>>, 2>& fused, const Var<T>& x1, const Var<T>& xp,
                      int out_h, int out_w, Mode mode) const {
    const int h = x1.shape().h, w = x1.shape().w;
    std::vector<Var<T>> parts;
    for (const auto& f : fused)
      if (f) parts.push_back(interpolate_bilinear(*f, h, w));
    parts.push_back(x1);
    parts.push_back(interpolate_bilinear(xp_proj(xp), h, w));
    const Var<T> y = fuse_out(concat_channels<T>(parts));
    return interpolate_bilinear(classifier(head(y, mode)), out_h, out_w);
  }

  /// Logits (N, K, h, w) for images (N, in_channels, h, w) with h, w divisible by 16.
  Var<T> forward(const Var<T>& img, Mode mode) const {
    const Shape s = img.shape();
    if (s.c != cfg_.in_channels) {
      throw ShapeError("SffNet: expected " + std::to_string(cfg_.in_channels) + " input channels, got " + s.str());
    }
    if (s.h % 16 != 0 || s.w % 16 != 0) {
      throw ShapeError("SffNet: input extents must be divisible by 16, got " + s.str());
    }
    const BackboneFeatures<T> f = backbone(img, mode);
    const Var<T> xp = stage1_fuse(f);
    return head_forward(stage2_fuse(stage2_map(xp, mode)), f.x1, xp, s.h, s.w, mode);
  }

  Var<T> operator()(const Var<T>& img, Mode mode) const { return forward(img, mode); }

  const ModelConfig& config() const { return cfg_; }
  Registry<T>& registry() { return reg_; }
  const Registry<T>& registry() const { return reg_; }

  Backbone<T> backbone;
  std::array<Conv2d<T>, 3> fuse1;
  std::optional<GlobalBranch<T>> global;
  std::optional<LocalBranch<T>> local;
  std::optional<Wtfd<T>> wtfd;
  PairFusion<T> pair_g, pair_m;
  Conv2d<T> xp_proj, fuse_out;
  ConvBnRelu<T> head;
  Conv2d<T> classifier;

 private:
  ModelConfig cfg_;
  Registry<T> reg_;
};

}  // namespace sffnet

#endif  // SFFNET_MODEL_HPP
