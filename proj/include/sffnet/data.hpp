#ifndef SFFNET_DATA_HPP
#define SFFNET_DATA_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sffnet/labels.hpp"
#include "sffnet/rng.hpp"
#include "sffnet/tensor.hpp"

namespace sffnet {

/// One image (1, 3, H, W) in [0, 1] with its class map (1, H, W).
struct Sample {
  Tensor<float> image;
  LabelMap label;
};

/// Images stacked to (N, 3, H, W) with labels (N, H, W).
template <typename T>
struct SampleBatch {
  Tensor<T> images;
  LabelMap labels;
  int ignore_index = kDefaultIgnoreIndex;
};

template <typename T>
SampleBatch<T> make_batch(const std::vector<const Sample*>& samples, int ignore_index = kDefaultIgnoreIndex) {
  if (samples.empty()) throw ShapeError("make_batch: no samples");
  const Shape s0 = samples.front()->image.shape();
  const int n = static_cast<int>(samples.size());
  SampleBatch<T> b{Tensor<T>(Shape{n, s0.c, s0.h, s0.w}), LabelMap(n, s0.h, s0.w), ignore_index};
  for (int i = 0; i < n; ++i) {
    const Sample& s = *samples[i];
    if (s.image.shape() != s0 || s.label.h != s0.h || s.label.w != s0.w) {
      throw ShapeError("make_batch: sample " + std::to_string(i) + " is " + s.image.shape().str() + ", expected " +
                       s0.str());
    }
    const auto src = s.image.data();
    std::transform(src.begin(), src.end(), b.images.raw() + i * s0.numel(), [](float v) { return static_cast<T>(v); });
    std::copy(s.label.data.begin(), s.label.data.end(), b.labels.data.begin() + i * s.label.plane());
  }
  return b;
}

// --- geometric transforms ------------------------------------------------------
// All operate on a (1, C, H, W) image and a (1, H, W) label map together.

inline Sample crop_sample(const Sample& s, int top, int left, int h, int w) {
  const Shape is = s.image.shape();
  Sample out{Tensor<float>(Shape{1, is.c, h, w}), LabelMap(1, h, w)};
  for (int c = 0; c < is.c; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.image(0, c, y, x) = s.image(0, c, top + y, left + x);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.label(0, y, x) = s.label(0, top + y, left + x);
  return out;
}

/// Square crop of side `size` at a uniformly drawn offset.
inline Sample random_crop(const Sample& s, int size, Rng& rng) {
  const Shape is = s.image.shape();
  if (size < 1 || size > is.h || size > is.w) {
    throw ShapeError("random_crop: size " + std::to_string(size) + " does not fit " + is.str());
  }
  const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(is.h - size + 1)));
  const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(is.w - size + 1)));
  return crop_sample(s, top, left, size, size);
}

inline Sample flip_horizontal(const Sample& s) {
  const Shape is = s.image.shape();
  Sample out = s;
  for (int c = 0; c < is.c; ++c)
    for (int y = 0; y < is.h; ++y)
      for (int x = 0; x < is.w; ++x) out.image(0, c, y, x) = s.image(0, c, y, is.w - 1 - x);
  for (int y = 0; y < is.h; ++y)
    for (int x = 0; x < is.w; ++x) out.label(0, y, x) = s.label(0, y, is.w - 1 - x);
  return out;
}

inline Sample flip_vertical(const Sample& s) {
  const Shape is = s.image.shape();
  Sample out = s;
  for (int c = 0; c < is.c; ++c)
    for (int y = 0; y < is.h; ++y)
      for (int x = 0; x < is.w; ++x) out.image(0, c, y, x) = s.image(0, c, is.h - 1 - y, x);
  for (int y = 0; y < is.h; ++y)
    for (int x = 0; x < is.w; ++x) out.label(0, y, x) = s.label(0, is.h - 1 - y, x);
  return out;
}

/// Counter-clockwise rotation by quarter turns.
inline Sample rotate_quarter(const Sample& s, int turns) {
  turns = ((turns % 4) + 4) % 4;
  if (turns == 0) return s;
  const Shape is = s.image.shape();
  const int oh = turns % 2 ? is.w : is.h, ow = turns % 2 ? is.h : is.w;
  Sample out{Tensor<float>(Shape{1, is.c, oh, ow}), LabelMap(1, oh, ow)};
  // Output (y, x) reads input at the position that rotates onto it.
  auto source = [&](int y, int x) -> std::pair<int, int> {
    switch (turns) {
      case 1: return {x, is.w - 1 - y};
      case 2: return {is.h - 1 - y, is.w - 1 - x};
      default: return {is.h - 1 - x, y};
    }
  };
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const auto [sy, sx] = source(y, x);
      for (int c = 0; c < is.c; ++c) out.image(0, c, y, x) = s.image(0, c, sy, sx);
      out.label(0, y, x) = s.label(0, sy, sx);
    }
  return out;
}

/// Resize: bilinear (half-pixel centres) for the image, nearest for labels.
inline Sample rescale(const Sample& s, int oh, int ow) {
  const Shape is = s.image.shape();
  if (oh == is.h && ow == is.w) return s;
  Sample out{Tensor<float>(Shape{1, is.c, oh, ow}), LabelMap(1, oh, ow)};
  auto taps = [](int in, int out_n, int i) {
    const double src = std::max(0.0, (i + 0.5) * in / out_n - 0.5);
    const int i0 = std::min(static_cast<int>(src), in - 1);
    const int i1 = std::min(i0 + 1, in - 1);
    return std::tuple<int, int, double>{i0, i1, src - i0};
  };
  auto nearest = [](int in, int out_n, int i) { return std::min(static_cast<int>((i + 0.5) * in / out_n), in - 1); };
  for (int y = 0; y < oh; ++y) {
    const auto [y0, y1, fy] = taps(is.h, oh, y);
    for (int x = 0; x < ow; ++x) {
      const auto [x0, x1, fx] = taps(is.w, ow, x);
      for (int c = 0; c < is.c; ++c) {
        const double top = (1 - fx) * s.image(0, c, y0, x0) + fx * s.image(0, c, y0, x1);
        const double bot = (1 - fx) * s.image(0, c, y1, x0) + fx * s.image(0, c, y1, x1);
        out.image(0, c, y, x) = static_cast<float>((1 - fy) * top + fy * bot);
      }
      out.label(0, y, x) = s.label(0, nearest(is.h, oh, y), nearest(is.w, ow, x));
    }
  }
  return out;
}

/// Grow to at least (h, w) by padding bottom/right: zeros in the image, the
/// ignore index in the labels.
inline Sample pad_to(const Sample& s, int h, int w, int ignore_index) {
  const Shape is = s.image.shape();
  if (is.h >= h && is.w >= w) return s;
  const int oh = std::max(h, is.h), ow = std::max(w, is.w);
  Sample out{Tensor<float>(Shape{1, is.c, oh, ow}), LabelMap(1, oh, ow, ignore_index)};
  for (int c = 0; c < is.c; ++c)
    for (int y = 0; y < is.h; ++y)
      for (int x = 0; x < is.w; ++x) out.image(0, c, y, x) = s.image(0, c, y, x);
  for (int y = 0; y < is.h; ++y)
    for (int x = 0; x < is.w; ++x) out.label(0, y, x) = s.label(0, y, x);
  return out;
}

struct AugmentSpec {
  std::vector<double> scales{0.5, 0.75, 1.0, 1.25, 1.5};
  double hflip = 0.5;
  double vflip = 0.5;
  std::vector<int> rotations{0, 1, 2, 3};  // quarter turns to choose from
  int crop = 0;                            // 0 keeps the scaled extent (the trainer substitutes the tile size)
  std::uint64_t seed = 0;
  int ignore_index = kDefaultIgnoreIndex;

  /// Spec that leaves samples untouched.
  static AugmentSpec identity() {
    AugmentSpec a;
    a.scales = {1.0};
    a.hflip = a.vflip = 0;
    a.rotations = {0};
    return a;
  }
};

/// Scale, flips, right-angle rotation, then crop (padding first if the scaled
/// sample is smaller than the crop). Draws come only from `rng`.
inline Sample augment(const Sample& s, const AugmentSpec& spec, Rng& rng) {
  if (spec.scales.empty() || spec.rotations.empty()) throw ConfigError("augment: empty scale or rotation set");
  const double scale = spec.scales[rng.below(spec.scales.size())];
  const bool hf = rng.bernoulli(spec.hflip);
  const bool vf = rng.bernoulli(spec.vflip);
  const int turns = spec.rotations[rng.below(spec.rotations.size())];
  const Shape is = s.image.shape();
  Sample out = rescale(s, std::max(1, static_cast<int>(std::lround(is.h * scale))),
                       std::max(1, static_cast<int>(std::lround(is.w * scale))));
  if (hf) out = flip_horizontal(out);
  if (vf) out = flip_vertical(out);
  out = rotate_quarter(out, turns);
  if (spec.crop > 0) out = random_crop(pad_to(out, spec.crop, spec.crop, spec.ignore_index), spec.crop, rng);
  return out;
}

/// Augments sample i of a list with the stream derived from (spec.seed, stream, i).
inline std::vector<Sample> augment_all(const std::vector<Sample>& samples, const AugmentSpec& spec,
                                       std::uint64_t stream = 0) {
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Rng rng(Rng::mix(Rng::mix(spec.seed, stream), i));
    out.push_back(augment(samples[i], spec, rng));
  }
  return out;
}

// --- synthetic corpus -------------------------------------------------------------

/// Class ids follow the six-class aerial convention.
enum SyntheticClass : int { kImpervious = 0, kBuilding, kLowVegetation, kTree, kCar, kClutter };

inline const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names{"impervious", "building", "low_vegetation", "tree", "car", "clutter"};
  return names;
}

struct SyntheticSpec {
  int height = 64;
  int width = 64;
  int num_classes = 6;  // class 0 is the background; at most 6
  /// Target pixel fraction per class at density 1; entry 0 (background) takes the remainder.
  std::vector<double> class_fractions{0.0, 0.22, 0.16, 0.16, 0.04, 0.06};
  double density = 1.0;           // scales every foreground target
  double shadow_strength = 0.35;  // multiplicative darkening inside shadow bands
  double texture = 0.06;          // amplitude of additive texture noise
  bool shadow_ignore = false;     // mark shadowed pixels with the ignore index
  int ignore_index = kDefaultIgnoreIndex;
  std::uint64_t seed = 0;

  void validate() const {
    if (height < 4 || width < 4) throw ConfigError("synthetic: canvas must be at least 4x4");
    if (num_classes < 2 || num_classes > 6) throw ConfigError("synthetic: num_classes must be in [2, 6]");
    if (static_cast<int>(class_fractions.size()) < num_classes) {
      throw ConfigError("synthetic: need a class fraction per class");
    }
    double fg = 0;
    for (int k = 1; k < num_classes; ++k) fg += class_fractions[k];
    if (density < 0 || fg * density > 0.95) throw ConfigError("synthetic: foreground fraction must be in [0, 0.95]");
  }

  /// Expected pixel fraction of class k.
  double target_fraction(int k) const {
    if (k > 0) return class_fractions[k] * density;
    double fg = 0;
    for (int j = 1; j < num_classes; ++j) fg += class_fractions[j] * density;
    return 1.0 - fg;
  }
};

namespace detail {

// Base colour and texture gain per class.
inline constexpr std::array<std::array<float, 3>, 6> kClassColor{{
    {0.62f, 0.62f, 0.60f},  // impervious: grey asphalt
    {0.72f, 0.38f, 0.30f},  // building: red-brown roofs
    {0.55f, 0.75f, 0.35f},  // low vegetation: light green
    {0.14f, 0.38f, 0.16f},  // tree: dark green
    {0.20f, 0.35f, 0.85f},  // car: saturated blue
    {0.85f, 0.75f, 0.25f},  // clutter: ochre
}};
inline constexpr std::array<float, 6> kClassTexture{0.5f, 0.4f, 0.8f, 1.6f, 0.3f, 1.0f};

struct Canvas {
  int h, w;
  LabelMap mask;
  std::vector<std::size_t> count;
};

// Paints class k on background pixels inside the predicate; stops at `budget` pixels.
template <typename Inside>
std::size_t paint(Canvas& cv, int k, int y0, int y1, int x0, int x1, std::size_t budget, Inside inside) {
  std::size_t painted = 0;
  for (int y = std::max(0, y0); y <= std::min(cv.h - 1, y1) && painted < budget; ++y)
    for (int x = std::max(0, x0); x <= std::min(cv.w - 1, x1) && painted < budget; ++x) {
      if (cv.mask(0, y, x) != kImpervious || !inside(y, x)) continue;
      cv.mask(0, y, x) = k;
      ++painted;
    }
  cv.count[k] += painted;
  cv.count[kImpervious] -= painted;
  return painted;
}

// One class-typical shape with area around `area` pixels.
inline std::size_t paint_shape(Canvas& cv, int k, double area, std::size_t budget, Rng& rng) {
  const int cy = rng.range(0, cv.h - 1), cx = rng.range(0, cv.w - 1);
  switch (k) {
    case kBuilding: {  // axis-aligned rectangle, aspect in [0.5, 2]
      const double aspect = rng.uniform(0.5, 2.0);
      const int hh = std::max(1, static_cast<int>(std::sqrt(area * aspect) / 2));
      const int hw = std::max(1, static_cast<int>(std::sqrt(area / aspect) / 2));
      return paint(cv, k, cy - hh, cy + hh, cx - hw, cx + hw, budget, [](int, int) { return true; });
    }
    case kTree: {  // disc
      const double r = std::max(1.0, std::sqrt(area / M_PI));
      const int ri = static_cast<int>(std::ceil(r));
      return paint(cv, k, cy - ri, cy + ri, cx - ri, cx + ri, budget,
                   [=](int y, int x) { return (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r; });
    }
    case kCar: {  // small rectangle, either orientation
      const bool tall = rng.bernoulli(0.5);
      const int len = std::max(2, static_cast<int>(std::sqrt(area * 2.2))), wid = std::max(1, len / 2);
      const int hh = (tall ? len : wid) / 2, hw = (tall ? wid : len) / 2;
      return paint(cv, k, cy - hh, cy + hh, cx - hw, cx + hw, budget, [](int, int) { return true; });
    }
    default: {  // low vegetation and clutter: rotated ellipse-ish blob bounded by a convex quadric
      const double a = std::max(1.0, std::sqrt(area / M_PI) * rng.uniform(0.7, 1.4));
      const double b = std::max(1.0, area / (M_PI * a));
      const double th = rng.uniform(0.0, M_PI);
      const double c = std::cos(th), s = std::sin(th);
      const int ri = static_cast<int>(std::ceil(std::max(a, b)));
      return paint(cv, k, cy - ri, cy + ri, cx - ri, cx + ri, budget, [=](int y, int x) {
        const double u = (x - cx) * c + (y - cy) * s, v = -(x - cx) * s + (y - cy) * c;
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
      });
    }
  }
}

}  // namespace detail

/// Procedural aerial-style scene whose mask is the exact painted geometry.
/// Foreground classes are painted smallest target first, never over each other,
/// until each reaches its target pixel count. Shadows are diagonal bands that
/// darken the image; texture is per-pixel noise scaled per class.
inline Sample generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int h = spec.height, w = spec.width;
  const std::size_t total = static_cast<std::size_t>(h) * w;
  detail::Canvas cv{h, w, LabelMap(1, h, w, kImpervious), std::vector<std::size_t>(spec.num_classes, 0)};
  cv.count[kImpervious] = total;

  std::vector<int> order;
  for (int k = 1; k < spec.num_classes; ++k) order.push_back(k);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return spec.class_fractions[a] < spec.class_fractions[b]; });
  for (int k : order) {
    const double frac = spec.target_fraction(k);
    if (frac <= 0) continue;
    const std::size_t target = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frac * total)));
    // Typical single-shape area per class, relative to the canvas.
    const double typical = k == kCar ? 0.012 * total : k == kBuilding ? 0.06 * total : 0.04 * total;
    for (int attempt = 0; attempt < 400 && cv.count[k] < target; ++attempt) {
      const std::size_t remaining = target - cv.count[k];
      const double area = std::max(2.0, std::min(typical, 1.15 * remaining) * rng.uniform(0.6, 1.2));
      detail::paint_shape(cv, k, area, remaining, rng);
    }
  }

  Sample out{Tensor<float>(Shape{1, 3, h, w}), std::move(cv.mask)};
  // Smooth per-class tint variation so instances of a class differ slightly.
  const float tint = static_cast<float>(rng.uniform(-0.04, 0.04));
  const int bands = spec.shadow_strength > 0 ? rng.range(1, 2) : 0;
  std::vector<std::array<double, 3>> shadow(bands);  // offset, width, slope sign
  for (auto& b : shadow) b = {rng.uniform(0, h + w), rng.uniform(0.08, 0.18) * (h + w) / 2, rng.bernoulli(0.5) ? 1.0 : -1.0};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int k = out.label(0, y, x);
      double shade = 1.0;
      for (const auto& b : shadow) {
        const double t = b[2] > 0 ? x + y : x - y + h;
        if (std::abs(t - b[0]) < b[1] / 2) shade = 1.0 - spec.shadow_strength;
      }
      for (int c = 0; c < 3; ++c) {
        const double noise = spec.texture * detail::kClassTexture[k] * rng.uniform(-1.0, 1.0);
        const double v = (detail::kClassColor[k][c] + tint + noise) * shade;
        out.image(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      if (spec.shadow_ignore && shade < 1.0) out.label(0, y, x) = spec.ignore_index;
    }
  return out;
}

/// Sample i of a corpus: the generator seeded from (spec.seed, i).
inline Sample synthetic_sample(SyntheticSpec spec, std::uint64_t index) {
  spec.seed = Rng::mix(spec.seed, index);
  return generate_synthetic(spec);
}

}  // namespace sffnet

#endif  // SFFNET_DATA_HPP
