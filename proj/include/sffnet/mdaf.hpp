#ifndef SFFNET_MDAF_HPP
#define SFFNET_MDAF_HPP

#include <array>
#include <cmath>
#include <string>

#include "sffnet/layers.hpp"
#include "sffnet/linalg.hpp"

namespace sffnet {

inline constexpr std::array<int, 3> kStripScales{7, 11, 21};
inline constexpr int kMaxAttentionTokens = 4096;

/// Query/key/value maps, each (N, C, H, W); tokens are the H*W positions.
template <typename T>
struct QkvTriple {
  Var<T> q, k, v;
};

/// Orthogonal strip pair: 1xk and kx1 convolutions applied side by side and summed,
/// so a single position reaches a cross of arm length (k-1)/2. Extent-preserving.
template <typename T>
class StripPair {
 public:
  StripPair() = default;
  StripPair(Registry<T>& reg, const std::string& name, int c, int k, Rng& rng)
      : row(reg, name + ".row", c, c, 1, k, {1, Padding2d::same(1, k)}, true, rng),
        col(reg, name + ".col", c, c, k, 1, {1, Padding2d::same(k, 1)}, true, rng) {}

  Var<T> operator()(const Var<T>& x) const { return add(row(x), col(x)); }

  Conv2d<T> row, col;
};

/// Multiscale mapping: one shared layer norm, three strip pairs (7, 11, 21) summed, then
/// separate 1x1 projections to q, k and v.
template <typename T>
class MultiscaleMap {
 public:
  MultiscaleMap() = default;
  MultiscaleMap(Registry<T>& reg, const std::string& name, int c, Rng& rng)
      : ln(reg, name + ".ln", c) {
    for (std::size_t i = 0; i < kStripScales.size(); ++i) {
      strips[i] = StripPair<T>(reg, name + ".oc" + std::to_string(kStripScales[i]), c, kStripScales[i], rng);
    }
    q_proj = Conv2d<T>(reg, name + ".q_proj", c, c, 1, 1, {}, true, rng);
    k_proj = Conv2d<T>(reg, name + ".k_proj", c, c, 1, 1, {}, false, rng);  // key bias cancels in softmax
    v_proj = Conv2d<T>(reg, name + ".v_proj", c, c, 1, 1, {}, true, rng);
  }

  Var<T> mixed(const Var<T>& x) const {
    const Var<T> n = ln(x);
    return add(add(strips[0](n), strips[1](n)), strips[2](n));
  }

  QkvTriple<T> operator()(const Var<T>& x) const {
    const Var<T> m = mixed(x);
    return {q_proj(m), k_proj(m), v_proj(m)};
  }

  LayerNorm2d<T> ln;
  std::array<StripPair<T>, 3> strips;
  Conv2d<T> q_proj, k_proj, v_proj;
};

/// (N, C, H, W) -> (N, 1, H*W, C)
template <typename T>
Var<T> to_tokens(const Var<T>& x) {
  const Shape s = x.shape();
  return transpose_last(reshape(x, Shape{s.n, 1, s.c, s.h * s.w}));
}

/// (N, 1, H*W, C) -> (N, C, H, W)
template <typename T>
Var<T> from_tokens(const Var<T>& t, int h, int w) {
  const Shape s = t.shape();
  return reshape(transpose_last(t), Shape{s.n, s.w, h, w});
}

/// Default softmax divisor: sqrt(C * H * W) of the attended maps.
inline double mdaf_default_temperature(const Shape& s) {
  return std::sqrt(static_cast<double>(s.c) * s.h * s.w);
}

/// Cross attention before the output projection:
/// softmax(Q_other K_mine^T / temperature) V_mine, returned as (N, C, H, W).
template <typename T>
Var<T> cross_attention(const QkvTriple<T>& mine, const QkvTriple<T>& other, double temperature,
                       Tensor<T>* weights_out = nullptr) {
  const Shape s = mine.k.shape();
  if (other.q.shape() != s || mine.v.shape() != s) {
    throw ShapeError("daf: token layouts differ: " + other.q.shape().str() + " vs " + s.str());
  }
  if (s.h * s.w > kMaxAttentionTokens) {
    throw ShapeError("daf: " + std::to_string(s.h * s.w) + " tokens exceeds the dense-attention limit of " +
                     std::to_string(kMaxAttentionTokens));
  }
  const Var<T> q = to_tokens(other.q);
  const Var<T> k = to_tokens(mine.k);
  const Var<T> v = to_tokens(mine.v);
  const Var<T> attn = softmax_rows(scale(matmul(q, transpose_last(k)), static_cast<T>(1.0 / temperature)));
  if (weights_out) *weights_out = attn.value();
  return from_tokens(matmul(attn, v), s.h, s.w);
}

/// One direction of the dual alignment: attention of `other`'s queries over
/// `mine`'s keys/values, then a 1x1 projection to C/2 channels.
template <typename T>
Var<T> daf_attend(const QkvTriple<T>& mine, const QkvTriple<T>& other, double temperature,
                  const Conv2d<T>& out_proj, Tensor<T>* weights_out = nullptr) {
  return out_proj(cross_attention(mine, other, temperature, weights_out));
}

/// Spatial/frequency alignment block. Output is Cat(F_1, F_2) with
/// F_1 = proj1(Attn(Q_f, K_s, V_s)) and F_2 = proj2(Attn(Q_s, K_f, V_f)).
template <typename T>
class Mdaf {
 public:
  struct Detail {
    Var<T> f1, f2, out;
    Tensor<T> attn1, attn2;
  };

  Mdaf() = default;
  /// temperature <= 0 selects sqrt(C*H*W) at run time.
  Mdaf(Registry<T>& reg, const std::string& name, int c, double temperature, Rng& rng)
      : temperature_(temperature) {
    if (c < 2 || c % 2 != 0) throw ConfigError("Mdaf: channel count must be even, got " + std::to_string(c));
    spatial_map = MultiscaleMap<T>(reg, name + ".spatial_map", c, rng);
    frequency_map = MultiscaleMap<T>(reg, name + ".frequency_map", c, rng);
    out1 = Conv2d<T>(reg, name + ".out1", c, c / 2, 1, 1, {}, true, rng);
    out2 = Conv2d<T>(reg, name + ".out2", c, c / 2, 1, 1, {}, true, rng);
  }

  double temperature_for(const Shape& s) const {
    return temperature_ > 0 ? temperature_ : mdaf_default_temperature(s);
  }

  Detail forward_detail(const Var<T>& spatial, const Var<T>& frequency) const {
    if (spatial.shape() != frequency.shape()) {
      throw ShapeError("Mdaf: spatial " + spatial.shape().str() + " and frequency " +
                       frequency.shape().str() + " features differ");
    }
    const double tau = temperature_for(spatial.shape());
    const QkvTriple<T> s = spatial_map(spatial);
    const QkvTriple<T> f = frequency_map(frequency);
    Detail d;
    d.f1 = daf_attend(s, f, tau, out1, &d.attn1);
    d.f2 = daf_attend(f, s, tau, out2, &d.attn2);
    d.out = concat_channels<T>({d.f1, d.f2});
    return d;
  }

  Var<T> operator()(const Var<T>& spatial, const Var<T>& frequency) const {
    return forward_detail(spatial, frequency).out;
  }

  MultiscaleMap<T> spatial_map, frequency_map;
  Conv2d<T> out1, out2;

 private:
  double temperature_ = 0;
};

}  // namespace sffnet

#endif  // SFFNET_MDAF_HPP
