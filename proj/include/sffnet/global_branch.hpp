#ifndef SFFNET_GLOBAL_BRANCH_HPP
#define SFFNET_GLOBAL_BRANCH_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sffnet/layers.hpp"
#include "sffnet/linalg.hpp"

namespace sffnet {

/// Feature map tiled into non-overlapping ws x ws windows.
/// tokens: (N * windows, heads, ws*ws, C/heads); window b = (n * rows + wy) * cols + wx,
/// token t = ty * ws + tx, embedding e of head hd is channel hd * (C/heads) + e.
template <typename T>
struct WindowGrid {
  Var<T> tokens;
  int batch = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  int ws = 0;
  int heads = 1;

  int rows() const { return height / ws; }
  int cols() const { return width / ws; }
  int windows_per_image() const { return rows() * cols(); }
};

namespace detail {

inline std::shared_ptr<std::vector<std::size_t>> window_index(const Shape& s, int ws, int heads) {
  const int rows = s.h / ws, cols = s.w / ws, dh = s.c / heads, tokens = ws * ws;
  auto index = std::make_shared<std::vector<std::size_t>>(s.numel());
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n)
    for (int wy = 0; wy < rows; ++wy)
      for (int wx = 0; wx < cols; ++wx)
        for (int hd = 0; hd < heads; ++hd)
          for (int t = 0; t < tokens; ++t)
            for (int e = 0; e < dh; ++e) {
              const int y = wy * ws + t / ws, x = wx * ws + t % ws, c = hd * dh + e;
              (*index)[i++] = ((static_cast<std::size_t>(n) * s.c + c) * s.h + y) * s.w + x;
            }
  return index;
}

}  // namespace detail

template <typename T>
WindowGrid<T> window_partition(const Var<T>& x, int ws, int heads = 1) {
  const Shape s = x.shape();
  if (ws < 1 || s.h % ws != 0 || s.w % ws != 0) {
    throw ShapeError("window_partition: window " + std::to_string(ws) + " does not tile " + s.str());
  }
  if (heads < 1 || s.c % heads != 0) throw ConfigError("window_partition: heads must divide channels");
  auto index = detail::window_index(s, ws, heads);
  const Shape o{s.n * (s.h / ws) * (s.w / ws), heads, ws * ws, s.c / heads};
  return WindowGrid<T>{gather_flat(x, std::move(index), o, "window_partition"), s.n, s.c, s.h, s.w, ws,
                       heads};
}

template <typename T>
Var<T> window_unpartition(const WindowGrid<T>& g) {
  const Shape s{g.batch, g.channels, g.height, g.width};
  const auto forward = detail::window_index(s, g.ws, g.heads);
  auto inverse = std::make_shared<std::vector<std::size_t>>(forward->size());
  for (std::size_t i = 0; i < forward->size(); ++i) (*inverse)[(*forward)[i]] = i;
  return gather_flat(g.tokens, std::move(inverse), s, "window_unpartition");
}

/// Grid with the same tiling and different token values.
template <typename T>
WindowGrid<T> with_tokens(const WindowGrid<T>& like, Var<T> tokens) {
  WindowGrid<T> g = like;
  g.tokens = std::move(tokens);
  return g;
}

/// Scaled dot-product attention inside each window; no cross-window terms.
/// `bias`, when given, is (1, heads, ws*ws, ws*ws) and is added to every window's scores.
/// `weights_out` receives the attention probabilities (windows, heads, T, T).
template <typename T>
WindowGrid<T> window_attention(const WindowGrid<T>& q, const WindowGrid<T>& k, const WindowGrid<T>& v,
                               const std::optional<Var<T>>& bias = std::nullopt,
                               Tensor<T>* weights_out = nullptr) {
  const int dh = q.channels / q.heads;
  Var<T> scores = scale(matmul(q.tokens, transpose_last(k.tokens)), T(1) / std::sqrt(static_cast<T>(dh)));
  if (bias) scores = add_batch_broadcast(scores, *bias);
  Var<T> attn = softmax_rows(scores);
  if (weights_out) *weights_out = attn.value();
  return with_tokens(q, matmul(attn, v.tokens));
}

/// Relative-position lookup for a ws x ws window against a table built for
/// `table_ws`: entry (hd, i, j) -> hd * (2*table_ws-1)^2 + (dy + table_ws-1)*(2*table_ws-1) + dx + table_ws-1.
inline std::shared_ptr<std::vector<std::size_t>> relative_position_index(int ws, int table_ws, int heads) {
  const int t = ws * ws, span = 2 * table_ws - 1;
  auto index = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(heads) * t * t);
  std::size_t k = 0;
  for (int hd = 0; hd < heads; ++hd)
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < t; ++j) {
        const int dy = i / ws - j / ws + table_ws - 1;
        const int dx = i % ws - j % ws + table_ws - 1;
        (*index)[k++] = static_cast<std::size_t>(hd) * span * span + dy * span + dx;
      }
  return index;
}

struct GlobalBranchOptions {
  int in_channels = 48;
  int width = 16;  // channel width inside the branch
  int out_channels = 16;
  int window_size = 8;
  int heads = 1;
  bool relative_position_bias = false;
};

/// Global mapping branch: stride-2 3x3 conv, window self-attention, then the
/// strip/square convolutions that exchange information across window borders,
/// concatenated with the downsampled input and projected with 1x1 conv + BN.
template <typename T>
class GlobalBranch {
 public:
  GlobalBranch() = default;
  GlobalBranch(Registry<T>& reg, const std::string& name, const GlobalBranchOptions& opt, Rng& rng)
      : opt_(opt) {
    const int c = opt.width, ws = opt.window_size;
    if (ws < 1) throw ConfigError("GlobalBranch: window size must be >= 1");
    if (opt.heads < 1 || c % opt.heads != 0) throw ConfigError("GlobalBranch: heads must divide width");
    down_conv = Conv2d<T>::same(reg, name + ".down_conv", opt.in_channels, c, 3, true, rng, 2);
    q_proj = Conv2d<T>(reg, name + ".wmsa.q_proj", c, c, 1, 1, {}, true, rng);
    k_proj = Conv2d<T>(reg, name + ".wmsa.k_proj", c, c, 1, 1, {}, false, rng);  // key bias cancels in softmax
    v_proj = Conv2d<T>(reg, name + ".wmsa.v_proj", c, c, 1, 1, {}, true, rng);
    out_proj = Conv2d<T>(reg, name + ".wmsa.out_proj", c, c, 1, 1, {}, true, rng);
    if (opt.relative_position_bias) {
      const int span = 2 * ws - 1;
      rel_bias_table = reg.add_parameter(name + ".wmsa.relative_bias",
                                         uniform_init<T>(Shape{1, opt.heads, span, span}, 0.02, rng));
    }
    square = Conv2d<T>(reg, name + ".strip.square", c, c, ws, ws, {1, Padding2d::same(ws, ws)}, true, rng);
    row_strip = Conv2d<T>(reg, name + ".strip.row", c, c, 1, ws, {1, Padding2d::same(1, ws)}, true, rng);
    col_strip = Conv2d<T>(reg, name + ".strip.col", c, c, ws, 1, {1, Padding2d::same(ws, 1)}, true, rng);
    fuse_proj = Conv2d<T>(reg, name + ".fuse_proj", 2 * c, opt.out_channels, 1, 1, {}, false, rng);
    bn = BatchNorm2d<T>(reg, name + ".bn", opt.out_channels);
  }

  /// Window size actually used for a map of the given extents (clamped to the map).
  int effective_window(int h, int w) const { return std::min({opt_.window_size, h, w}); }

  /// Projections, window partition, attention and output projection on a map.
  /// Extents not divisible by the window are reflect-padded and cropped back.
  Var<T> wmsa(const Var<T>& x, Tensor<T>* weights_out = nullptr) const {
    const Shape s = x.shape();
    const int ws = effective_window(s.h, s.w);
    const int ph = (ws - s.h % ws) % ws, pw = (ws - s.w % ws) % ws;
    auto tile = [&](const Conv2d<T>& proj) {
      return window_partition(pad_reflect(proj(x), 0, ph, 0, pw), ws, opt_.heads);
    };
    const WindowGrid<T> q = tile(q_proj), k = tile(k_proj), v = tile(v_proj);
    std::optional<Var<T>> bias;
    if (rel_bias_table) {
      const Shape bs{1, opt_.heads, ws * ws, ws * ws};
      bias = gather_flat(*rel_bias_table, relative_position_index(ws, opt_.window_size, opt_.heads), bs,
                         "relative_bias");
    }
    Var<T> y = window_unpartition(window_attention(q, k, v, bias, weights_out));
    if (ph || pw) y = crop(y, 0, 0, s.h, s.w);
    return out_proj(y);
  }

  /// square(F_p) + row_strip(F_p) + col_strip(F_p)
  Var<T> strip_mix(const Var<T>& fp) const { return add(add(square(fp), row_strip(fp)), col_strip(fp)); }

  Var<T> operator()(const Var<T>& x, Mode mode) const {
    const Var<T> d = down_conv(x);
    const Var<T> fp = wmsa(d);
    return bn(fuse_proj(concat_channels<T>({d, strip_mix(fp)})), mode);
  }

  const GlobalBranchOptions& options() const { return opt_; }

  Conv2d<T> down_conv, q_proj, k_proj, v_proj, out_proj, square, row_strip, col_strip, fuse_proj;
  std::optional<Var<T>> rel_bias_table;
  BatchNorm2d<T> bn;

 private:
  GlobalBranchOptions opt_;
};

}  // namespace sffnet

#endif  // SFFNET_GLOBAL_BRANCH_HPP
