#ifndef SFFNET_LABELS_HPP
#define SFFNET_LABELS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "sffnet/tensor.hpp"

namespace sffnet {

inline constexpr int kDefaultIgnoreIndex = 255;

/// Integer class map (N, H, W), row-major with W fastest.
struct LabelMap {
  int n = 0, h = 0, w = 0;
  std::vector<std::int32_t> data;

  LabelMap() = default;
  LabelMap(int n_, int h_, int w_, std::int32_t fill = 0)
      : n(n_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * h_ * w_, fill) {
    if (n_ <= 0 || h_ <= 0 || w_ <= 0) {
      throw ShapeError("LabelMap: extents must be positive, got (" + std::to_string(n_) + "," + std::to_string(h_) +
                       "," + std::to_string(w_) + ")");
    }
  }

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::int32_t& operator()(int b, int y, int x) { return data[(static_cast<std::size_t>(b) * h + y) * w + x]; }
  std::int32_t operator()(int b, int y, int x) const { return data[(static_cast<std::size_t>(b) * h + y) * w + x]; }
  bool operator==(const LabelMap&) const = default;

  /// Throws unless every entry is in [0, k) or equals `ignore_index`.
  void validate(int k, int ignore_index) const {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const int v = data[i];
      if (v != ignore_index && (v < 0 || v >= k)) {
        throw ConfigError("label " + std::to_string(v) + " at flat index " + std::to_string(i) +
                          " is outside [0," + std::to_string(k) + ") and is not the ignore index " +
                          std::to_string(ignore_index));
      }
    }
  }
};

}  // namespace sffnet

#endif  // SFFNET_LABELS_HPP
