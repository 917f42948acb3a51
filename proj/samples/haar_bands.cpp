// One-level Haar analysis of two edge cards: horizontal edges land in H, vertical edges in V.

#include <cstdio>

#include "sffnet/wavelet.hpp"

namespace {

double energy(const sffnet::Tensor<double>& t) {
  double e = 0;
  for (double v : t.data()) e += v * v;
  return e;
}

void report(const char* name, const sffnet::Tensor<double>& x) {
  const auto q = sffnet::haar_dwt2(x);
  const double h = energy(q.h), v = energy(q.v), d = energy(q.d), all = h + v + d;
  std::printf("%-22s H %.3f  V %.3f  D %.3f  (share of detail energy)\n", name, h / all, v / all, d / all);
  std::printf("%-22s reconstruction error %.2e\n", "", sffnet::max_abs_diff(sffnet::haar_idwt2(q), x));
}

}  // namespace

int main() {
  sffnet::Tensor<double> rows(sffnet::Shape{1, 1, 16, 16}), cols(sffnet::Shape{1, 1, 16, 16});
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      rows(0, 0, i, j) = i >= 7 ? 1.0 : 0.0;  // edge between rows 6 and 7
      cols(0, 0, i, j) = j >= 9 ? 1.0 : 0.0;  // edge between columns 8 and 9
    }
  report("horizontal edge card", rows);
  report("vertical edge card", cols);
}
