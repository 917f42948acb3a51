#ifndef SFFNET_METRICS_HPP
#define SFFNET_METRICS_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "sffnet/labels.hpp"

namespace sffnet {

/// K x K pixel counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int k, int ignore_index = kDefaultIgnoreIndex)
      : k_(k), ignore_(ignore_index), counts_(static_cast<std::size_t>(k) * k, 0) {
    if (k < 1) throw ConfigError("ConfusionMatrix: class count must be >= 1");
  }

  int classes() const { return k_; }
  int ignore_index() const { return ignore_; }
  std::uint64_t at(int truth, int pred) const { return counts_[static_cast<std::size_t>(truth) * k_ + pred]; }
  std::uint64_t& at(int truth, int pred) { return counts_[static_cast<std::size_t>(truth) * k_ + pred]; }

  /// Adds one (truth, prediction) pair per pixel. Pixels whose truth is the
  /// ignore index are skipped; any other out-of-range id is an error.
  void accumulate(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& truth) {
    if (pred.size() != truth.size()) {
      throw ShapeError("accumulate: " + std::to_string(pred.size()) + " predictions vs " +
                       std::to_string(truth.size()) + " labels");
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const int t = truth[i], p = pred[i];
      if (t == ignore_) continue;
      if (t < 0 || t >= k_ || p < 0 || p >= k_) {
        throw ConfigError("accumulate: class id out of range at pixel " + std::to_string(i) + " (truth " +
                          std::to_string(t) + ", prediction " + std::to_string(p) + ")");
      }
      ++at(t, p);
    }
  }

  void accumulate(const LabelMap& pred, const LabelMap& truth) { accumulate(pred.data, truth.data); }

  void merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw ShapeError("merge: class counts differ");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  }

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (auto c : counts_) n += c;
    return n;
  }
  std::uint64_t row_sum(int k) const {
    std::uint64_t n = 0;
    for (int j = 0; j < k_; ++j) n += at(k, j);
    return n;
  }
  std::uint64_t col_sum(int k) const {
    std::uint64_t n = 0;
    for (int i = 0; i < k_; ++i) n += at(i, k);
    return n;
  }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

 private:
  int k_;
  int ignore_;
  std::vector<std::uint64_t> counts_;
};

struct ClassMetrics {
  std::uint64_t tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0, iou = 0;
  bool empty = false;     // class absent from both truth and predictions
  bool excluded = false;  // left out of the means by request
};

struct MetricsReport {
  std::vector<ClassMetrics> classes;
  double mean_precision = 0, mean_recall = 0, mean_f1 = 0, miou = 0, oa = 0;
  int classes_in_mean = 0;
};

inline double safe_ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

/// Per-class precision/recall/F1/IoU and their unweighted means. Classes listed in
/// `exclude_from_means` and empty classes are reported but not averaged.
inline MetricsReport compute_metrics(const ConfusionMatrix& cm, const std::vector<int>& exclude_from_means = {}) {
  MetricsReport r;
  const int k = cm.classes();
  std::uint64_t diag = 0;
  for (int c = 0; c < k; ++c) {
    ClassMetrics m;
    m.tp = cm.at(c, c);
    m.fp = cm.col_sum(c) - m.tp;
    m.fn = cm.row_sum(c) - m.tp;
    diag += m.tp;
    const double tp = static_cast<double>(m.tp);
    m.precision = safe_ratio(tp, tp + m.fp);
    m.recall = safe_ratio(tp, tp + m.fn);
    m.f1 = safe_ratio(2 * m.precision * m.recall, m.precision + m.recall);
    m.iou = safe_ratio(tp, tp + m.fp + m.fn);
    m.empty = m.tp + m.fp + m.fn == 0;
    for (int e : exclude_from_means) m.excluded = m.excluded || e == c;
    if (!m.empty && !m.excluded) {
      r.mean_precision += m.precision;
      r.mean_recall += m.recall;
      r.mean_f1 += m.f1;
      r.miou += m.iou;
      ++r.classes_in_mean;
    }
    r.classes.push_back(m);
  }
  if (r.classes_in_mean > 0) {
    r.mean_precision /= r.classes_in_mean;
    r.mean_recall /= r.classes_in_mean;
    r.mean_f1 /= r.classes_in_mean;
    r.miou /= r.classes_in_mean;
  }
  r.oa = safe_ratio(static_cast<double>(diag), static_cast<double>(cm.total()));
  return r;
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// CSV with one row per class and a summary row:
///   class,precision,recall,F1,IoU,OA
/// Per-class rows leave OA empty; the summary row holds the means and OA.
inline std::string metrics_csv(const MetricsReport& r, const std::vector<std::string>& class_names = {}) {
  std::ostringstream out;
  out << "class,precision,recall,F1,IoU,OA\n";
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    const auto& m = r.classes[c];
    out << (c < class_names.size() ? class_names[c] : std::to_string(c)) << ',' << format_fixed(m.precision, 12)
        << ',' << format_fixed(m.recall, 12) << ',' << format_fixed(m.f1, 12) << ',' << format_fixed(m.iou, 12)
        << ",\n";
  }
  out << "summary," << format_fixed(r.mean_precision, 12) << ',' << format_fixed(r.mean_recall, 12) << ','
      << format_fixed(r.mean_f1, 12) << ',' << format_fixed(r.miou, 12) << ',' << format_fixed(r.oa, 12) << '\n';
  return out.str();
}

/// Percent row in results-table style: "<name> | meanF1 | mIoU | OA" with two decimals.
inline std::string format_table_row(const std::string& name, double mean_f1, double miou, double oa) {
  return name + " | " + format_fixed(100 * mean_f1, 2) + " | " + format_fixed(100 * miou, 2) + " | " +
         format_fixed(100 * oa, 2);
}

struct TableRow {
  std::string name;
  double mean_f1 = 0, miou = 0, oa = 0;  // fractions
};

inline TableRow parse_table_row(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t bar = line.find(" | ", start);
    cells.push_back(line.substr(start, bar == std::string::npos ? std::string::npos : bar - start));
    if (bar == std::string::npos) break;
    start = bar + 3;
  }
  if (cells.size() != 4) throw ConfigError("table row needs 4 cells: '" + line + "'");
  try {
    return {cells[0], std::stod(cells[1]) / 100, std::stod(cells[2]) / 100, std::stod(cells[3]) / 100};
  } catch (const std::exception&) {
    throw ConfigError("table row has a non-numeric cell: '" + line + "'");
  }
}

}  // namespace sffnet

#endif  // SFFNET_METRICS_HPP
