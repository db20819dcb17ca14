#pragma once

#include <cstdint>
#include <vector>

namespace marrowbench {

// Per-row class scores plus integer truth labels. Column k of the row-major
// score block corresponds to class index k; the caller fixes the class order.
struct PredictionSet {
  int32_t n_classes = 0;
  std::vector<int32_t> truth;
  std::vector<double> scores;  // truth.size() * n_classes, row-major

  int64_t rows() const { return static_cast<int64_t>(truth.size()); }
  const double* row(int64_t i) const {
    return scores.data() + static_cast<size_t>(i) * static_cast<size_t>(n_classes);
  }
};

// Throws when shapes or label ranges are inconsistent.
void validate_predictions(const PredictionSet& p);

// Index of the row maximum; equal scores resolve to the lowest class index.
int32_t argmax_class(const double* row, int32_t n_classes);

struct ConfusionMatrix {
  int32_t n_classes = 0;
  std::vector<int64_t> counts;  // [truth * n_classes + predicted]

  int64_t at(int32_t t, int32_t p) const {
    return counts[static_cast<size_t>(t) * static_cast<size_t>(n_classes) +
                  static_cast<size_t>(p)];
  }
  int64_t row_sum(int32_t t) const;
  int64_t col_sum(int32_t p) const;
};

ConfusionMatrix confusion(const PredictionSet& p);
namespace reference {
ConfusionMatrix confusion(const PredictionSet& p);
}

struct ClassPrf {
  double precision = 0, recall = 0, f1 = 0;
  int64_t support = 0;
};

// One entry per class, every zero denominator scoring 0.
std::vector<ClassPrf> per_class_prf(const ConfusionMatrix& m);

struct F1Aggregates {
  double median_f1 = 0;
  double mean_f1 = 0;
};

// Median is the middle order statistic, or the mean of the two middle values
// for even counts.
F1Aggregates f1_aggregates(const std::vector<double>& f1_per_class);

// Fraction of rows whose truth is among the k best-scored classes, ranking by
// score descending with the lower class index first on ties.
double topk_accuracy(const PredictionSet& p, int32_t k);

// Macro one-vs-rest AUROC with midrank tie handling. Classes without both a
// positive and a negative example are skipped; returns NaN when every class
// is degenerate.
double macro_ovr_auroc(const PredictionSet& p);

}  // namespace marrowbench
