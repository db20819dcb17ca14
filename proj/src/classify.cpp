#include "marrowbench/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "marrowbench/bootstrap.hpp"  // median_of
#include "marrowbench/detect.hpp"     // f1_score
#include "marrowbench/error.hpp"

namespace marrowbench {

void validate_predictions(const PredictionSet& p) {
  if (p.n_classes < 2) {
    throw Error(ErrorCode::precondition, "classify", "need at least two classes");
  }
  if (p.scores.size() !=
      p.truth.size() * static_cast<size_t>(p.n_classes)) {
    throw Error(ErrorCode::precondition, "classify",
                "score block does not match rows * n_classes");
  }
  for (int32_t t : p.truth) {
    if (t < 0 || t >= p.n_classes) {
      throw Error(ErrorCode::precondition, "classify",
                  "truth label out of range");
    }
  }
}

int32_t argmax_class(const double* row, int32_t n_classes) {
  int32_t best = 0;
  for (int32_t k = 1; k < n_classes; ++k) {
    if (row[k] > row[best]) best = k;
  }
  return best;
}

int64_t ConfusionMatrix::row_sum(int32_t t) const {
  int64_t s = 0;
  for (int32_t p = 0; p < n_classes; ++p) s += at(t, p);
  return s;
}

int64_t ConfusionMatrix::col_sum(int32_t p) const {
  int64_t s = 0;
  for (int32_t t = 0; t < n_classes; ++t) s += at(t, p);
  return s;
}

ConfusionMatrix confusion(const PredictionSet& p) {
  validate_predictions(p);
  const size_t k2 = static_cast<size_t>(p.n_classes) * static_cast<size_t>(p.n_classes);
  ConfusionMatrix m;
  m.n_classes = p.n_classes;
  m.counts.assign(k2, 0);
  const int64_t n = p.rows();
#pragma omp parallel
  {
    std::vector<int64_t> local(k2, 0);
#pragma omp for schedule(static) nowait
    for (int64_t i = 0; i < n; ++i) {
      int32_t pred = argmax_class(p.row(i), p.n_classes);
      local[static_cast<size_t>(p.truth[static_cast<size_t>(i)]) *
                static_cast<size_t>(p.n_classes) +
            static_cast<size_t>(pred)]++;
    }
#pragma omp critical
    for (size_t j = 0; j < k2; ++j) m.counts[j] += local[j];
  }
  return m;
}

namespace reference {

ConfusionMatrix confusion(const PredictionSet& p) {
  validate_predictions(p);
  ConfusionMatrix m;
  m.n_classes = p.n_classes;
  m.counts.assign(
      static_cast<size_t>(p.n_classes) * static_cast<size_t>(p.n_classes), 0);
  for (int64_t i = 0; i < p.rows(); ++i) {
    int32_t pred = argmax_class(p.row(i), p.n_classes);
    m.counts[static_cast<size_t>(p.truth[static_cast<size_t>(i)]) *
                 static_cast<size_t>(p.n_classes) +
             static_cast<size_t>(pred)]++;
  }
  return m;
}

}  // namespace reference

std::vector<ClassPrf> per_class_prf(const ConfusionMatrix& m) {
  std::vector<ClassPrf> out(static_cast<size_t>(m.n_classes));
  for (int32_t k = 0; k < m.n_classes; ++k) {
    int64_t tp = m.at(k, k);
    int64_t pred = m.col_sum(k);
    int64_t sup = m.row_sum(k);
    ClassPrf& c = out[static_cast<size_t>(k)];
    c.support = sup;
    c.precision = pred > 0 ? static_cast<double>(tp) / static_cast<double>(pred) : 0.0;
    c.recall = sup > 0 ? static_cast<double>(tp) / static_cast<double>(sup) : 0.0;
    c.f1 = f1_score(c.precision, c.recall);
  }
  return out;
}

F1Aggregates f1_aggregates(const std::vector<double>& f1_per_class) {
  if (f1_per_class.empty()) {
    throw Error(ErrorCode::precondition, "f1_aggregates", "no classes");
  }
  F1Aggregates out;
  out.median_f1 = median_of(f1_per_class);
  double sum = 0;
  for (double v : f1_per_class) sum += v;
  out.mean_f1 = sum / static_cast<double>(f1_per_class.size());
  return out;
}

double topk_accuracy(const PredictionSet& p, int32_t k) {
  validate_predictions(p);
  if (k < 1 || k > p.n_classes) {
    throw Error(ErrorCode::precondition, "topk_accuracy", "k out of range");
  }
  const int64_t n = p.rows();
  if (n == 0) {
    throw Error(ErrorCode::precondition, "topk_accuracy", "no rows");
  }
  int64_t hits = 0;
#pragma omp parallel for schedule(static) reduction(+ : hits)
  for (int64_t i = 0; i < n; ++i) {
    const double* row = p.row(i);
    const int32_t t = p.truth[static_cast<size_t>(i)];
    // rank of the truth class: classes strictly better, plus tied classes
    // with a lower index, must number fewer than k
    int32_t ahead = 0;
    for (int32_t c = 0; c < p.n_classes; ++c) {
      if (c == t) continue;
      if (row[c] > row[t] || (row[c] == row[t] && c < t)) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

// Midrank AUROC for one class column; NaN when degenerate.
double ovr_auroc(const PredictionSet& p, int32_t cls) {
  const int64_t n = p.rows();
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), int64_t{0});
  auto score = [&](int64_t i) {
    return p.row(i)[cls];
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](int64_t a, int64_t b) { return score(a) < score(b); });
  double rank_pos = 0.0;
  int64_t npos = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && score(order[j + 1]) == score(order[i])) ++j;
    double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t t = i; t <= j; ++t) {
      if (p.truth[static_cast<size_t>(order[t])] == cls) {
        rank_pos += mid;
        ++npos;
      }
    }
    i = j + 1;
  }
  int64_t nneg = n - npos;
  if (npos == 0 || nneg == 0) return std::nan("");
  double np = static_cast<double>(npos);
  return (rank_pos - np * (np + 1.0) / 2.0) /
         (np * static_cast<double>(nneg));
}

}  // namespace

double macro_ovr_auroc(const PredictionSet& p) {
  validate_predictions(p);
  std::vector<double> per_class(static_cast<size_t>(p.n_classes));
#pragma omp parallel for schedule(dynamic)
  for (int32_t k = 0; k < p.n_classes; ++k) {
    per_class[static_cast<size_t>(k)] = ovr_auroc(p, k);
  }
  double sum = 0;
  int64_t cnt = 0;
  for (double v : per_class) {
    if (!std::isnan(v)) {
      sum += v;
      ++cnt;
    }
  }
  if (cnt == 0) return std::nan("");
  return sum / static_cast<double>(cnt);
}

}  // namespace marrowbench
