#include "marrowbench/bootstrap.hpp"

#include <algorithm>
#include <cmath>

#include "marrowbench/error.hpp"

namespace marrowbench {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / 1.4142135623730950488); }

namespace {

// Acklam's rational approximation, relative error ~1.15e-9 before refinement.
double normal_quantile_guess(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double q = p - 0.5;
  double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::precondition, "normal_quantile",
                "p must lie strictly inside (0,1)");
  }
  // The erfc-based CDF keeps full relative precision only below the median;
  // fold the upper tail onto the lower one (1-p is exact for p >= 0.5).
  if (p > 0.5) return -normal_quantile(1.0 - p);
  double x = normal_quantile_guess(p);
  // Halley steps against the erfc-based CDF; two suffice everywhere, the
  // loop exits as soon as the update stalls.
  for (int i = 0; i < 4; ++i) {
    double e = normal_cdf(x) - p;
    double u = e * 2.5066282746310002 * std::exp(0.5 * x * x);
    double step = u / (1.0 + 0.5 * x * u);
    x -= step;
    if (std::abs(step) <= 1e-13 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

int64_t ClusteredSample::total_items() const {
  int64_t n = 0;
  for (const auto& c : clusters) n += static_cast<int64_t>(c.size());
  return n;
}

std::vector<int64_t> ClusteredSample::all_items() const {
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(total_items()));
  for (const auto& c : clusters) out.insert(out.end(), c.begin(), c.end());
  return out;
}

const char* resample_mode_name(ResampleMode m) {
  return m == ResampleMode::two_level ? "two_level" : "clusters_only";
}

ResampleMode parse_resample_mode(const std::string& name) {
  if (name == "two_level") return ResampleMode::two_level;
  if (name == "clusters_only") return ResampleMode::clusters_only;
  throw Error(ErrorCode::usage, "resample_mode", "unknown resample mode: " + name);
}

std::vector<int64_t> hierarchical_resample(const ClusteredSample& s, Rng& rng,
                                           ResampleMode mode) {
  const size_t n = s.clusters.size();
  if (n == 0) {
    throw Error(ErrorCode::precondition, "hierarchical_resample",
                "sample has no clusters");
  }
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(s.total_items()));
  for (size_t i = 0; i < n; ++i) {
    const auto& cluster = s.clusters[rng.bounded(n)];
    if (mode == ResampleMode::clusters_only || cluster.size() <= 1) {
      out.insert(out.end(), cluster.begin(), cluster.end());
    } else {
      for (size_t j = 0; j < cluster.size(); ++j) {
        out.push_back(cluster[rng.bounded(cluster.size())]);
      }
    }
  }
  return out;
}

double jackknife_acceleration(const ClusteredSample& s, const StatisticFn& stat) {
  const size_t n = s.clusters.size();
  if (n < 3) return 0.0;
  std::vector<double> loo(n);
  std::vector<int64_t> items;
  for (size_t i = 0; i < n; ++i) {
    items.clear();
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      items.insert(items.end(), s.clusters[j].begin(), s.clusters[j].end());
    }
    loo[i] = stat(items);
    if (!std::isfinite(loo[i])) return 0.0;
  }
  double mean = 0.0;
  for (double v : loo) mean += v;
  mean /= static_cast<double>(n);
  double s2 = 0.0, s3 = 0.0;
  for (double v : loo) {
    double d = mean - v;
    s2 += d * d;
    s3 += d * d * d;
  }
  if (s2 <= 0.0) return 0.0;
  return s3 / (6.0 * std::pow(s2, 1.5));
}

double bias_correction(const std::vector<double>& replicates, double estimate) {
  const int64_t b = static_cast<int64_t>(replicates.size());
  if (b == 0) {
    throw Error(ErrorCode::precondition, "bias_correction", "no replicates");
  }
  int64_t below = 0;
  for (double v : replicates) {
    if (v < estimate) ++below;
  }
  double p0 = static_cast<double>(below) / static_cast<double>(b);
  double eps = 1.0 / (2.0 * static_cast<double>(b));
  p0 = std::clamp(p0, eps, 1.0 - eps);
  return normal_quantile(p0);
}

double nearest_rank(const std::vector<double>& sorted, double p) {
  const int64_t n = static_cast<int64_t>(sorted.size());
  if (n == 0) {
    throw Error(ErrorCode::precondition, "nearest_rank", "empty sample");
  }
  int64_t k = static_cast<int64_t>(std::ceil(p * static_cast<double>(n)));
  k = std::clamp<int64_t>(k, 1, n);
  return sorted[static_cast<size_t>(k - 1)];
}

double median_of(std::vector<double> values) {
  if (values.empty()) {
    throw Error(ErrorCode::precondition, "median_of", "empty sample");
  }
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

double adjusted_level(double z0, double z, double a) {
  double t = z0 + z;
  double denom = 1.0 - a * t;
  if (denom <= 0.0) return t >= 0.0 ? 1.0 : 0.0;  // saturated tail
  return normal_cdf(z0 + t / denom);
}

}  // namespace

BcaInterval bca_interval(std::vector<double> replicates, double z0, double a,
                         double alpha) {
  if (replicates.empty()) {
    throw Error(ErrorCode::precondition, "bca_interval", "no replicates");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::precondition, "bca_interval",
                "alpha must lie strictly inside (0,1)");
  }
  std::sort(replicates.begin(), replicates.end());
  BcaInterval out;
  out.alpha1 = adjusted_level(z0, normal_quantile(alpha / 2.0), a);
  out.alpha2 = adjusted_level(z0, normal_quantile(1.0 - alpha / 2.0), a);
  out.lower = nearest_rank(replicates, out.alpha1);
  out.upper = nearest_rank(replicates, out.alpha2);
  return out;
}

namespace {

double one_replicate(const ClusteredSample& s, const StatisticFn& stat,
                     uint64_t seed, int64_t index, ResampleMode mode) {
  Rng rng = Rng::substream(seed, "bootstrap.replicate", static_cast<uint64_t>(index));
  std::vector<int64_t> idx = hierarchical_resample(s, rng, mode);
  return stat(idx);
}

}  // namespace

std::vector<double> bootstrap_replicates(const ClusteredSample& s,
                                         const StatisticFn& stat, int64_t b,
                                         uint64_t seed, ResampleMode mode) {
  std::vector<double> out(static_cast<size_t>(b));
#pragma omp parallel for schedule(dynamic, 8)
  for (int64_t i = 0; i < b; ++i) {
    out[static_cast<size_t>(i)] = one_replicate(s, stat, seed, i, mode);
  }
  return out;
}

namespace reference {

std::vector<double> bootstrap_replicates(const ClusteredSample& s,
                                         const StatisticFn& stat, int64_t b,
                                         uint64_t seed, ResampleMode mode) {
  std::vector<double> out(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i) {
    out[static_cast<size_t>(i)] = one_replicate(s, stat, seed, i, mode);
  }
  return out;
}

}  // namespace reference

BootstrapResult bootstrap_ci(const ClusteredSample& s, const StatisticFn& stat,
                             const BootstrapOptions& opt) {
  if (opt.b < 1) {
    throw Error(ErrorCode::precondition, "bootstrap_ci", "b must be >= 1");
  }
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) {
    throw Error(ErrorCode::precondition, "bootstrap_ci",
                "alpha must lie strictly inside (0,1)");
  }
  BootstrapResult res;
  res.b = opt.b;
  res.alpha = opt.alpha;
  res.estimate = stat(s.all_items());
  if (!std::isfinite(res.estimate)) {
    throw Error(ErrorCode::precondition, "bootstrap_ci",
                "statistic is not finite on the full sample");
  }

  std::vector<double> reps = bootstrap_replicates(s, stat, opt.b, opt.seed, opt.mode);
  std::vector<double> kept;
  kept.reserve(reps.size());
  for (double v : reps) {
    if (std::isfinite(v)) kept.push_back(v);
  }
  res.dropped = static_cast<int64_t>(reps.size() - kept.size());
  if (kept.empty()) {
    throw Error(ErrorCode::precondition, "bootstrap_ci",
                "all bootstrap replicates were degenerate");
  }

  res.z0 = bias_correction(kept, res.estimate);
  res.a = jackknife_acceleration(s, stat);
  BcaInterval ci = bca_interval(kept, res.z0, res.a, opt.alpha);
  res.lower = ci.lower;
  res.upper = ci.upper;
  return res;
}

}  // namespace marrowbench
