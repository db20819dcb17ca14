#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "marrowbench/rng.hpp"

namespace marrowbench {

// --- normal distribution helpers -------------------------------------------

double normal_cdf(double z);

// Inverse standard normal CDF on (0,1). Rational initial guess refined with
// Halley steps against the erfc-based CDF; absolute error is far below the
// 1e-9 the interval endpoints require. Throws on p outside (0,1).
double normal_quantile(double p);

// --- clustered samples ------------------------------------------------------

// Items are indices into caller-owned storage. A cluster groups the item
// indices that resample together (for example, all cells of one patient).
struct ClusteredSample {
  std::vector<std::string> cluster_ids;
  std::vector<std::vector<int64_t>> clusters;

  int64_t total_items() const;
  // Concatenation of all clusters in order.
  std::vector<int64_t> all_items() const;
};

enum class ResampleMode { two_level, clusters_only };

const char* resample_mode_name(ResampleMode m);
ResampleMode parse_resample_mode(const std::string& name);

// One replicate: draw clusters with replacement, then items within each drawn
// cluster with replacement (two_level) or intact (clusters_only). The number
// of drawn clusters always equals the original cluster count.
std::vector<int64_t> hierarchical_resample(const ClusteredSample& s, Rng& rng,
                                           ResampleMode mode);

// --- BCa machinery ----------------------------------------------------------

// A statistic maps a multiset of item indices to a scalar. It closes over
// whatever backing table the indices point into. Returning NaN marks the
// replicate as degenerate; bootstrap_ci drops and counts such replicates.
using StatisticFn = std::function<double(const std::vector<int64_t>&)>;

// Leave-one-cluster-out jackknife skewness estimate. Zero when fewer than
// three clusters or when all leave-one-out values coincide.
double jackknife_acceleration(const ClusteredSample& s, const StatisticFn& stat);

// Bias correction from the share of replicates strictly below the estimate,
// clamped away from 0 and 1 by half a replicate's mass.
double bias_correction(const std::vector<double>& replicates, double estimate);

// Nearest-rank quantile of a sorted vector: element at rank
// clamp(ceil(p*n), 1, n). Endpoints are always members of the input.
double nearest_rank(const std::vector<double>& sorted, double p);

// Middle order statistic; mean of the two middle values for even counts.
double median_of(std::vector<double> values);

struct BcaInterval {
  double lower = 0, upper = 0;
  double alpha1 = 0, alpha2 = 0;  // adjusted percentile levels
};

// Adjusted-percentile interval for given bias correction and acceleration.
// Replicates need not be sorted; non-finite entries are not allowed here.
BcaInterval bca_interval(std::vector<double> replicates, double z0, double a,
                         double alpha);

struct BootstrapOptions {
  int64_t b = 2000;
  double alpha = 0.05;
  uint64_t seed = 0;
  ResampleMode mode = ResampleMode::two_level;
};

struct BootstrapResult {
  double estimate = 0;
  double lower = 0;
  double upper = 0;
  int64_t b = 0;
  double alpha = 0;
  double z0 = 0;
  double a = 0;
  int64_t dropped = 0;
};

// Replicate evaluation. Replicate i always uses substream (seed, i), so the
// output is identical for any thread count. The namespace reference version
// is the serial implementation kept for tests and benchmarks.
std::vector<double> bootstrap_replicates(const ClusteredSample& s,
                                         const StatisticFn& stat, int64_t b,
                                         uint64_t seed, ResampleMode mode);

namespace reference {
std::vector<double> bootstrap_replicates(const ClusteredSample& s,
                                         const StatisticFn& stat, int64_t b,
                                         uint64_t seed, ResampleMode mode);
}

BootstrapResult bootstrap_ci(const ClusteredSample& s, const StatisticFn& stat,
                             const BootstrapOptions& opt);

}  // namespace marrowbench
