#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "marrowbench/core.hpp"

namespace marrowbench {

struct SplitRatios {
  double train = 0.7;
  double validation = 0.15;
  double test = 0.15;
};

// Patient-id -> assigned set. Every patient of the cohort appears exactly
// once; sets are disjoint by construction.
struct SplitAssignment {
  std::map<std::string, SplitSet> by_patient;

  std::array<int64_t, 3> set_sizes() const;
};

// Stratum of a patient: diagnosis plus subtype; patients without a subtype
// fall back to a diagnosis-only stratum.
std::string stratum_key(const PatientRecord& p);

// Quota-based stratified assignment. Global set sizes follow the
// largest-remainder rule on the ratios (remainder ties favor train, then
// validation, then test); per-stratum quotas follow the same rule and are
// then minimally adjusted, largest strata first, so the global sizes hold
// exactly. Patients are shuffled within their stratum by the seed before
// quota dealing.
SplitAssignment initial_assign(const std::vector<PatientRecord>& patients,
                               const SplitRatios& ratios, uint64_t seed);

// Balance objective: for each set, the L1 distance between the set's and the
// cohort's diagnosis distribution plus the L1 distance between the class
// distributions of their consensus-labelled cells; summed over the three
// sets with unit weights. An empty set contributes the maximal distance.
double split_objective(const Cohort& cohort, const Taxonomy& taxonomy,
                       const SplitAssignment& assignment);

// Best-improvement local search over same-stratum cross-set patient swaps.
// Each round applies the swap with the largest objective decrease (ties by
// stratum key, then the smallest patient-id pair) until no swap improves.
// Set sizes and per-stratum counts are invariant. Returns the number of
// applied swaps.
int64_t swap_refine(const Cohort& cohort, const Taxonomy& taxonomy,
                    SplitAssignment& assignment, int64_t max_swaps = 100000);

// Counts reported after splitting.
struct SplitSummary {
  std::array<int64_t, 3> sizes{};                    // train/validation/test
  std::array<std::array<int64_t, 3>, 3> diagnosis{}; // [set][diagnosis]
  double objective = 0;
};

SplitSummary summarize_split(const Cohort& cohort, const Taxonomy& taxonomy,
                             const SplitAssignment& assignment);

}  // namespace marrowbench
