#include "marrowbench/split.hpp"

#include <algorithm>
#include <cmath>

#include "marrowbench/error.hpp"
#include "marrowbench/rng.hpp"

namespace marrowbench {

std::array<int64_t, 3> SplitAssignment::set_sizes() const {
  std::array<int64_t, 3> out{};
  for (const auto& [id, set] : by_patient) {
    out[static_cast<size_t>(set)]++;
  }
  return out;
}

std::string stratum_key(const PatientRecord& p) {
  std::string key = diagnosis_name(p.diagnosis);
  if (!p.subtype.empty()) {
    key += "|";
    key += p.subtype;
  }
  return key;
}

namespace {

void check_ratios(const SplitRatios& r) {
  if (!(r.train > 0.0) || !(r.validation >= 0.0) || !(r.test >= 0.0)) {
    throw Error(ErrorCode::precondition, "split", "ratios must be non-negative");
  }
  if (std::abs(r.train + r.validation + r.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::precondition, "split", "ratios must sum to 1");
  }
}

// Largest-remainder apportionment of n into three parts. Remainder ties are
// broken in set order (train, validation, test).
std::array<int64_t, 3> largest_remainder(int64_t n, const SplitRatios& r) {
  const double ratios[3] = {r.train, r.validation, r.test};
  std::array<int64_t, 3> out{};
  double frac[3];
  int64_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    double exact = static_cast<double>(n) * ratios[k];
    out[static_cast<size_t>(k)] = static_cast<int64_t>(std::floor(exact));
    frac[k] = exact - std::floor(exact);
    assigned += out[static_cast<size_t>(k)];
  }
  int64_t rest = n - assigned;
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&frac](int a, int b) { return frac[a] > frac[b]; });
  for (int64_t i = 0; i < rest; ++i) {
    out[static_cast<size_t>(order[static_cast<size_t>(i % 3)])]++;
  }
  return out;
}

struct Stratum {
  std::string key;
  std::vector<std::string> patient_ids;  // sorted, then shuffled by seed
  std::array<int64_t, 3> quota{};
};

}  // namespace

SplitAssignment initial_assign(const std::vector<PatientRecord>& patients,
                               const SplitRatios& ratios, uint64_t seed) {
  check_ratios(ratios);
  if (patients.empty()) {
    throw Error(ErrorCode::precondition, "split", "no patients to assign");
  }

  std::map<std::string, std::vector<std::string>> groups;
  for (const PatientRecord& p : patients) {
    groups[stratum_key(p)].push_back(p.patient_id);
  }

  std::vector<Stratum> strata;
  for (auto& [key, ids] : groups) {
    Stratum s;
    s.key = key;
    std::sort(ids.begin(), ids.end());
    for (size_t i = 1; i < ids.size(); ++i) {
      if (ids[i] == ids[i - 1]) {
        throw Error(ErrorCode::precondition, "split",
                    "duplicate patient id: " + ids[i]);
      }
    }
    s.patient_ids = ids;
    s.quota = largest_remainder(static_cast<int64_t>(ids.size()), ratios);
    strata.push_back(std::move(s));
  }

  // Reconcile per-stratum quotas with the global largest-remainder targets.
  std::array<int64_t, 3> target =
      largest_remainder(static_cast<int64_t>(patients.size()), ratios);
  std::array<int64_t, 3> total{};
  for (const Stratum& s : strata) {
    for (int k = 0; k < 3; ++k) total[static_cast<size_t>(k)] += s.quota[static_cast<size_t>(k)];
  }
  // Visit strata largest-first (ties by key) and shift one patient at a time
  // from an over-filled set to an under-filled one.
  std::vector<size_t> visit(strata.size());
  for (size_t i = 0; i < strata.size(); ++i) visit[i] = i;
  std::sort(visit.begin(), visit.end(), [&strata](size_t a, size_t b) {
    if (strata[a].patient_ids.size() != strata[b].patient_ids.size()) {
      return strata[a].patient_ids.size() > strata[b].patient_ids.size();
    }
    return strata[a].key < strata[b].key;
  });
  bool progress = true;
  while (total != target && progress) {
    progress = false;
    for (int over = 0; over < 3 && total != target; ++over) {
      while (total[static_cast<size_t>(over)] > target[static_cast<size_t>(over)]) {
        int under = -1;
        for (int k = 0; k < 3; ++k) {
          if (total[static_cast<size_t>(k)] < target[static_cast<size_t>(k)]) {
            under = k;
            break;
          }
        }
        if (under < 0) break;
        bool moved = false;
        for (size_t vi : visit) {
          Stratum& s = strata[vi];
          if (s.quota[static_cast<size_t>(over)] > 0) {
            s.quota[static_cast<size_t>(over)]--;
            s.quota[static_cast<size_t>(under)]++;
            total[static_cast<size_t>(over)]--;
            total[static_cast<size_t>(under)]++;
            moved = true;
            progress = true;
            break;
          }
        }
        if (!moved) break;
      }
    }
  }

  SplitAssignment out;
  for (Stratum& s : strata) {
    // deterministic within-stratum shuffle driven by the stratum name
    Rng rng = Rng::substream(seed, "split.stratum." + s.key);
    for (size_t i = s.patient_ids.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng.bounded(i));
      std::swap(s.patient_ids[i - 1], s.patient_ids[j]);
    }
    size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      for (int64_t c = 0; c < s.quota[static_cast<size_t>(k)]; ++c) {
        out.by_patient[s.patient_ids[pos++]] = static_cast<SplitSet>(k);
      }
    }
  }
  return out;
}

namespace {

struct SetStats {
  int64_t patients = 0;
  std::array<int64_t, 3> diag{};
  std::vector<int64_t> cls;  // per model class
  int64_t cells = 0;
};

double l1_distance(const std::vector<double>& p, const std::vector<double>& q) {
  double d = 0;
  for (size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return d;
}

std::vector<double> to_fractions(const std::vector<int64_t>& counts, int64_t total) {
  std::vector<double> out(counts.size(), 0.0);
  if (total > 0) {
    for (size_t i = 0; i < counts.size(); ++i) {
      out[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    }
  }
  return out;
}

double objective_from_stats(const std::array<SetStats, 3>& sets,
                            const SetStats& cohort) {
  std::vector<int64_t> cohort_diag(cohort.diag.begin(), cohort.diag.end());
  std::vector<double> diag_all = to_fractions(cohort_diag, cohort.patients);
  std::vector<double> cls_all = to_fractions(cohort.cls, cohort.cells);
  double obj = 0;
  for (const SetStats& s : sets) {
    std::vector<int64_t> d(s.diag.begin(), s.diag.end());
    obj += l1_distance(to_fractions(d, s.patients), diag_all);
    obj += l1_distance(to_fractions(s.cls, s.cells), cls_all);
  }
  return obj;
}

struct ObjectiveContext {
  std::map<std::string, size_t> patient_row;
  std::vector<Diagnosis> diag;                 // per patient row
  std::vector<std::vector<int64_t>> cls;       // per patient row, per class
  std::vector<int64_t> cell_count;             // per patient row
  SetStats cohort;
  int32_t n_classes = 0;
};

ObjectiveContext build_context(const Cohort& cohort, const Taxonomy& taxonomy) {
  ObjectiveContext ctx;
  ctx.n_classes = taxonomy.n_model_classes();
  ctx.cohort.cls.assign(static_cast<size_t>(ctx.n_classes), 0);
  for (const PatientRecord& p : cohort.patients) {
    if (ctx.patient_row.count(p.patient_id)) {
      throw Error(ErrorCode::precondition, "split",
                  "duplicate patient id: " + p.patient_id);
    }
    ctx.patient_row[p.patient_id] = ctx.diag.size();
    ctx.diag.push_back(p.diagnosis);
    ctx.cls.emplace_back(static_cast<size_t>(ctx.n_classes), 0);
    ctx.cell_count.push_back(0);
    ctx.cohort.patients++;
    ctx.cohort.diag[static_cast<size_t>(p.diagnosis)]++;
  }
  for (const CellRecord& c : cohort.cells) {
    if (!c.consensus_label) continue;
    auto it = ctx.patient_row.find(c.patient_id);
    if (it == ctx.patient_row.end()) {
      throw Error(ErrorCode::precondition, "split",
                  "cell " + c.cell_id + " references unknown patient " +
                      c.patient_id);
    }
    int32_t k = model_class_index(taxonomy, *c.consensus_label);
    ctx.cls[it->second][static_cast<size_t>(k)]++;
    ctx.cell_count[it->second]++;
    ctx.cohort.cls[static_cast<size_t>(k)]++;
    ctx.cohort.cells++;
  }
  return ctx;
}

std::array<SetStats, 3> accumulate_sets(const ObjectiveContext& ctx,
                                        const Cohort& cohort,
                                        const SplitAssignment& assignment) {
  std::array<SetStats, 3> sets;
  for (auto& s : sets) s.cls.assign(static_cast<size_t>(ctx.n_classes), 0);
  for (const PatientRecord& p : cohort.patients) {
    auto it = assignment.by_patient.find(p.patient_id);
    if (it == assignment.by_patient.end() || it->second == SplitSet::unassigned) {
      throw Error(ErrorCode::precondition, "split",
                  "patient not assigned to a set: " + p.patient_id);
    }
    size_t row = ctx.patient_row.at(p.patient_id);
    SetStats& s = sets[static_cast<size_t>(it->second)];
    s.patients++;
    s.diag[static_cast<size_t>(ctx.diag[row])]++;
    s.cells += ctx.cell_count[row];
    for (int32_t k = 0; k < ctx.n_classes; ++k) {
      s.cls[static_cast<size_t>(k)] += ctx.cls[row][static_cast<size_t>(k)];
    }
  }
  return sets;
}

void move_patient(std::array<SetStats, 3>& sets, const ObjectiveContext& ctx,
                  size_t row, SplitSet from, SplitSet to) {
  SetStats& a = sets[static_cast<size_t>(from)];
  SetStats& b = sets[static_cast<size_t>(to)];
  a.patients--;
  b.patients++;
  a.diag[static_cast<size_t>(ctx.diag[row])]--;
  b.diag[static_cast<size_t>(ctx.diag[row])]++;
  a.cells -= ctx.cell_count[row];
  b.cells += ctx.cell_count[row];
  for (int32_t k = 0; k < ctx.n_classes; ++k) {
    a.cls[static_cast<size_t>(k)] -= ctx.cls[row][static_cast<size_t>(k)];
    b.cls[static_cast<size_t>(k)] += ctx.cls[row][static_cast<size_t>(k)];
  }
}

}  // namespace

double split_objective(const Cohort& cohort, const Taxonomy& taxonomy,
                       const SplitAssignment& assignment) {
  ObjectiveContext ctx = build_context(cohort, taxonomy);
  return objective_from_stats(accumulate_sets(ctx, cohort, assignment), ctx.cohort);
}

int64_t swap_refine(const Cohort& cohort, const Taxonomy& taxonomy,
                    SplitAssignment& assignment, int64_t max_swaps) {
  ObjectiveContext ctx = build_context(cohort, taxonomy);
  std::array<SetStats, 3> sets = accumulate_sets(ctx, cohort, assignment);

  // same-stratum candidates grouped up front
  std::map<std::string, std::vector<std::string>> strata;
  for (const PatientRecord& p : cohort.patients) {
    strata[stratum_key(p)].push_back(p.patient_id);
  }
  for (auto& [key, ids] : strata) std::sort(ids.begin(), ids.end());

  double current = objective_from_stats(sets, ctx.cohort);
  int64_t applied = 0;
  const double kMinGain = 1e-12;

  while (applied < max_swaps) {
    double best_obj = current;
    std::pair<std::string, std::string> best_pair;
    bool found = false;

    for (const auto& [key, ids] : strata) {
      for (size_t i = 0; i < ids.size(); ++i) {
        for (size_t j = i + 1; j < ids.size(); ++j) {
          SplitSet si = assignment.by_patient.at(ids[i]);
          SplitSet sj = assignment.by_patient.at(ids[j]);
          if (si == sj) continue;
          size_t ri = ctx.patient_row.at(ids[i]);
          size_t rj = ctx.patient_row.at(ids[j]);
          move_patient(sets, ctx, ri, si, sj);
          move_patient(sets, ctx, rj, sj, si);
          double trial = objective_from_stats(sets, ctx.cohort);
          move_patient(sets, ctx, ri, sj, si);
          move_patient(sets, ctx, rj, si, sj);
          if (trial < best_obj - kMinGain) {
            best_obj = trial;
            best_pair = {ids[i], ids[j]};
            found = true;
          }
        }
      }
    }

    if (!found) break;
    SplitSet si = assignment.by_patient.at(best_pair.first);
    SplitSet sj = assignment.by_patient.at(best_pair.second);
    size_t ri = ctx.patient_row.at(best_pair.first);
    size_t rj = ctx.patient_row.at(best_pair.second);
    move_patient(sets, ctx, ri, si, sj);
    move_patient(sets, ctx, rj, sj, si);
    assignment.by_patient[best_pair.first] = sj;
    assignment.by_patient[best_pair.second] = si;
    current = best_obj;
    ++applied;
  }
  return applied;
}

SplitSummary summarize_split(const Cohort& cohort, const Taxonomy& taxonomy,
                             const SplitAssignment& assignment) {
  ObjectiveContext ctx = build_context(cohort, taxonomy);
  std::array<SetStats, 3> sets = accumulate_sets(ctx, cohort, assignment);
  SplitSummary out;
  for (size_t s = 0; s < 3; ++s) {
    out.sizes[s] = sets[s].patients;
    out.diagnosis[s] = sets[s].diag;
  }
  out.objective = objective_from_stats(sets, ctx.cohort);
  return out;
}

}  // namespace marrowbench
