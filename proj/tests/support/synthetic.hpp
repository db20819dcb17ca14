#pragma once

// Synthetic cohort shared by the pipeline tests and the acceptance runner:
// three diagnosis profiles with disjoint dominant classes, so patient count
// fractions separate the diagnoses cleanly. Observation streams are mixed so
// every consensus outcome occurs: most cells decide at two observations,
// some at three or four, a few never.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "marrowbench/consensus.hpp"
#include "marrowbench/core.hpp"
#include "marrowbench/rng.hpp"

namespace synth {

struct SyntheticCohort {
  std::vector<marrowbench::PatientRecord> patients;
  std::vector<marrowbench::CellRecord> cells;
  std::vector<marrowbench::Observation> observations;
};

struct ClassWeight {
  const char* name;
  double weight;
};

inline const std::vector<ClassWeight>& profile_for(marrowbench::Diagnosis d) {
  static const std::vector<ClassWeight> all = {
      {"Lymphocytic Blast", 0.55}, {"Lymphocyte", 0.20},
      {"Segmented Neutrophil", 0.10}, {"Polychromatic Erythroblast", 0.10},
      {"Monocyte", 0.05}};
  static const std::vector<ClassWeight> aml = {
      {"Myelocytic Blast", 0.50}, {"Promyelocyte", 0.15},
      {"Neutrophilic Myelocyte", 0.10}, {"Segmented Neutrophil", 0.10},
      {"Polychromatic Erythroblast", 0.10}, {"Monocytic Blast", 0.05}};
  static const std::vector<ClassWeight> cml = {
      {"Segmented Neutrophil", 0.30}, {"Neutrophilic Band", 0.20},
      {"Neutrophilic Metamyelocyte", 0.15}, {"Neutrophilic Myelocyte", 0.15},
      {"Segmented Basophil", 0.10}, {"Polychromatic Erythroblast", 0.10}};
  switch (d) {
    case marrowbench::Diagnosis::all: return all;
    case marrowbench::Diagnosis::aml: return aml;
    case marrowbench::Diagnosis::cml: return cml;
  }
  return all;
}

inline std::string draw_class(const std::vector<ClassWeight>& profile,
                              marrowbench::Rng& rng) {
  double u = rng.next_double();
  double acc = 0;
  for (const ClassWeight& c : profile) {
    acc += c.weight;
    if (u < acc) return c.name;
  }
  return profile.back().name;
}

inline std::string zero_padded(int64_t n, int width) {
  std::string s = std::to_string(n);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

inline SyntheticCohort make_cohort(int64_t n_patients, int64_t cells_per_patient,
                                   uint64_t seed) {
  using namespace marrowbench;
  SyntheticCohort out;
  for (int64_t p = 0; p < n_patients; ++p) {
    PatientRecord pr;
    pr.patient_id = "p" + zero_padded(p, 3);
    double lo = static_cast<double>(2 * (p % 9));
    pr.age = {lo, lo + 2.0};
    pr.sex = (p % 2 == 0) ? Sex::male : Sex::female;
    pr.diagnosis = static_cast<Diagnosis>(p % 3);
    if (pr.diagnosis == Diagnosis::all) {
      pr.subtype = (p % 2 == 0) ? "B-ALL" : "T-ALL";
    }
    pr.split = SplitSet::unassigned;
    pr.labs[0] = 1.0 + static_cast<double>(p % 3);
    pr.labs[5] = 7.5;
    out.patients.push_back(pr);

    Rng rng = Rng::substream(seed, "synth.patient", static_cast<uint64_t>(p));
    const auto& profile = profile_for(pr.diagnosis);
    for (int64_t i = 0; i < cells_per_patient; ++i) {
      CellRecord cell;
      cell.cell_id = pr.patient_id + "_c" + zero_padded(i, 3);
      cell.patient_id = pr.patient_id;
      cell.roi_id = pr.patient_id + "_roi" + std::to_string(i % 2);
      cell.bbox = {16.0 + 24.0 * static_cast<double>(i % 60),
                   16.0 + 24.0 * static_cast<double>((i / 60) % 60), 24.0, 24.0};
      out.cells.push_back(cell);

      std::string label = draw_class(profile, rng);
      std::vector<std::string> stream;
      double u = rng.next_double();
      if (u < 0.80) {
        stream = {label, label};
      } else if (u < 0.93) {
        stream = {label, "Artifact", label};
      } else if (u < 0.97) {
        stream = {label, "Artifact", "Not Identifiable", label};
      } else {
        stream = {label, "Artifact", "Not Identifiable", "Other Cell",
                  "Smudge Cell"};
      }
      for (size_t k = 0; k < stream.size(); ++k) {
        Observation obs;
        obs.cell_id = cell.cell_id;
        obs.observer_id = "obs" + std::to_string(k + 1);
        obs.label = stream[k];
        obs.seq = static_cast<int64_t>(k + 1);
        obs.view = (k == 0) ? ObsView::labeling : ObsView::validation;
        if (i % 2 == 0) obs.duration_s = 1.0 + 0.5 * static_cast<double>(k);
        out.observations.push_back(obs);
      }
    }
  }
  return out;
}

}  // namespace synth
