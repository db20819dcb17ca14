#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "marrowbench/detect.hpp"
#include "marrowbench/taxonomy.hpp"

namespace marrowbench {

// Blood lab panel, identified by LOINC code, in the fixed column order used
// by patients.csv and the feature builders.
inline constexpr std::array<const char*, 18> kLabCodes = {
    "14804-9", "1743-4", "20570-8", "2160-0", "28539-5", "28540-3",
    "30239-8", "30385-9", "30428-7", "3084-1", "6690-2",  "714-6",
    "718-7",   "737-7",  "744-3",   "769-0",  "777-3",   "789-8"};

inline constexpr size_t kNumLabs = kLabCodes.size();

enum class Sex { male, female, unknown };
const char* sex_name(Sex s);
Sex parse_sex(const std::string& text);

enum class Diagnosis { all = 0, aml = 1, cml = 2 };
inline constexpr std::array<const char*, 3> kDiagnosisNames = {"ALL", "AML", "CML"};
const char* diagnosis_name(Diagnosis d);
Diagnosis parse_diagnosis(const std::string& text);

enum class SplitSet { train = 0, validation = 1, test = 2, unassigned = 3 };
const char* split_name(SplitSet s);
SplitSet parse_split(const std::string& text);

// Half-open age interval in years. De-identified records carry bins, not
// exact ages.
struct AgeInterval {
  double lo = 0;
  double hi = 0;
};

// Accepts "[4, 6[" interval notation and the "4-6" shorthand.
AgeInterval parse_age_interval(const std::string& text);
std::string format_age_interval(const AgeInterval& a);

struct PatientRecord {
  std::string patient_id;
  AgeInterval age;
  Sex sex = Sex::unknown;
  Diagnosis diagnosis = Diagnosis::all;
  std::string subtype;  // free text, may be empty
  SplitSet split = SplitSet::unassigned;
  std::array<std::optional<double>, kNumLabs> labs;
};

// Exported label value for cells whose annotation never converged.
inline constexpr const char* kNoConsensusLabel = "no consensus found";

struct CellRecord {
  std::string cell_id;
  std::string patient_id;
  std::string roi_id;
  BoundingBox bbox;
  std::optional<std::string> consensus_label;
};

struct Cohort {
  std::vector<PatientRecord> patients;
  std::vector<CellRecord> cells;
};

struct ValidationIssue {
  std::string kind;    // stable machine-readable tag
  std::string id;      // offending record
  std::string detail;
};

// Referential and range checks over a cohort. An empty result means the
// cohort is well formed. Issue kinds: duplicate_patient_id, duplicate_cell_id,
// dangling_patient_ref, invalid_age_interval, invalid_bbox, unknown_class,
// invalid_lab_value.
std::vector<ValidationIssue> validate_cohort(const Cohort& c, const Taxonomy& t);

}  // namespace marrowbench
