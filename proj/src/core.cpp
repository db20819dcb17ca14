#include "marrowbench/core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "marrowbench/error.hpp"

namespace marrowbench {

namespace {

std::string lower_trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out = s.substr(b, e - b);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

double parse_number(const std::string& text, const char* what) {
  const char* b = text.data();
  const char* e = b + text.size();
  double v = 0;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw Error(ErrorCode::schema, "parse",
                std::string("bad ") + what + ": '" + text + "'");
  }
  return v;
}

}  // namespace

const char* sex_name(Sex s) {
  switch (s) {
    case Sex::male: return "male";
    case Sex::female: return "female";
    case Sex::unknown: return "unknown";
  }
  return "unknown";
}

Sex parse_sex(const std::string& text) {
  std::string t = lower_trim(text);
  if (t == "male" || t == "m") return Sex::male;
  if (t == "female" || t == "f") return Sex::female;
  if (t == "unknown" || t.empty()) return Sex::unknown;
  throw Error(ErrorCode::schema, "parse", "bad sex value: '" + text + "'");
}

const char* diagnosis_name(Diagnosis d) {
  return kDiagnosisNames[static_cast<size_t>(d)];
}

Diagnosis parse_diagnosis(const std::string& text) {
  std::string t = lower_trim(text);
  if (t == "all") return Diagnosis::all;
  if (t == "aml") return Diagnosis::aml;
  if (t == "cml") return Diagnosis::cml;
  throw Error(ErrorCode::schema, "parse", "bad leukemia type: '" + text + "'");
}

const char* split_name(SplitSet s) {
  switch (s) {
    case SplitSet::train: return "train";
    case SplitSet::validation: return "validation";
    case SplitSet::test: return "test";
    case SplitSet::unassigned: return "";
  }
  return "";
}

SplitSet parse_split(const std::string& text) {
  std::string t = lower_trim(text);
  if (t == "train") return SplitSet::train;
  if (t == "validation" || t == "val") return SplitSet::validation;
  if (t == "test") return SplitSet::test;
  if (t.empty() || t == "unassigned") return SplitSet::unassigned;
  throw Error(ErrorCode::schema, "parse", "bad split value: '" + text + "'");
}

AgeInterval parse_age_interval(const std::string& text) {
  std::string t = text;
  // strip outer whitespace
  size_t b = t.find_first_not_of(" \t");
  size_t e = t.find_last_not_of(" \t");
  if (b == std::string::npos) {
    throw Error(ErrorCode::schema, "parse", "empty age interval");
  }
  t = t.substr(b, e - b + 1);

  std::string lo_s, hi_s;
  if (t.size() >= 2 && t.front() == '[' && t.back() == '[') {
    std::string inner = t.substr(1, t.size() - 2);
    size_t comma = inner.find(',');
    if (comma == std::string::npos) {
      throw Error(ErrorCode::schema, "parse", "bad age interval: '" + text + "'");
    }
    lo_s = inner.substr(0, comma);
    hi_s = inner.substr(comma + 1);
  } else {
    size_t dash = t.find('-');
    if (dash == std::string::npos || dash == 0) {
      throw Error(ErrorCode::schema, "parse", "bad age interval: '" + text + "'");
    }
    lo_s = t.substr(0, dash);
    hi_s = t.substr(dash + 1);
  }
  auto strip = [](std::string s) {
    size_t b2 = s.find_first_not_of(" \t");
    if (b2 == std::string::npos) return std::string();
    size_t e2 = s.find_last_not_of(" \t");
    return s.substr(b2, e2 - b2 + 1);
  };
  AgeInterval a;
  a.lo = parse_number(strip(lo_s), "age bound");
  a.hi = parse_number(strip(hi_s), "age bound");
  if (!(a.lo >= 0.0) || !(a.lo < a.hi)) {
    throw Error(ErrorCode::schema, "parse",
                "age interval must satisfy 0 <= lo < hi: '" + text + "'");
  }
  return a;
}

std::string format_age_interval(const AgeInterval& a) {
  std::ostringstream os;
  os << "[" << a.lo << ", " << a.hi << "[";
  return os.str();
}

std::vector<ValidationIssue> validate_cohort(const Cohort& c, const Taxonomy& t) {
  std::vector<ValidationIssue> issues;
  auto add = [&issues](const char* kind, const std::string& id,
                       const std::string& detail) {
    issues.push_back({kind, id, detail});
  };

  std::set<std::string> patient_ids;
  for (const PatientRecord& p : c.patients) {
    if (!patient_ids.insert(p.patient_id).second) {
      add("duplicate_patient_id", p.patient_id, "patient listed twice");
    }
    if (!(p.age.lo >= 0.0) || !(p.age.lo < p.age.hi) || p.age.hi > 19.0) {
      add("invalid_age_interval", p.patient_id, format_age_interval(p.age));
    }
    for (size_t i = 0; i < kNumLabs; ++i) {
      if (p.labs[i] && !std::isfinite(*p.labs[i])) {
        add("invalid_lab_value", p.patient_id, kLabCodes[i]);
      }
    }
  }

  std::set<std::string> cell_ids;
  for (const CellRecord& cell : c.cells) {
    if (!cell_ids.insert(cell.cell_id).second) {
      add("duplicate_cell_id", cell.cell_id, "cell listed twice");
    }
    if (!patient_ids.count(cell.patient_id)) {
      add("dangling_patient_ref", cell.cell_id,
          "unknown patient " + cell.patient_id);
    }
    if (!(cell.bbox.w > 0.0) || !(cell.bbox.h > 0.0)) {
      add("invalid_bbox", cell.cell_id, "non-positive box size");
    }
    if (cell.consensus_label && find_model_class(t, *cell.consensus_label) < 0) {
      add("unknown_class", cell.cell_id, *cell.consensus_label);
    }
  }
  return issues;
}

}  // namespace marrowbench
