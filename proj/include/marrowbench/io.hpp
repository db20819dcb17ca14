#pragma once

#include <map>
#include <string>
#include <vector>

#include "marrowbench/classify.hpp"
#include "marrowbench/consensus.hpp"
#include "marrowbench/core.hpp"
#include "marrowbench/detect.hpp"

namespace marrowbench {

// --- files -------------------------------------------------------------------

std::string read_file(const std::string& path);

// Writes via a temp file in the same directory plus an atomic rename, so an
// interrupted run never leaves a partial file at the target path.
void write_file_atomic(const std::string& path, const std::string& content);

// Shortest decimal form that parses back to the same double; locale-free.
std::string format_double(double v);

// --- CSV ----------------------------------------------------------------------
// Dialect: comma separator, double-quote quoting with "" escapes, LF rows
// (CRLF tolerated on input), '.' decimal point, UTF-8 bytes passed through.

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int64_t column(const std::string& name) const;  // -1 when absent
};

Csv parse_csv(const std::string& text);
Csv read_csv(const std::string& path);
std::string format_csv(const Csv& csv);

// --- JSONL --------------------------------------------------------------------

std::vector<std::string> read_lines(const std::string& path);

// --- record (de)serialization ---------------------------------------------------

std::vector<PatientRecord> read_patients_csv(const std::string& path);
void write_patients_csv(const std::string& path,
                        const std::vector<PatientRecord>& patients);

std::vector<CellRecord> read_cells_jsonl(const std::string& path);
void write_cells_jsonl(const std::string& path, const std::vector<CellRecord>& cells);

std::vector<Observation> read_observations_jsonl(const std::string& path);
void write_observations_jsonl(const std::string& path,
                              const std::vector<Observation>& obs);

// Detections / ground truth grouped by region of interest, in file order.
std::map<std::string, std::vector<Detection>> read_detections_jsonl(
    const std::string& path);
std::map<std::string, std::vector<BoundingBox>> read_groundtruth_jsonl(
    const std::string& path);

// Scored predictions: cell_id, truth, then one column per model class in
// canonical order. Truth labels and header names must resolve in the taxonomy.
struct PredictionsFile {
  std::vector<std::string> cell_ids;
  PredictionSet preds;
};

PredictionsFile read_predictions_csv(const std::string& path, const Taxonomy& t);
void write_predictions_csv(const std::string& path, const PredictionsFile& file,
                           const Taxonomy& t);

// Patient-level training table: patient_id, label, subtype, then numeric
// feature columns. Empty cells become NaN (missing).
struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<std::string> labels;
  std::vector<std::string> subtypes;
  std::vector<std::string> feature_names;
  std::vector<double> values;  // ids.size() x feature_names.size(), row-major

  int64_t rows() const { return static_cast<int64_t>(ids.size()); }
  int64_t cols() const { return static_cast<int64_t>(feature_names.size()); }
  double at(int64_t r, int64_t c) const {
    return values[static_cast<size_t>(r) * feature_names.size() +
                  static_cast<size_t>(c)];
  }
};

FeatureTable read_features_csv(const std::string& path);
void write_features_csv(const std::string& path, const FeatureTable& table);

}  // namespace marrowbench
