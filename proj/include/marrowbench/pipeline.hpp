#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "marrowbench/bootstrap.hpp"
#include "marrowbench/core.hpp"
#include "marrowbench/gbdt.hpp"
#include "marrowbench/split.hpp"

// Command runners behind the command line tool. Each loads its inputs,
// writes its outputs under out_dir with an atomic rename, and returns the
// report it wrote. Reports are byte-stable: the same inputs, options and
// seed produce identical bytes regardless of thread count.

namespace marrowbench {

struct ConsensusCmd {
  std::string observations_path;
  std::string cells_path;    // optional: attach labels and rewrite the cells
  std::string taxonomy_path; // optional: defaults to the built-in taxonomy
  std::string out_dir;
  int32_t max_observers = 5;
  bool reduce = true;        // map winning labels onto model classes
};
nlohmann::ordered_json run_consensus(const ConsensusCmd& cmd);

struct SplitCmd {
  std::string patients_path;
  std::string cells_path;    // optional: enables the class-balance term
  std::string taxonomy_path;
  std::string out_dir;
  SplitRatios ratios;
  uint64_t seed = 1;
  bool refine = true;
};
nlohmann::ordered_json run_split(const SplitCmd& cmd);

struct EvalDetectCmd {
  std::string detections_path;
  std::string groundtruth_path;
  std::string out_dir;
  double iou_threshold = 0.5;
  std::optional<double> nms_threshold;  // run suppression before matching
  bool write_matches = false;
};
nlohmann::ordered_json run_eval_detect(const EvalDetectCmd& cmd);

struct EvalClassifyCmd {
  std::string predictions_path;
  std::string taxonomy_path;
  std::string out_dir;
};
nlohmann::ordered_json run_eval_classify(const EvalClassifyCmd& cmd);

// Statistic registry for bootstrap-ci. The statistic name picks the inputs:
//   mean:<column>          table_path + cluster_column
//   top1_accuracy, top2_accuracy, median_f1, mean_f1, macro_auroc
//                          predictions_path + cells_path (cells give the
//                          patient clustering)
//   detection_precision, detection_recall, detection_f1, detection_ap
//                          detections_path + groundtruth_path (regions are
//                          the clusters)
//   diagnosis_f1:<ALL|AML|CML>, diagnosis_mean_f1, diagnosis_accuracy
//                          features_path + model_path (patients are the
//                          clusters)
struct BootstrapCmd {
  std::string statistic;
  std::string table_path;
  std::string cluster_column;
  std::string predictions_path;
  std::string cells_path;
  std::string detections_path;
  std::string groundtruth_path;
  std::string features_path;
  std::string model_path;
  std::string taxonomy_path;
  std::string out_dir;
  double iou_threshold = 0.5;
  BootstrapOptions options;
};
nlohmann::ordered_json run_bootstrap_ci(const BootstrapCmd& cmd);

struct TrainDiagnosisCmd {
  std::string features_path;
  std::string out_dir;
  uint64_t seed = 1;
  // column block to train on: lab | dcc-clinical | dcc-predicted | lab+dcc
  std::string feature_set = "lab+dcc";
  bool grid = true;          // hyperparameter search vs. fixed params
  GbdtParams params;         // base (grid) or exact (no grid) parameters
  int32_t holdout_repeats = 20;
  double holdout_frac = 0.2;
};
nlohmann::ordered_json run_train_diagnosis(const TrainDiagnosisCmd& cmd);

struct PredictDiagnosisCmd {
  std::string features_path;
  std::string model_path;
  std::string out_dir;
};
nlohmann::ordered_json run_predict_diagnosis(const PredictDiagnosisCmd& cmd);

// The whole chain: consensus labels, cohort validation, patient split,
// count features, model selection and training, held-out evaluation, and
// patient-level confidence intervals on the test diagnosis scores.
struct EndToEndCmd {
  std::string observations_path;
  std::string cells_path;
  std::string patients_path;
  std::string taxonomy_path;
  std::string out_dir;
  uint64_t seed = 1;
  SplitRatios ratios;
  int32_t max_observers = 5;
  bool include_labs = false;
  bool nucleated_only = false;
  bool grid = true;
  GbdtParams params;
  int32_t holdout_repeats = 20;
  double holdout_frac = 0.2;
  BootstrapOptions ci;
};
nlohmann::ordered_json run_end_to_end(const EndToEndCmd& cmd);

// Renders a written report as markdown or csv (or pretty json). Returns the
// rendered text; writes it to out_path when set.
struct ReportCmd {
  std::string input_path;
  std::string format = "markdown";  // markdown | csv | json
  std::string out_path;
};
std::string render_report(const ReportCmd& cmd);

}  // namespace marrowbench
