#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "marrowbench/classify.hpp"
#include "marrowbench/core.hpp"
#include "marrowbench/io.hpp"

namespace marrowbench {

// Patient-level training table with integer labels. Feature values may be
// NaN (missing).
struct DiagnosisDataset {
  std::vector<std::string> ids;
  std::vector<int32_t> labels;  // indices into class_names
  std::vector<std::string> subtypes;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;
  std::vector<double> x;  // rows * features, row-major

  int64_t rows() const { return static_cast<int64_t>(ids.size()); }
  int64_t cols() const { return static_cast<int64_t>(feature_names.size()); }
  int32_t n_classes() const { return static_cast<int32_t>(class_names.size()); }
  double at(int64_t r, int64_t c) const {
    return x[static_cast<size_t>(r) * feature_names.size() + static_cast<size_t>(c)];
  }
};

// Interprets the label column as a diagnosis (ALL / AML / CML).
DiagnosisDataset dataset_from_features(const FeatureTable& table);

// Differential cell count features: per patient, the fraction of its
// consensus-labelled cells falling in each countable class. By default every
// model class is countable; nucleated_only restricts counting to the curated
// nucleated subset. Patients with no countable cells get an all-missing row
// (not zeros). Lab columns are appended when include_labs is set.
FeatureTable build_dcc_features(const Cohort& cohort, const Taxonomy& taxonomy,
                                bool include_labs = false,
                                bool nucleated_only = false);

// Model classes dropped from counting under the nucleated-only feature set.
const std::vector<std::string>& non_nucleated_classes();

struct GbdtParams {
  int32_t n_iterations = 150;
  double learning_rate = 0.1;
  int32_t max_leaves = 8;
  int32_t min_samples_leaf = 2;
  double l2 = 1.0;
  int32_t max_bins = 256;
};

struct TreeNode {
  int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0;  // go left when x <= threshold
  bool missing_left = true;
  int32_t left = -1;
  int32_t right = -1;
  double value = 0;  // leaf contribution, already scaled by the learning rate
};

struct Tree {
  std::vector<TreeNode> nodes;  // node 0 is the root
};

struct GbdtModel {
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;
  std::vector<double> base_scores;         // log priors
  GbdtParams params;
  std::vector<std::vector<Tree>> trees;    // [iteration][class]

  int32_t n_classes() const { return static_cast<int32_t>(class_names.size()); }
};

// Softmax gradients and diagonal Hessian of the multiclass log loss at one
// row of raw scores. Exposed for gradient verification.
void softmax_probs(const double* raw, int32_t k, double* probs);
void multiclass_grad_hess(const double* raw, int32_t k, int32_t label,
                          double* grad, double* hess);

// Mean multiclass log loss of raw-score rows against labels.
double multiclass_log_loss(const std::vector<double>& raw, int32_t k,
                           const std::vector<int32_t>& labels);

// Quantile bin upper edges for one feature. Missing values are ignored; a
// constant feature gets no edges (a single bin). At most max_bins bins.
std::vector<double> quantile_bin_edges(std::vector<double> values, int32_t max_bins);

// Bin index of a value: first edge with value <= edge, else the last bin.
int32_t bin_of(double value, const std::vector<double>& edges);

// Histogram-based gradient boosting with softmax objective. Rows are
// canonically re-sorted by id before training, so row order never affects
// the model. Trees grow best-first on quantile-binned features; missing
// values route to the gain-maximizing side. Throws unless every class is
// present in the training labels.
GbdtModel train_gbdt(const DiagnosisDataset& data, const GbdtParams& params);

namespace reference {
// Serial twin of train_gbdt; produces an identical model.
GbdtModel train_gbdt(const DiagnosisDataset& data, const GbdtParams& params);
}  // namespace reference

std::vector<double> predict_raw(const GbdtModel& m, const double* row);
std::vector<double> predict_proba(const GbdtModel& m, const double* row);

// Scores for a whole dataset, validating that feature names match the model
// schema. Returns rows * n_classes probabilities.
std::vector<double> predict_dataset(const GbdtModel& m, const DiagnosisDataset& d);

struct DiagnosisEval {
  ConfusionMatrix confusion;
  std::vector<ClassPrf> per_class;
  double macro_f1 = 0;
  double accuracy = 0;
};

DiagnosisEval evaluate_diagnosis(const GbdtModel& m, const DiagnosisDataset& d);

// --- hyperparameter search ---------------------------------------------------

struct GbdtGrid {
  std::vector<int32_t> n_iterations = {50, 150};
  std::vector<double> learning_rate = {0.1, 0.3};
  std::vector<int32_t> max_leaves = {4, 8};
  std::vector<double> l2 = {0.5, 2.0};
};

// Cartesian enumeration in field order; used for the deterministic
// first-wins tie break.
std::vector<GbdtParams> enumerate_grid(const GbdtGrid& grid, const GbdtParams& base);

struct GridPointScore {
  GbdtParams params;
  double mean_macro_f1 = 0;
  std::vector<double> per_repeat;
};

struct GridSearchResult {
  GbdtParams best;
  std::vector<GridPointScore> table;
};

// Repeated stratified holdouts: each repeat carves holdout_frac of every
// (label, subtype) stratum (at least one patient where the stratum allows),
// all grid points score against the same repeats, and the best mean macro F1
// wins with ties going to the earliest grid point.
GridSearchResult grid_search(const DiagnosisDataset& data, const GbdtGrid& grid,
                             const GbdtParams& base, int32_t n_repeats,
                             double holdout_frac, uint64_t seed);

// --- model persistence ---------------------------------------------------------

void save_model(const GbdtModel& m, const std::string& path);
GbdtModel load_model(const std::string& path);

}  // namespace marrowbench
