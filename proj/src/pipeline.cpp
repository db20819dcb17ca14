#include "marrowbench/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "marrowbench/classify.hpp"
#include "marrowbench/consensus.hpp"
#include "marrowbench/detect.hpp"
#include "marrowbench/error.hpp"
#include "marrowbench/hash.hpp"
#include "marrowbench/io.hpp"
#include "marrowbench/taxonomy.hpp"
#include "marrowbench/version.hpp"

namespace marrowbench {
namespace {

using nlohmann::ordered_json;

// JSON has no NaN/inf notation; reports carry non-finite values as null.
ordered_json num_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty() || dir == ".") return name;
  if (dir.back() == '/') return dir + name;
  return dir + "/" + name;
}

void ensure_out_dir(const std::string& dir, const char* stage) {
  if (dir.empty() || dir == ".") return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCode::io, stage,
                "cannot create directory " + dir + ": " + ec.message());
  }
}

// Every report records the exact input bytes it was computed from.
struct InputList {
  ordered_json entries = ordered_json::object();

  void add(const std::string& role, const std::string& path) {
    if (path.empty()) return;
    entries[role] = {{"path", path}, {"fnv1a64", fnv1a64_hex(read_file(path))}};
  }
};

ordered_json envelope(const char* kind, const InputList& inputs) {
  ordered_json j;
  j["format"] = "marrowbench.report";
  j["report_version"] = kReportFormatVersion;
  j["kind"] = kind;
  j["inputs"] = inputs.entries;
  return j;
}

void write_report(const std::string& path, const ordered_json& report) {
  write_file_atomic(path, report.dump(2) + "\n");
}

Taxonomy taxonomy_or_default(const std::string& path) {
  if (path.empty()) return default_taxonomy();
  return load_taxonomy(path);
}

ordered_json ratios_json(const SplitRatios& r) {
  return {{"train", r.train}, {"validation", r.validation}, {"test", r.test}};
}

ordered_json params_json(const GbdtParams& p) {
  return {{"n_iterations", p.n_iterations}, {"learning_rate", p.learning_rate},
          {"max_leaves", p.max_leaves},     {"min_samples_leaf", p.min_samples_leaf},
          {"l2", p.l2},                     {"max_bins", p.max_bins}};
}

ordered_json grid_table_json(const std::vector<GridPointScore>& table) {
  ordered_json out = ordered_json::array();
  for (const GridPointScore& p : table) {
    out.push_back({{"n_iterations", p.params.n_iterations},
                   {"learning_rate", p.params.learning_rate},
                   {"max_leaves", p.params.max_leaves},
                   {"l2", p.params.l2},
                   {"mean_macro_f1", num_or_null(p.mean_macro_f1)}});
  }
  return out;
}

ordered_json per_class_json(const std::vector<std::string>& names,
                            const std::vector<ClassPrf>& prf) {
  ordered_json out = ordered_json::array();
  for (size_t i = 0; i < prf.size(); ++i) {
    out.push_back({{"class", names[i]},
                   {"precision", prf[i].precision},
                   {"recall", prf[i].recall},
                   {"f1", prf[i].f1},
                   {"support", prf[i].support}});
  }
  return out;
}

ordered_json interval_json(const BootstrapResult& r) {
  return {{"estimate", num_or_null(r.estimate)},
          {"lower", num_or_null(r.lower)},
          {"upper", num_or_null(r.upper)},
          {"z0", num_or_null(r.z0)},
          {"acceleration", num_or_null(r.a)},
          {"replicates", r.b},
          {"dropped", r.dropped}};
}

// --- consensus over a stream ----------------------------------------------------

struct ResolvedStream {
  std::vector<CellConsensus> cells;
  AnnotationStats stats;
  int64_t n_consensus = 0;
  int64_t n_no_consensus = 0;
  int64_t n_pending = 0;
};

ResolvedStream resolve_observations(const std::vector<Observation>& obs,
                                    int32_t max_observers) {
  ResolvedStream r;
  r.cells = resolve_stream(obs, max_observers);
  r.stats = annotation_stats(obs, max_observers);
  for (const CellConsensus& c : r.cells) {
    switch (c.status.state) {
      case ConsensusState::consensus: r.n_consensus++; break;
      case ConsensusState::no_consensus: r.n_no_consensus++; break;
      case ConsensusState::pending: r.n_pending++; break;
    }
  }
  return r;
}

ordered_json consensus_summary_json(const ResolvedStream& r) {
  ordered_json j;
  j["totals"] = {{"cells", r.stats.n_cells},
                 {"observations", r.stats.n_observations},
                 {"consensus", r.n_consensus},
                 {"no_consensus", r.n_no_consensus},
                 {"pending", r.n_pending}};
  j["decided_at"] = {{"at_2", r.stats.decided_at_2},
                     {"at_3", r.stats.decided_at_3},
                     {"later", r.stats.decided_later},
                     {"none", r.stats.undecided}};
  j["fractions"] = {{"at_2", r.stats.frac_at_2},
                    {"at_3", r.stats.frac_at_3},
                    {"later", r.stats.frac_later},
                    {"none", r.stats.frac_none}};
  j["corrections"] = {{"overall", r.stats.correction_rate_overall},
                      {"among_disagreeing", r.stats.correction_rate_among_disagreeing}};
  j["median_labeling_s"] = r.stats.median_labeling_s
                               ? ordered_json(*r.stats.median_labeling_s)
                               : ordered_json(nullptr);
  j["median_validation_s"] = r.stats.median_validation_s
                                 ? ordered_json(*r.stats.median_validation_s)
                                 : ordered_json(nullptr);
  return j;
}

// Final label per decided cell, optionally reduced onto model classes.
std::map<std::string, std::string> consensus_labels(const ResolvedStream& r,
                                                    const Taxonomy& taxonomy,
                                                    bool reduce) {
  std::map<std::string, std::string> out;
  for (const CellConsensus& c : r.cells) {
    if (c.status.state != ConsensusState::consensus) continue;
    out[c.cell_id] = reduce ? map_class(taxonomy, c.status.label) : c.status.label;
  }
  return out;
}

// Rewrites every cell's label from the lookup; cells that never reached
// consensus come out unlabeled.
void apply_labels(std::vector<CellRecord>& cells,
                  const std::map<std::string, std::string>& label_of) {
  for (CellRecord& c : cells) {
    auto it = label_of.find(c.cell_id);
    if (it != label_of.end()) {
      c.consensus_label = it->second;
    } else {
      c.consensus_label.reset();
    }
  }
}

// --- shared statistic builders ----------------------------------------------------

enum class DiagStat { f1_class, mean_f1, accuracy };

// Set-level diagnosis score over precomputed truth/prediction class indices.
StatisticFn make_diagnosis_stat(std::shared_ptr<const std::vector<int32_t>> truth,
                                std::shared_ptr<const std::vector<int32_t>> predicted,
                                int32_t n_classes, DiagStat kind, int32_t target) {
  return [=](const std::vector<int64_t>& idx) -> double {
    if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<int64_t> tp(static_cast<size_t>(n_classes), 0);
    std::vector<int64_t> fp(static_cast<size_t>(n_classes), 0);
    std::vector<int64_t> fn(static_cast<size_t>(n_classes), 0);
    int64_t correct = 0;
    for (int64_t i : idx) {
      int32_t t = (*truth)[static_cast<size_t>(i)];
      int32_t p = (*predicted)[static_cast<size_t>(i)];
      if (t == p) {
        tp[static_cast<size_t>(t)]++;
        correct++;
      } else {
        fp[static_cast<size_t>(p)]++;
        fn[static_cast<size_t>(t)]++;
      }
    }
    if (kind == DiagStat::accuracy) {
      return static_cast<double>(correct) / static_cast<double>(idx.size());
    }
    auto f1_of = [&](int32_t c) {
      size_t k = static_cast<size_t>(c);
      double prec = tp[k] + fp[k] > 0
                        ? static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fp[k])
                        : 0.0;
      double rec = tp[k] + fn[k] > 0
                       ? static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fn[k])
                       : 0.0;
      return f1_score(prec, rec);
    };
    if (kind == DiagStat::f1_class) return f1_of(target);
    double sum = 0;
    for (int32_t c = 0; c < n_classes; ++c) sum += f1_of(c);
    return sum / static_cast<double>(n_classes);
  };
}

StatisticFn make_classification_stat(std::shared_ptr<const PredictionsFile> file,
                                     std::string metric) {
  return [file, metric = std::move(metric)](const std::vector<int64_t>& idx) -> double {
    const PredictionSet& all = file->preds;
    PredictionSet sub;
    sub.n_classes = all.n_classes;
    sub.truth.reserve(idx.size());
    sub.scores.reserve(idx.size() * static_cast<size_t>(all.n_classes));
    for (int64_t i : idx) {
      sub.truth.push_back(all.truth[static_cast<size_t>(i)]);
      const double* row = all.row(i);
      sub.scores.insert(sub.scores.end(), row, row + all.n_classes);
    }
    if (metric == "top1_accuracy") return topk_accuracy(sub, 1);
    if (metric == "top2_accuracy") return topk_accuracy(sub, 2);
    if (metric == "macro_auroc") return macro_ovr_auroc(sub);
    ConfusionMatrix m = confusion(sub);
    std::vector<ClassPrf> prf = per_class_prf(m);
    std::vector<double> f1s;
    f1s.reserve(prf.size());
    for (const ClassPrf& c : prf) f1s.push_back(c.f1);
    F1Aggregates agg = f1_aggregates(f1s);
    return metric == "median_f1" ? agg.median_f1 : agg.mean_f1;
  };
}

struct RoiEval {
  DetectionCounts counts;
  std::vector<MatchRecord> records;
  int64_t n_gt = 0;
};

// Region-level detection score; drawn regions pool their ranked records.
StatisticFn make_detection_stat(std::shared_ptr<const std::vector<RoiEval>> evals,
                                std::string metric) {
  return [evals, metric = std::move(metric)](const std::vector<int64_t>& idx) -> double {
    std::vector<int64_t> order(idx);
    std::sort(order.begin(), order.end());
    DetectionCounts total;
    int64_t n_gt = 0;
    for (int64_t i : order) {
      const RoiEval& e = (*evals)[static_cast<size_t>(i)];
      total.tp += e.counts.tp;
      total.fp += e.counts.fp;
      total.fn += e.counts.fn;
      n_gt += e.n_gt;
    }
    if (metric == "detection_ap") {
      std::vector<MatchRecord> pooled;
      for (int64_t i : order) {
        const RoiEval& e = (*evals)[static_cast<size_t>(i)];
        pooled.insert(pooled.end(), e.records.begin(), e.records.end());
      }
      std::stable_sort(pooled.begin(), pooled.end(),
                       [](const MatchRecord& a, const MatchRecord& b) {
                         return a.score > b.score;
                       });
      return average_precision(pooled, n_gt);
    }
    PrF p = detection_prf(total);
    if (metric == "detection_precision") return p.precision;
    if (metric == "detection_recall") return p.recall;
    return p.f1;
  };
}

double parse_double_field(const std::string& raw, const std::string& where) {
  size_t b = raw.find_first_not_of(" \t");
  size_t e = raw.find_last_not_of(" \t");
  if (b == std::string::npos) {
    throw Error(ErrorCode::schema, "bootstrap", "empty numeric value in " + where);
  }
  double v = 0;
  auto [p, ec] = std::from_chars(raw.data() + b, raw.data() + e + 1, v);
  if (ec != std::errc() || p != raw.data() + e + 1) {
    throw Error(ErrorCode::schema, "bootstrap",
                "bad numeric value '" + raw + "' in " + where);
  }
  return v;
}

// Truth and argmax-prediction class indices for a feature table under a
// trained model. The model must use the same class list as the table labels.
struct DiagPredictions {
  DiagnosisDataset data;
  std::vector<double> probs;
  std::shared_ptr<std::vector<int32_t>> truth;
  std::shared_ptr<std::vector<int32_t>> predicted;
};

DiagPredictions diagnose_table(const FeatureTable& table, const GbdtModel& model,
                               const char* stage) {
  DiagPredictions out;
  out.data = dataset_from_features(table);
  if (model.class_names != out.data.class_names) {
    throw Error(ErrorCode::precondition, stage,
                "model class list does not match the diagnosis labels");
  }
  out.probs = predict_dataset(model, out.data);
  out.truth = std::make_shared<std::vector<int32_t>>(out.data.labels);
  out.predicted = std::make_shared<std::vector<int32_t>>();
  out.predicted->reserve(static_cast<size_t>(out.data.rows()));
  for (int64_t i = 0; i < out.data.rows(); ++i) {
    out.predicted->push_back(argmax_class(
        out.probs.data() + static_cast<size_t>(i) * static_cast<size_t>(model.n_classes()),
        model.n_classes()));
  }
  return out;
}

// patient_id, truth, one probability column per class, argmax prediction.
void write_diagnosis_predictions(const std::string& path, const DiagPredictions& d,
                                 const GbdtModel& model) {
  Csv csv;
  csv.header = {"patient_id", "truth"};
  for (const std::string& n : model.class_names) csv.header.push_back(n);
  csv.header.push_back("predicted");
  for (int64_t i = 0; i < d.data.rows(); ++i) {
    std::vector<std::string> row;
    row.push_back(d.data.ids[static_cast<size_t>(i)]);
    row.push_back(d.data.class_names[static_cast<size_t>((*d.truth)[static_cast<size_t>(i)])]);
    for (int32_t k = 0; k < model.n_classes(); ++k) {
      row.push_back(format_double(
          d.probs[static_cast<size_t>(i) * static_cast<size_t>(model.n_classes()) +
                  static_cast<size_t>(k)]));
    }
    row.push_back(model.class_names[static_cast<size_t>((*d.predicted)[static_cast<size_t>(i)])]);
    csv.rows.push_back(std::move(row));
  }
  write_file_atomic(path, format_csv(csv));
}

// Keeps the columns of the named feature block. The dcc-clinical and
// dcc-predicted sets share the dcc: schema; which one a table holds depends
// on how it was produced.
FeatureTable select_feature_set(const FeatureTable& t, const std::string& set,
                                const char* stage) {
  std::string prefix;
  if (set == "lab") {
    prefix = "lab:";
  } else if (set == "dcc-clinical" || set == "dcc-predicted") {
    prefix = "dcc:";
  } else if (set == "lab+dcc") {
    return t;
  } else {
    throw Error(ErrorCode::usage, stage,
                "unknown feature set '" + set +
                    "'; expected lab, dcc-clinical, dcc-predicted, or lab+dcc");
  }
  FeatureTable out;
  out.ids = t.ids;
  out.labels = t.labels;
  out.subtypes = t.subtypes;
  std::vector<int64_t> cols;
  for (int64_t c = 0; c < t.cols(); ++c) {
    if (t.feature_names[static_cast<size_t>(c)].rfind(prefix, 0) == 0) {
      cols.push_back(c);
      out.feature_names.push_back(t.feature_names[static_cast<size_t>(c)]);
    }
  }
  if (cols.empty()) {
    throw Error(ErrorCode::precondition, stage,
                "the table has no '" + prefix + "' columns");
  }
  for (int64_t r = 0; r < t.rows(); ++r) {
    for (int64_t c : cols) out.values.push_back(t.at(r, c));
  }
  return out;
}

FeatureTable subset_features(const FeatureTable& t, const std::vector<int64_t>& rows) {
  FeatureTable out;
  out.feature_names = t.feature_names;
  for (int64_t r : rows) {
    out.ids.push_back(t.ids[static_cast<size_t>(r)]);
    out.labels.push_back(t.labels[static_cast<size_t>(r)]);
    out.subtypes.push_back(t.subtypes[static_cast<size_t>(r)]);
    for (int64_t c = 0; c < t.cols(); ++c) out.values.push_back(t.at(r, c));
  }
  return out;
}

// One size-1 cluster per row id; duplicate ids group into one cluster.
ClusteredSample clusters_by_id(const std::vector<std::string>& ids) {
  std::map<std::string, std::vector<int64_t>> groups;
  for (size_t i = 0; i < ids.size(); ++i) {
    groups[ids[i]].push_back(static_cast<int64_t>(i));
  }
  ClusteredSample s;
  for (auto& [id, items] : groups) {
    s.cluster_ids.push_back(id);
    s.clusters.push_back(std::move(items));
  }
  return s;
}

}  // namespace

// --- consensus ---------------------------------------------------------------------

ordered_json run_consensus(const ConsensusCmd& cmd) {
  ensure_out_dir(cmd.out_dir, "consensus");
  InputList inputs;
  inputs.add("observations", cmd.observations_path);
  inputs.add("cells", cmd.cells_path);
  inputs.add("taxonomy", cmd.taxonomy_path);

  Taxonomy taxonomy = taxonomy_or_default(cmd.taxonomy_path);
  std::vector<Observation> obs = read_observations_jsonl(cmd.observations_path);
  ResolvedStream resolved = resolve_observations(obs, cmd.max_observers);
  std::map<std::string, std::string> label_of =
      consensus_labels(resolved, taxonomy, cmd.reduce);

  std::map<std::string, int64_t> label_counts;
  for (const auto& [cell, label] : label_of) label_counts[label]++;

  ordered_json report = envelope("consensus", inputs);
  report["options"] = {{"max_observers", cmd.max_observers}, {"reduce", cmd.reduce}};
  ordered_json summary = consensus_summary_json(resolved);
  for (auto& kv : summary.items()) report[kv.key()] = kv.value();
  report["label_counts"] = label_counts;

  ordered_json outputs = ordered_json::object();
  if (!cmd.cells_path.empty()) {
    std::vector<CellRecord> cells = read_cells_jsonl(cmd.cells_path);
    apply_labels(cells, label_of);
    std::string cells_out = join_path(cmd.out_dir, "cells_labeled.jsonl");
    write_cells_jsonl(cells_out, cells);
    outputs["cells"] = cells_out;
  }
  std::string report_path = join_path(cmd.out_dir, "consensus_report.json");
  outputs["report"] = report_path;
  report["outputs"] = outputs;
  write_report(report_path, report);
  return report;
}

// --- split -------------------------------------------------------------------------

ordered_json run_split(const SplitCmd& cmd) {
  ensure_out_dir(cmd.out_dir, "split");
  InputList inputs;
  inputs.add("patients", cmd.patients_path);
  inputs.add("cells", cmd.cells_path);
  inputs.add("taxonomy", cmd.taxonomy_path);

  Taxonomy taxonomy = taxonomy_or_default(cmd.taxonomy_path);
  Cohort cohort;
  cohort.patients = read_patients_csv(cmd.patients_path);
  if (!cmd.cells_path.empty()) cohort.cells = read_cells_jsonl(cmd.cells_path);

  SplitAssignment assignment = initial_assign(cohort.patients, cmd.ratios, cmd.seed);
  int64_t swaps = 0;
  if (cmd.refine) swaps = swap_refine(cohort, taxonomy, assignment);
  for (PatientRecord& p : cohort.patients) {
    p.split = assignment.by_patient.at(p.patient_id);
  }
  SplitSummary summary = summarize_split(cohort, taxonomy, assignment);

  std::string patients_out = join_path(cmd.out_dir, "patients_split.csv");
  write_patients_csv(patients_out, cohort.patients);

  ordered_json report = envelope("split", inputs);
  report["options"] = {{"ratios", ratios_json(cmd.ratios)},
                       {"seed", cmd.seed},
                       {"refine", cmd.refine}};
  report["n_patients"] = cohort.patients.size();
  report["n_cells"] = cohort.cells.size();
  report["swaps_applied"] = swaps;
  report["sizes"] = {{"train", summary.sizes[0]},
                     {"validation", summary.sizes[1]},
                     {"test", summary.sizes[2]}};
  ordered_json diag = ordered_json::object();
  for (int s = 0; s < 3; ++s) {
    ordered_json row = ordered_json::object();
    for (int d = 0; d < 3; ++d) {
      row[kDiagnosisNames[static_cast<size_t>(d)]] =
          summary.diagnosis[static_cast<size_t>(s)][static_cast<size_t>(d)];
    }
    diag[split_name(static_cast<SplitSet>(s))] = row;
  }
  report["diagnosis"] = diag;
  report["objective"] = num_or_null(summary.objective);
  std::string report_path = join_path(cmd.out_dir, "split_report.json");
  report["outputs"] = {{"patients", patients_out}, {"report", report_path}};
  write_report(report_path, report);
  return report;
}

// --- detection evaluation -------------------------------------------------------------

ordered_json run_eval_detect(const EvalDetectCmd& cmd) {
  ensure_out_dir(cmd.out_dir, "eval-detect");
  InputList inputs;
  inputs.add("detections", cmd.detections_path);
  inputs.add("groundtruth", cmd.groundtruth_path);

  std::map<std::string, std::vector<Detection>> dets_by_roi =
      read_detections_jsonl(cmd.detections_path);
  std::map<std::string, std::vector<BoundingBox>> gts_by_roi =
      read_groundtruth_jsonl(cmd.groundtruth_path);

  std::set<std::string> rois;
  for (const auto& [roi, d] : dets_by_roi) rois.insert(roi);
  for (const auto& [roi, g] : gts_by_roi) rois.insert(roi);

  DetectionCounts total;
  int64_t total_gt = 0;
  std::vector<MatchRecord> pooled;
  ordered_json per_roi = ordered_json::array();
  std::string matches_text;
  for (const std::string& roi : rois) {
    auto dit = dets_by_roi.find(roi);
    std::vector<Detection> dets =
        dit != dets_by_roi.end() ? dit->second : std::vector<Detection>{};
    if (cmd.nms_threshold) dets = nms(dets, *cmd.nms_threshold);
    auto git = gts_by_roi.find(roi);
    const std::vector<BoundingBox>& gts =
        git != gts_by_roi.end() ? git->second : std::vector<BoundingBox>{};

    MatchResult m = match_detections(dets, gts, cmd.iou_threshold);
    total.tp += m.counts.tp;
    total.fp += m.counts.fp;
    total.fn += m.counts.fn;
    total_gt += static_cast<int64_t>(gts.size());

    PrF prf = detection_prf(m.counts);
    per_roi.push_back({{"roi", roi},
                       {"n_detections", dets.size()},
                       {"n_groundtruth", gts.size()},
                       {"tp", m.counts.tp},
                       {"fp", m.counts.fp},
                       {"fn", m.counts.fn},
                       {"precision", prf.precision},
                       {"recall", prf.recall},
                       {"f1", prf.f1},
                       {"ap", num_or_null(average_precision(m))}});
    if (cmd.write_matches) {
      for (const MatchRecord& r : m.records) {
        ordered_json line = {{"roi", roi},
                             {"det_index", r.det_index},
                             {"gt_index", r.gt_index},
                             {"score", r.score},
                             {"is_tp", r.is_tp}};
        matches_text += line.dump() + "\n";
      }
    }
    pooled.insert(pooled.end(), m.records.begin(), m.records.end());
  }
  std::stable_sort(pooled.begin(), pooled.end(),
                   [](const MatchRecord& a, const MatchRecord& b) {
                     return a.score > b.score;
                   });
  PrF overall = detection_prf(total);

  ordered_json report = envelope("detection", inputs);
  report["options"] = {
      {"iou_threshold", cmd.iou_threshold},
      {"nms_threshold", cmd.nms_threshold ? ordered_json(*cmd.nms_threshold)
                                          : ordered_json(nullptr)},
  };
  report["n_rois"] = rois.size();
  report["overall"] = {{"tp", total.tp},
                       {"fp", total.fp},
                       {"fn", total.fn},
                       {"precision", overall.precision},
                       {"recall", overall.recall},
                       {"f1", overall.f1},
                       {"ap", num_or_null(average_precision(pooled, total_gt))}};
  report["per_roi"] = per_roi;

  ordered_json outputs = ordered_json::object();
  if (cmd.write_matches) {
    std::string matches_out = join_path(cmd.out_dir, "matches.jsonl");
    write_file_atomic(matches_out, matches_text);
    outputs["matches"] = matches_out;
  }
  std::string report_path = join_path(cmd.out_dir, "detect_report.json");
  outputs["report"] = report_path;
  report["outputs"] = outputs;
  write_report(report_path, report);
  return report;
}

// --- classification evaluation ----------------------------------------------------------

ordered_json run_eval_classify(const EvalClassifyCmd& cmd) {
  ensure_out_dir(cmd.out_dir, "eval-classify");
  InputList inputs;
  inputs.add("predictions", cmd.predictions_path);
  inputs.add("taxonomy", cmd.taxonomy_path);

  Taxonomy taxonomy = taxonomy_or_default(cmd.taxonomy_path);
  PredictionsFile file = read_predictions_csv(cmd.predictions_path, taxonomy);

  ConfusionMatrix m = confusion(file.preds);
  std::vector<ClassPrf> prf = per_class_prf(m);
  std::vector<double> f1s;
  f1s.reserve(prf.size());
  for (const ClassPrf& c : prf) f1s.push_back(c.f1);
  F1Aggregates agg = f1_aggregates(f1s);

  ordered_json report = envelope("classification", inputs);
  report["n_rows"] = file.preds.rows();
  report["n_classes"] = file.preds.n_classes;
  report["metrics"] = {{"top1_accuracy", topk_accuracy(file.preds, 1)},
                       {"top2_accuracy", topk_accuracy(file.preds, 2)},
                       {"median_f1", agg.median_f1},
                       {"mean_f1", agg.mean_f1},
                       {"macro_auroc", num_or_null(macro_ovr_auroc(file.preds))}};
  report["per_class"] = per_class_json(taxonomy.model_classes, prf);
  ordered_json confusion_rows = ordered_json::array();
  for (int32_t t = 0; t < m.n_classes; ++t) {
    ordered_json row = ordered_json::array();
    for (int32_t p = 0; p < m.n_classes; ++p) row.push_back(m.at(t, p));
    confusion_rows.push_back(row);
  }
  report["confusion"] = confusion_rows;
  std::string report_path = join_path(cmd.out_dir, "classify_report.json");
  report["outputs"] = {{"report", report_path}};
  write_report(report_path, report);
  return report;
}

// --- bootstrap intervals ---------------------------------------------------------------

ordered_json run_bootstrap_ci(const BootstrapCmd& cmd) {
  ensure_out_dir(cmd.out_dir, "bootstrap");
  const std::string& name = cmd.statistic;
  auto require = [&](const std::string& path, const char* flag) -> const std::string& {
    if (path.empty()) {
      throw Error(ErrorCode::usage, "bootstrap",
                  "statistic " + name + " needs " + flag);
    }
    return path;
  };

  InputList inputs;
  ClusteredSample sample;
  StatisticFn stat;
  bool detection = false;

  if (name.rfind("mean:", 0) == 0) {
    std::string column = name.substr(5);
    require(cmd.table_path, "--table");
    if (cmd.cluster_column.empty()) {
      throw Error(ErrorCode::usage, "bootstrap",
                  "statistic " + name + " needs --cluster-column");
    }
    inputs.add("table", cmd.table_path);
    Csv csv = read_csv(cmd.table_path);
    int64_t vc = csv.column(column);
    int64_t cc = csv.column(cmd.cluster_column);
    if (vc < 0) {
      throw Error(ErrorCode::schema, "bootstrap", "no column named " + column);
    }
    if (cc < 0) {
      throw Error(ErrorCode::schema, "bootstrap",
                  "no column named " + cmd.cluster_column);
    }
    auto values = std::make_shared<std::vector<double>>();
    std::map<std::string, std::vector<int64_t>> groups;
    for (size_t i = 0; i < csv.rows.size(); ++i) {
      values->push_back(parse_double_field(csv.rows[i][static_cast<size_t>(vc)],
                                           "row " + std::to_string(i + 2)));
      groups[csv.rows[i][static_cast<size_t>(cc)]].push_back(static_cast<int64_t>(i));
    }
    for (auto& [id, items] : groups) {
      sample.cluster_ids.push_back(id);
      sample.clusters.push_back(std::move(items));
    }
    stat = [values](const std::vector<int64_t>& idx) -> double {
      double sum = 0;
      for (int64_t i : idx) sum += (*values)[static_cast<size_t>(i)];
      return sum / static_cast<double>(idx.size());
    };
  } else if (name == "top1_accuracy" || name == "top2_accuracy" ||
             name == "median_f1" || name == "mean_f1" || name == "macro_auroc") {
    require(cmd.predictions_path, "--predictions");
    require(cmd.cells_path, "--cells");
    inputs.add("predictions", cmd.predictions_path);
    inputs.add("cells", cmd.cells_path);
    inputs.add("taxonomy", cmd.taxonomy_path);
    Taxonomy taxonomy = taxonomy_or_default(cmd.taxonomy_path);
    auto file = std::make_shared<PredictionsFile>(
        read_predictions_csv(cmd.predictions_path, taxonomy));
    std::vector<CellRecord> cells = read_cells_jsonl(cmd.cells_path);
    std::map<std::string, std::string> patient_of;
    for (const CellRecord& c : cells) patient_of[c.cell_id] = c.patient_id;
    std::map<std::string, std::vector<int64_t>> groups;
    for (int64_t i = 0; i < file->preds.rows(); ++i) {
      const std::string& cell = file->cell_ids[static_cast<size_t>(i)];
      auto it = patient_of.find(cell);
      if (it == patient_of.end()) {
        throw Error(ErrorCode::precondition, "bootstrap",
                    "prediction row for unknown cell " + cell);
      }
      groups[it->second].push_back(i);
    }
    for (auto& [id, items] : groups) {
      sample.cluster_ids.push_back(id);
      sample.clusters.push_back(std::move(items));
    }
    stat = make_classification_stat(file, name);
  } else if (name == "detection_precision" || name == "detection_recall" ||
             name == "detection_f1" || name == "detection_ap") {
    detection = true;
    require(cmd.detections_path, "--detections");
    require(cmd.groundtruth_path, "--groundtruth");
    inputs.add("detections", cmd.detections_path);
    inputs.add("groundtruth", cmd.groundtruth_path);
    std::map<std::string, std::vector<Detection>> dets_by_roi =
        read_detections_jsonl(cmd.detections_path);
    std::map<std::string, std::vector<BoundingBox>> gts_by_roi =
        read_groundtruth_jsonl(cmd.groundtruth_path);
    std::set<std::string> rois;
    for (const auto& [roi, d] : dets_by_roi) rois.insert(roi);
    for (const auto& [roi, g] : gts_by_roi) rois.insert(roi);
    auto evals = std::make_shared<std::vector<RoiEval>>();
    for (const std::string& roi : rois) {
      auto dit = dets_by_roi.find(roi);
      auto git = gts_by_roi.find(roi);
      const std::vector<Detection> dets =
          dit != dets_by_roi.end() ? dit->second : std::vector<Detection>{};
      const std::vector<BoundingBox> gts =
          git != gts_by_roi.end() ? git->second : std::vector<BoundingBox>{};
      MatchResult m = match_detections(dets, gts, cmd.iou_threshold);
      evals->push_back({m.counts, std::move(m.records), static_cast<int64_t>(gts.size())});
      sample.cluster_ids.push_back(roi);
      sample.clusters.push_back({static_cast<int64_t>(evals->size()) - 1});
    }
    stat = make_detection_stat(evals, name);
  } else if (name.rfind("diagnosis_", 0) == 0) {
    require(cmd.features_path, "--features");
    require(cmd.model_path, "--model");
    inputs.add("features", cmd.features_path);
    inputs.add("model", cmd.model_path);
    FeatureTable table = read_features_csv(cmd.features_path);
    GbdtModel model = load_model(cmd.model_path);
    DiagPredictions d = diagnose_table(table, model, "bootstrap");
    DiagStat kind = DiagStat::mean_f1;
    int32_t target = -1;
    if (name == "diagnosis_mean_f1") {
      kind = DiagStat::mean_f1;
    } else if (name == "diagnosis_accuracy") {
      kind = DiagStat::accuracy;
    } else if (name.rfind("diagnosis_f1:", 0) == 0) {
      kind = DiagStat::f1_class;
      std::string cls = name.substr(std::string("diagnosis_f1:").size());
      for (size_t k = 0; k < model.class_names.size(); ++k) {
        if (model.class_names[k] == cls) target = static_cast<int32_t>(k);
      }
      if (target < 0) {
        throw Error(ErrorCode::usage, "bootstrap",
                    "unknown diagnosis class: " + cls);
      }
    } else {
      throw Error(ErrorCode::usage, "bootstrap", "unknown statistic: " + name);
    }
    sample = clusters_by_id(d.data.ids);
    stat = make_diagnosis_stat(d.truth, d.predicted, model.n_classes(), kind, target);
  } else {
    throw Error(ErrorCode::usage, "bootstrap", "unknown statistic: " + name);
  }

  BootstrapResult res = bootstrap_ci(sample, stat, cmd.options);

  ordered_json report = envelope("bootstrap", inputs);
  report["statistic"] = name;
  ordered_json options = {{"b", cmd.options.b},
                          {"alpha", cmd.options.alpha},
                          {"seed", cmd.options.seed},
                          {"mode", resample_mode_name(cmd.options.mode)}};
  if (detection) options["iou_threshold"] = cmd.iou_threshold;
  report["options"] = options;
  report["clusters"] = {{"count", sample.cluster_ids.size()},
                        {"items", sample.total_items()}};
  report["result"] = interval_json(res);
  std::string report_path = join_path(cmd.out_dir, "bootstrap_report.json");
  report["outputs"] = {{"report", report_path}};
  write_report(report_path, report);
  return report;
}

// --- diagnosis training ------------------------------------------------------------------

ordered_json run_train_diagnosis(const TrainDiagnosisCmd& cmd) {
  ensure_out_dir(cmd.out_dir, "train-diagnosis");
  InputList inputs;
  inputs.add("features", cmd.features_path);

  FeatureTable table = select_feature_set(read_features_csv(cmd.features_path),
                                          cmd.feature_set, "train");
  DiagnosisDataset data = dataset_from_features(table);

  GbdtParams chosen = cmd.params;
  ordered_json grid_json;
  if (cmd.grid) {
    GridSearchResult gs = grid_search(data, GbdtGrid{}, cmd.params,
                                      cmd.holdout_repeats, cmd.holdout_frac, cmd.seed);
    chosen = gs.best;
    grid_json = grid_table_json(gs.table);
  }
  GbdtModel model = train_gbdt(data, chosen);
  DiagnosisEval eval = evaluate_diagnosis(model, data);

  std::string model_path = join_path(cmd.out_dir, "model.json");
  save_model(model, model_path);

  std::map<std::string, int64_t> label_counts;
  for (int32_t label : data.labels) {
    label_counts[data.class_names[static_cast<size_t>(label)]]++;
  }

  ordered_json report = envelope("train_diagnosis", inputs);
  report["options"] = {{"seed", cmd.seed},
                       {"feature_set", cmd.feature_set},
                       {"grid", cmd.grid},
                       {"holdout_repeats", cmd.holdout_repeats},
                       {"holdout_frac", cmd.holdout_frac}};
  report["data"] = {{"n_patients", data.rows()},
                    {"n_features", data.cols()},
                    {"label_counts", label_counts}};
  report["params"] = params_json(chosen);
  if (cmd.grid) report["grid_search"] = grid_json;
  report["training_fit"] = {{"accuracy", eval.accuracy},
                            {"macro_f1", eval.macro_f1},
                            {"per_class", per_class_json(data.class_names, eval.per_class)}};
  std::string report_path = join_path(cmd.out_dir, "train_report.json");
  report["outputs"] = {{"model", model_path}, {"report", report_path}};
  write_report(report_path, report);
  return report;
}

// --- diagnosis prediction ------------------------------------------------------------------

ordered_json run_predict_diagnosis(const PredictDiagnosisCmd& cmd) {
  ensure_out_dir(cmd.out_dir, "predict-diagnosis");
  InputList inputs;
  inputs.add("features", cmd.features_path);
  inputs.add("model", cmd.model_path);

  FeatureTable table = read_features_csv(cmd.features_path);
  GbdtModel model = load_model(cmd.model_path);
  DiagPredictions d = diagnose_table(table, model, "predict-diagnosis");
  DiagnosisEval eval = evaluate_diagnosis(model, d.data);

  std::string preds_path = join_path(cmd.out_dir, "diagnosis_predictions.csv");
  write_diagnosis_predictions(preds_path, d, model);

  ordered_json report = envelope("predict_diagnosis", inputs);
  report["n_patients"] = d.data.rows();
  report["metrics"] = {{"accuracy", eval.accuracy}, {"macro_f1", eval.macro_f1}};
  report["per_class"] = per_class_json(model.class_names, eval.per_class);
  std::string report_path = join_path(cmd.out_dir, "predict_report.json");
  report["outputs"] = {{"predictions", preds_path}, {"report", report_path}};
  write_report(report_path, report);
  return report;
}

// --- end to end ----------------------------------------------------------------------------

ordered_json run_end_to_end(const EndToEndCmd& cmd) {
  ensure_out_dir(cmd.out_dir, "end-to-end");
  InputList inputs;
  inputs.add("observations", cmd.observations_path);
  inputs.add("cells", cmd.cells_path);
  inputs.add("patients", cmd.patients_path);
  inputs.add("taxonomy", cmd.taxonomy_path);

  Taxonomy taxonomy = taxonomy_or_default(cmd.taxonomy_path);

  // consensus labels onto the cell table
  std::vector<Observation> obs = read_observations_jsonl(cmd.observations_path);
  ResolvedStream resolved = resolve_observations(obs, cmd.max_observers);
  std::map<std::string, std::string> label_of =
      consensus_labels(resolved, taxonomy, true);

  Cohort cohort;
  cohort.patients = read_patients_csv(cmd.patients_path);
  cohort.cells = read_cells_jsonl(cmd.cells_path);
  apply_labels(cohort.cells, label_of);
  int64_t n_labeled = 0;
  for (const CellRecord& c : cohort.cells) {
    if (c.consensus_label) n_labeled++;
  }

  std::vector<ValidationIssue> issues = validate_cohort(cohort, taxonomy);
  if (!issues.empty()) {
    throw Error(ErrorCode::precondition, "validate",
                std::to_string(issues.size()) + " cohort issues, first: " +
                    issues[0].kind + " " + issues[0].id + " " + issues[0].detail);
  }

  // patient split: honor a complete existing assignment, otherwise assign
  int64_t n_assigned = 0;
  for (const PatientRecord& p : cohort.patients) {
    if (p.split != SplitSet::unassigned) n_assigned++;
  }
  SplitAssignment assignment;
  int64_t swaps = 0;
  bool reused_split = false;
  if (n_assigned == static_cast<int64_t>(cohort.patients.size()) &&
      !cohort.patients.empty()) {
    for (const PatientRecord& p : cohort.patients) {
      assignment.by_patient[p.patient_id] = p.split;
    }
    reused_split = true;
  } else if (n_assigned == 0) {
    assignment = initial_assign(cohort.patients, cmd.ratios, cmd.seed);
    swaps = swap_refine(cohort, taxonomy, assignment);
    for (PatientRecord& p : cohort.patients) {
      p.split = assignment.by_patient.at(p.patient_id);
    }
  } else {
    throw Error(ErrorCode::precondition, "split",
                "patients are partly assigned to sets; clear or complete the "
                "split column");
  }
  SplitSummary split_summary = summarize_split(cohort, taxonomy, assignment);
  if (split_summary.sizes[0] == 0 || split_summary.sizes[2] == 0) {
    throw Error(ErrorCode::precondition, "split",
                "train and test sets must both be non-empty");
  }

  // count features; the model trains on train plus validation
  FeatureTable features =
      build_dcc_features(cohort, taxonomy, cmd.include_labs, cmd.nucleated_only);
  std::vector<int64_t> train_rows, test_rows;
  for (int64_t r = 0; r < features.rows(); ++r) {
    SplitSet s = assignment.by_patient.at(features.ids[static_cast<size_t>(r)]);
    if (s == SplitSet::train || s == SplitSet::validation) {
      train_rows.push_back(r);
    } else {
      test_rows.push_back(r);
    }
  }
  FeatureTable train_table = subset_features(features, train_rows);
  FeatureTable test_table = subset_features(features, test_rows);
  DiagnosisDataset train_data = dataset_from_features(train_table);

  GbdtParams chosen = cmd.params;
  ordered_json grid_json;
  if (cmd.grid) {
    GridSearchResult gs = grid_search(train_data, GbdtGrid{}, cmd.params,
                                      cmd.holdout_repeats, cmd.holdout_frac, cmd.seed);
    chosen = gs.best;
    grid_json = grid_table_json(gs.table);
  }
  GbdtModel model = train_gbdt(train_data, chosen);

  // held-out evaluation with patient-level intervals
  DiagPredictions test_pred = diagnose_table(test_table, model, "end-to-end");
  DiagnosisEval test_eval = evaluate_diagnosis(model, test_pred.data);

  BootstrapOptions ci = cmd.ci;
  ci.seed = cmd.seed;
  ClusteredSample sample = clusters_by_id(test_pred.data.ids);
  ordered_json intervals = ordered_json::object();
  for (int32_t k = 0; k < model.n_classes(); ++k) {
    StatisticFn stat = make_diagnosis_stat(test_pred.truth, test_pred.predicted,
                                           model.n_classes(), DiagStat::f1_class, k);
    intervals["f1_" + model.class_names[static_cast<size_t>(k)]] =
        interval_json(bootstrap_ci(sample, stat, ci));
  }
  StatisticFn mean_stat = make_diagnosis_stat(test_pred.truth, test_pred.predicted,
                                              model.n_classes(), DiagStat::mean_f1, -1);
  intervals["mean_f1"] = interval_json(bootstrap_ci(sample, mean_stat, ci));

  // outputs
  std::string cells_out = join_path(cmd.out_dir, "cells_labeled.jsonl");
  write_cells_jsonl(cells_out, cohort.cells);
  std::string patients_out = join_path(cmd.out_dir, "patients_split.csv");
  write_patients_csv(patients_out, cohort.patients);
  std::string features_out = join_path(cmd.out_dir, "features.csv");
  write_features_csv(features_out, features);
  std::string model_out = join_path(cmd.out_dir, "model.json");
  save_model(model, model_out);
  std::string preds_out = join_path(cmd.out_dir, "test_predictions.csv");
  write_diagnosis_predictions(preds_out, test_pred, model);

  ordered_json report = envelope("end_to_end", inputs);
  report["options"] = {{"seed", cmd.seed},
                       {"ratios", ratios_json(cmd.ratios)},
                       {"max_observers", cmd.max_observers},
                       {"include_labs", cmd.include_labs},
                       {"nucleated_only", cmd.nucleated_only},
                       {"grid", cmd.grid},
                       {"holdout_repeats", cmd.holdout_repeats},
                       {"holdout_frac", cmd.holdout_frac},
                       {"ci", {{"b", ci.b},
                               {"alpha", ci.alpha},
                               {"mode", resample_mode_name(ci.mode)}}}};
  report["consensus"] = consensus_summary_json(resolved);
  report["split"] = {{"reused", reused_split},
                     {"swaps_applied", swaps},
                     {"sizes", {{"train", split_summary.sizes[0]},
                                {"validation", split_summary.sizes[1]},
                                {"test", split_summary.sizes[2]}}},
                     {"objective", num_or_null(split_summary.objective)}};
  report["features"] = {{"n_patients", features.rows()},
                        {"n_features", features.cols()},
                        {"n_labeled_cells", n_labeled}};
  report["model"] = {{"params", params_json(chosen)}};
  if (cmd.grid) report["model"]["grid_search"] = grid_json;
  report["test"] = {{"n_patients", test_pred.data.rows()},
                    {"accuracy", test_eval.accuracy},
                    {"macro_f1", test_eval.macro_f1},
                    {"per_class", per_class_json(model.class_names, test_eval.per_class)}};
  report["intervals"] = intervals;
  std::string report_path = join_path(cmd.out_dir, "end_to_end_report.json");
  report["outputs"] = {{"cells", cells_out},
                       {"patients", patients_out},
                       {"features", features_out},
                       {"model", model_out},
                       {"predictions", preds_out},
                       {"report", report_path}};
  write_report(report_path, report);
  return report;
}

// --- report rendering -----------------------------------------------------------------------

namespace {

bool is_scalar(const ordered_json& v) { return !v.is_object() && !v.is_array(); }

std::string scalar_text(const ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string md_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

std::vector<std::string> object_keys(const ordered_json& o) {
  std::vector<std::string> keys;
  for (auto it = o.begin(); it != o.end(); ++it) keys.push_back(it.key());
  return keys;
}

// Array of objects with identical keys and scalar values renders as a table.
bool is_uniform_table(const ordered_json& v) {
  if (!v.is_array() || v.empty() || !v[0].is_object()) return false;
  std::vector<std::string> keys = object_keys(v[0]);
  if (keys.empty()) return false;
  for (const auto& row : v) {
    if (!row.is_object() || object_keys(row) != keys) return false;
    for (const auto& kv : row.items()) {
      if (!is_scalar(kv.value())) return false;
    }
  }
  return true;
}

// Object whose members are all objects with identical scalar keys renders as
// a table keyed by member name (inputs, intervals, per-set counts).
bool is_keyed_table(const ordered_json& v) {
  if (!v.is_object() || v.empty()) return false;
  std::vector<std::string> keys;
  for (const auto& kv : v.items()) {
    if (!kv.value().is_object()) return false;
    std::vector<std::string> row_keys = object_keys(kv.value());
    if (row_keys.empty()) return false;
    if (keys.empty()) keys = row_keys;
    if (row_keys != keys) return false;
    for (const auto& cell : kv.value().items()) {
      if (!is_scalar(cell.value())) return false;
    }
  }
  return true;
}

void md_table_row(std::string& out, const std::vector<std::string>& cells) {
  out += "|";
  for (const std::string& c : cells) out += " " + md_escape(c) + " |";
  out += "\n";
}

void md_table_rule(std::string& out, size_t n) {
  out += "|";
  for (size_t i = 0; i < n; ++i) out += " --- |";
  out += "\n";
}

void render_md(std::string& out, int level, const std::string& name,
               const ordered_json& v) {
  std::string heading(static_cast<size_t>(level), '#');
  if (is_uniform_table(v)) {
    out += "\n" + heading + " " + name + "\n\n";
    std::vector<std::string> keys = object_keys(v[0]);
    md_table_row(out, keys);
    md_table_rule(out, keys.size());
    for (const auto& row : v) {
      std::vector<std::string> cells;
      for (const std::string& k : keys) cells.push_back(scalar_text(row[k]));
      md_table_row(out, cells);
    }
    return;
  }
  if (is_keyed_table(v)) {
    out += "\n" + heading + " " + name + "\n\n";
    std::vector<std::string> keys = object_keys(v.begin().value());
    std::vector<std::string> header = {"name"};
    header.insert(header.end(), keys.begin(), keys.end());
    md_table_row(out, header);
    md_table_rule(out, header.size());
    for (const auto& kv : v.items()) {
      std::vector<std::string> cells = {kv.key()};
      for (const std::string& k : keys) cells.push_back(scalar_text(kv.value()[k]));
      md_table_row(out, cells);
    }
    return;
  }
  if (v.is_object()) {
    out += "\n" + heading + " " + name + "\n\n";
    for (const auto& kv : v.items()) {
      if (is_scalar(kv.value())) {
        out += "- " + kv.key() + ": " + scalar_text(kv.value()) + "\n";
      }
    }
    for (const auto& kv : v.items()) {
      if (!is_scalar(kv.value())) render_md(out, level + 1, kv.key(), kv.value());
    }
    return;
  }
  // remaining arrays: one bullet per element
  out += "\n" + heading + " " + name + "\n\n";
  for (const auto& el : v) {
    out += "- " + (is_scalar(el) ? scalar_text(el) : el.dump()) + "\n";
  }
}

std::string render_markdown(const ordered_json& j) {
  std::string out = "# " + j.value("kind", std::string("marrowbench")) + " report\n\n";
  for (const auto& kv : j.items()) {
    if (is_scalar(kv.value())) {
      out += "- " + kv.key() + ": " + scalar_text(kv.value()) + "\n";
    }
  }
  for (const auto& kv : j.items()) {
    if (!is_scalar(kv.value())) render_md(out, 2, kv.key(), kv.value());
  }
  return out;
}

void flatten_json(const std::string& prefix, const ordered_json& v, Csv& csv) {
  if (v.is_object()) {
    for (const auto& kv : v.items()) {
      flatten_json(prefix.empty() ? kv.key() : prefix + "." + kv.key(), kv.value(), csv);
    }
  } else if (v.is_array()) {
    for (size_t i = 0; i < v.size(); ++i) {
      flatten_json(prefix + "[" + std::to_string(i) + "]", v[i], csv);
    }
  } else {
    csv.rows.push_back({prefix, scalar_text(v)});
  }
}

std::string render_flat_csv(const ordered_json& j) {
  Csv csv;
  csv.header = {"key", "value"};
  flatten_json("", j, csv);
  return format_csv(csv);
}

}  // namespace

std::string render_report(const ReportCmd& cmd) {
  std::string text = read_file(cmd.input_path);
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, "report",
                std::string("cannot parse report: ") + e.what());
  }
  if (!j.is_object() || j.value("format", std::string()) != "marrowbench.report") {
    throw Error(ErrorCode::schema, "report",
                cmd.input_path + " is not a marrowbench report");
  }
  std::string out;
  if (cmd.format == "json") {
    out = j.dump(2) + "\n";
  } else if (cmd.format == "markdown") {
    out = render_markdown(j);
  } else if (cmd.format == "csv") {
    out = render_flat_csv(j);
  } else {
    throw Error(ErrorCode::usage, "report", "unknown format: " + cmd.format);
  }
  if (!cmd.out_path.empty()) write_file_atomic(cmd.out_path, out);
  return out;
}

}  // namespace marrowbench
