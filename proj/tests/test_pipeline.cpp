#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "marrowbench/bootstrap.hpp"
#include "marrowbench/classify.hpp"
#include "marrowbench/consensus.hpp"
#include "marrowbench/core.hpp"
#include "marrowbench/error.hpp"
#include "marrowbench/gbdt.hpp"
#include "marrowbench/hash.hpp"
#include "marrowbench/io.hpp"
#include "marrowbench/pipeline.hpp"
#include "marrowbench/taxonomy.hpp"

#include "support/synthetic.hpp"

using namespace marrowbench;
using nlohmann::ordered_json;

namespace {

namespace fs = std::filesystem;

std::string work_root() { return std::string(MB_BINARY_DIR) + "/pipeline_work"; }

std::string fresh_dir(const std::string& name) {
  std::string d = work_root() + "/" + name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the command line tool through the shell, capturing exit code and both
// streams. env goes in front of the binary ("OMP_NUM_THREADS=1").
CliResult run_cli(const std::string& args, const std::string& tag,
                  const std::string& env = "") {
  fs::create_directories(work_root());
  std::string out_f = work_root() + "/" + tag + ".out";
  std::string err_f = work_root() + "/" + tag + ".err";
  std::string bin = std::string(MB_BINARY_DIR) + "/marrowbench";
  std::string cmd = (env.empty() ? "" : env + " ") + bin + " " + args + " >" +
                    out_f + " 2>" + err_f;
  int rc = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = read_file(out_f);
  r.err = read_file(err_f);
  return r;
}

Observation make_obs(const std::string& cell, const std::string& observer,
                     const std::string& label, int64_t seq) {
  Observation o;
  o.cell_id = cell;
  o.observer_id = observer;
  o.label = label;
  o.seq = seq;
  return o;
}

CellRecord make_cell(const std::string& cell, const std::string& patient) {
  CellRecord c;
  c.cell_id = cell;
  c.patient_id = patient;
  c.roi_id = patient + "_roi0";
  c.bbox = {10, 10, 24, 24};
  return c;
}

// Labels a synthetic cohort's cells from its observation stream, the way the
// end-to-end command does internally.
void label_cells(synth::SyntheticCohort& sc, const Taxonomy& taxonomy) {
  std::vector<CellConsensus> resolved = resolve_stream(sc.observations);
  std::map<std::string, std::string> label_of;
  for (const CellConsensus& c : resolved) {
    if (c.status.state == ConsensusState::consensus) {
      label_of[c.cell_id] = map_class(taxonomy, c.status.label);
    }
  }
  for (CellRecord& c : sc.cells) {
    auto it = label_of.find(c.cell_id);
    if (it != label_of.end()) c.consensus_label = it->second;
  }
}

std::string jsonl_box(const std::string& roi, double x, double y, double w,
                      double h, double score = -1) {
  ordered_json j;
  j["roi_id"] = roi;
  j["bbox"] = {x, y, w, h};
  if (score >= 0) j["score"] = score;
  return j.dump() + "\n";
}

}  // namespace

TEST_CASE("taxonomy subcommand writes the built-in taxonomy") {
  std::string dir = fresh_dir("tax");
  CliResult r = run_cli("taxonomy --out " + dir + "/t.json", "tax");
  CHECK(r.code == 0);
  CHECK(r.out == "wrote " + dir + "/t.json\n");
  Taxonomy t = load_taxonomy(dir + "/t.json");
  const Taxonomy& d = default_taxonomy();
  CHECK(t.model_classes == d.model_classes);
  CHECK(t.original_leaves == d.original_leaves);
  CHECK(t.mapping == d.mapping);
}

TEST_CASE("consensus command labels cells and reports exact fractions") {
  std::string dir = fresh_dir("consensus");
  std::string obs_path = dir + "/obs.jsonl";
  std::string cells_path = dir + "/cells.jsonl";

  // c1 decides at two on a leaf that reduces, c2 stays pending, c3 burns
  // through five disagreeing observers
  std::vector<Observation> obs = {
      make_obs("c1", "o1", "Promonocyte", 1),
      make_obs("c1", "o2", "Promonocyte", 2),
      make_obs("c2", "o1", "Lymphocyte", 1),
      make_obs("c3", "o1", "Monocyte", 1),
      make_obs("c3", "o2", "Lymphocyte", 2),
      make_obs("c3", "o3", "Artifact", 3),
      make_obs("c3", "o4", "Thrombocyte", 4),
      make_obs("c3", "o5", "Mitosis", 5),
  };
  write_observations_jsonl(obs_path, obs);
  write_cells_jsonl(cells_path, {make_cell("c1", "p1"), make_cell("c2", "p1"),
                                 make_cell("c3", "p2")});

  ConsensusCmd cmd;
  cmd.observations_path = obs_path;
  cmd.cells_path = cells_path;
  cmd.out_dir = dir;
  ordered_json report = run_consensus(cmd);

  CHECK(report["kind"] == "consensus");
  CHECK(report["totals"]["cells"] == 3);
  CHECK(report["totals"]["observations"] == 8);
  CHECK(report["totals"]["consensus"] == 1);
  CHECK(report["totals"]["no_consensus"] == 1);
  CHECK(report["totals"]["pending"] == 1);
  double frac_sum = report["fractions"]["at_2"].get<double>() +
                    report["fractions"]["at_3"].get<double>() +
                    report["fractions"]["later"].get<double>() +
                    report["fractions"]["none"].get<double>();
  CHECK(frac_sum == 1.0);

  std::string target = map_class(default_taxonomy(), "Promonocyte");
  CHECK(target != "Promonocyte");
  CHECK(report["label_counts"][target] == 1);

  // the winning label lands on the cell, everything else is unlabeled
  std::vector<CellRecord> labeled = read_cells_jsonl(dir + "/cells_labeled.jsonl");
  REQUIRE(labeled.size() == 3);
  REQUIRE(labeled[0].consensus_label.has_value());
  CHECK(*labeled[0].consensus_label == target);
  CHECK(!labeled[1].consensus_label.has_value());
  CHECK(!labeled[2].consensus_label.has_value());

  // inputs carry content hashes of the exact bytes read
  CHECK(report["inputs"]["observations"]["fnv1a64"] ==
        fnv1a64_hex(read_file(obs_path)));

  // byte-stable across cli reruns, and the cli agrees with the library call
  std::string cli_args = "consensus --observations " + obs_path + " --cells " +
                         cells_path + " --out-dir " + dir;
  CHECK(run_cli(cli_args, "cons1").code == 0);
  std::string bytes1 = read_file(dir + "/consensus_report.json");
  CHECK(run_cli(cli_args, "cons2").code == 0);
  CHECK(read_file(dir + "/consensus_report.json") == bytes1);
  CHECK(ordered_json::parse(bytes1) == report);

  // without reduction the annotation-time name survives
  ConsensusCmd raw = cmd;
  raw.out_dir = fresh_dir("consensus_raw");
  raw.reduce = false;
  ordered_json raw_report = run_consensus(raw);
  CHECK(raw_report["label_counts"].contains("Promonocyte"));
}

TEST_CASE("split command assigns every patient with exact set sizes") {
  synth::SyntheticCohort sc = synth::make_cohort(30, 8, 77);
  std::string dir = fresh_dir("split");
  std::string patients_path = dir + "/patients.csv";
  write_patients_csv(patients_path, sc.patients);

  SplitCmd cmd;
  cmd.patients_path = patients_path;
  cmd.out_dir = dir;
  cmd.seed = 5;
  ordered_json report = run_split(cmd);

  // 30 patients at 0.7/0.15/0.15: remainders send the spare seat to
  // validation before test
  CHECK(report["sizes"]["train"] == 21);
  CHECK(report["sizes"]["validation"] == 5);
  CHECK(report["sizes"]["test"] == 4);

  std::vector<PatientRecord> assigned = read_patients_csv(dir + "/patients_split.csv");
  REQUIRE(assigned.size() == 30);
  std::array<int64_t, 3> diag_totals{};
  for (const PatientRecord& p : assigned) {
    CHECK(p.split != SplitSet::unassigned);
    diag_totals[static_cast<size_t>(p.diagnosis)]++;
  }
  CHECK(diag_totals == std::array<int64_t, 3>{10, 10, 10});

  // per-set diagnosis counts in the report add up to the cohort
  for (int d = 0; d < 3; ++d) {
    int64_t total = 0;
    for (const char* set : {"train", "validation", "test"}) {
      total += report["diagnosis"][set][kDiagnosisNames[static_cast<size_t>(d)]]
                   .get<int64_t>();
    }
    CHECK(total == 10);
  }

  // same seed, fresh directory: identical assignment bytes
  std::string dir2 = fresh_dir("split2");
  SplitCmd again = cmd;
  again.out_dir = dir2;
  run_split(again);
  CHECK(read_file(dir2 + "/patients_split.csv") ==
        read_file(dir + "/patients_split.csv"));
}

TEST_CASE("eval-detect command scores a hand-checked scene") {
  std::string dir = fresh_dir("detect");
  std::string det_path = dir + "/dets.jsonl";
  std::string gt_path = dir + "/gts.jsonl";

  // r1: one exact hit at 0.9, one miss at 0.8, one unmatched truth
  // r2: one exact hit at 0.7
  write_file_atomic(det_path, jsonl_box("r1", 10, 10, 20, 20, 0.9) +
                                  jsonl_box("r1", 300, 300, 20, 20, 0.8) +
                                  jsonl_box("r2", 50, 50, 30, 30, 0.7));
  write_file_atomic(gt_path, jsonl_box("r1", 10, 10, 20, 20) +
                                 jsonl_box("r1", 100, 100, 20, 20) +
                                 jsonl_box("r2", 50, 50, 30, 30));

  EvalDetectCmd cmd;
  cmd.detections_path = det_path;
  cmd.groundtruth_path = gt_path;
  cmd.out_dir = dir;
  cmd.write_matches = true;
  ordered_json report = run_eval_detect(cmd);

  CHECK(report["overall"]["tp"] == 2);
  CHECK(report["overall"]["fp"] == 1);
  CHECK(report["overall"]["fn"] == 1);
  CHECK(report["overall"]["precision"].get<double>() ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(report["overall"]["recall"].get<double>() ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  // pooled ranking TP(0.9), FP(0.8), TP(0.7): AP = (1 + 2/3) / 3
  CHECK(report["overall"]["ap"].get<double>() ==
        doctest::Approx(5.0 / 9.0).epsilon(1e-12));

  REQUIRE(report["per_roi"].size() == 2);
  CHECK(report["per_roi"][0]["roi"] == "r1");
  CHECK(report["per_roi"][0]["ap"].get<double>() ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(report["per_roi"][1]["ap"].get<double>() ==
        doctest::Approx(1.0).epsilon(1e-12));

  std::vector<std::string> match_lines = read_lines(dir + "/matches.jsonl");
  CHECK(match_lines.size() == 3);

  // suppression first: two near-duplicates collapse to one detection
  std::string dir2 = fresh_dir("detect_nms");
  std::string det2 = dir2 + "/dets.jsonl";
  write_file_atomic(det2, jsonl_box("r1", 10, 10, 20, 20, 0.9) +
                              jsonl_box("r1", 11, 10, 20, 20, 0.8));
  write_file_atomic(dir2 + "/gts.jsonl", jsonl_box("r1", 10, 10, 20, 20));
  EvalDetectCmd nms_cmd;
  nms_cmd.detections_path = det2;
  nms_cmd.groundtruth_path = dir2 + "/gts.jsonl";
  nms_cmd.out_dir = dir2;
  nms_cmd.nms_threshold = 0.5;
  ordered_json nms_report = run_eval_detect(nms_cmd);
  CHECK(nms_report["per_roi"][0]["n_detections"] == 1);
  CHECK(nms_report["overall"]["tp"] == 1);
  CHECK(nms_report["overall"]["fp"] == 0);
  CHECK(nms_report["options"]["nms_threshold"] == 0.5);
}

TEST_CASE("eval-classify command reproduces the library metrics") {
  const Taxonomy& t = default_taxonomy();
  int32_t k = t.n_model_classes();

  PredictionsFile file;
  file.preds.n_classes = k;
  // six one-hot rows, two of them wrong
  std::vector<std::pair<int32_t, int32_t>> truth_pred = {
      {0, 0}, {1, 1}, {2, 2}, {3, 4}, {5, 5}, {6, 2}};
  for (size_t i = 0; i < truth_pred.size(); ++i) {
    file.cell_ids.push_back("c" + std::to_string(i));
    file.preds.truth.push_back(truth_pred[i].first);
    std::vector<double> row(static_cast<size_t>(k), 0.0);
    row[static_cast<size_t>(truth_pred[i].second)] = 1.0;
    file.preds.scores.insert(file.preds.scores.end(), row.begin(), row.end());
  }

  std::string dir = fresh_dir("classify");
  std::string preds_path = dir + "/preds.csv";
  write_predictions_csv(preds_path, file, t);

  EvalClassifyCmd cmd;
  cmd.predictions_path = preds_path;
  cmd.out_dir = dir;
  ordered_json report = run_eval_classify(cmd);

  ConfusionMatrix m = confusion(file.preds);
  std::vector<ClassPrf> prf = per_class_prf(m);
  std::vector<double> f1s;
  for (const ClassPrf& c : prf) f1s.push_back(c.f1);
  F1Aggregates agg = f1_aggregates(f1s);

  CHECK(report["n_rows"] == 6);
  CHECK(report["metrics"]["top1_accuracy"].get<double>() ==
        topk_accuracy(file.preds, 1));
  CHECK(report["metrics"]["top2_accuracy"].get<double>() ==
        topk_accuracy(file.preds, 2));
  CHECK(report["metrics"]["median_f1"].get<double>() == agg.median_f1);
  CHECK(report["metrics"]["mean_f1"].get<double>() == agg.mean_f1);
  CHECK(report["per_class"].size() == static_cast<size_t>(k));
  CHECK(report["confusion"][0][0] == 1);
  CHECK(report["confusion"][6][2] == 1);
}

TEST_CASE("bootstrap-ci over a table column matches a direct library call") {
  std::string dir = fresh_dir("boot_mean");
  Csv table;
  table.header = {"patient", "value"};
  std::vector<double> values;
  Rng rng(404);
  for (int c = 0; c < 8; ++c) {
    for (int i = 0; i < 3; ++i) {
      double v = static_cast<double>(c) + rng.next_double();
      values.push_back(v);
      table.rows.push_back({"p" + std::to_string(c), format_double(v)});
    }
  }
  std::string table_path = dir + "/table.csv";
  write_file_atomic(table_path, format_csv(table));

  BootstrapCmd cmd;
  cmd.statistic = "mean:value";
  cmd.table_path = table_path;
  cmd.cluster_column = "patient";
  cmd.out_dir = dir;
  cmd.options.b = 500;
  cmd.options.alpha = 0.1;
  cmd.options.seed = 9;
  ordered_json report = run_bootstrap_ci(cmd);

  ClusteredSample s;
  for (int c = 0; c < 8; ++c) {
    s.cluster_ids.push_back("p" + std::to_string(c));
    s.clusters.push_back({3 * c, 3 * c + 1, 3 * c + 2});
  }
  StatisticFn stat = [&values](const std::vector<int64_t>& idx) {
    double sum = 0;
    for (int64_t i : idx) sum += values[static_cast<size_t>(i)];
    return sum / static_cast<double>(idx.size());
  };
  BootstrapResult want = bootstrap_ci(s, stat, cmd.options);

  CHECK(report["result"]["estimate"].get<double>() == want.estimate);
  CHECK(report["result"]["lower"].get<double>() == want.lower);
  CHECK(report["result"]["upper"].get<double>() == want.upper);
  CHECK(report["result"]["z0"].get<double>() == want.z0);
  CHECK(report["result"]["acceleration"].get<double>() == want.a);
  CHECK(report["clusters"]["count"] == 8);
  CHECK(report["clusters"]["items"] == 24);
}

TEST_CASE("bootstrap-ci classification and detection statistics") {
  const Taxonomy& t = default_taxonomy();
  int32_t k = t.n_model_classes();

  std::string dir = fresh_dir("boot_stats");
  PredictionsFile file;
  file.preds.n_classes = k;
  std::vector<CellRecord> cells;
  Rng rng(11);
  for (int i = 0; i < 40; ++i) {
    std::string cell = "c" + std::to_string(i);
    file.cell_ids.push_back(cell);
    int32_t truth = static_cast<int32_t>(rng.bounded(5));
    int32_t pred = rng.next_double() < 0.8 ? truth
                                           : static_cast<int32_t>(rng.bounded(5));
    file.preds.truth.push_back(truth);
    std::vector<double> row(static_cast<size_t>(k), 0.0);
    row[static_cast<size_t>(pred)] = 1.0;
    file.preds.scores.insert(file.preds.scores.end(), row.begin(), row.end());
    CellRecord c = make_cell(cell, "p" + std::to_string(i % 8));
    cells.push_back(c);
  }
  std::string preds_path = dir + "/preds.csv";
  std::string cells_path = dir + "/cells.jsonl";
  write_predictions_csv(preds_path, file, t);
  write_cells_jsonl(cells_path, cells);

  BootstrapCmd cmd;
  cmd.statistic = "median_f1";
  cmd.predictions_path = preds_path;
  cmd.cells_path = cells_path;
  cmd.out_dir = dir;
  cmd.options.b = 200;
  cmd.options.seed = 3;
  ordered_json report = run_bootstrap_ci(cmd);

  ConfusionMatrix m = confusion(file.preds);
  std::vector<ClassPrf> prf = per_class_prf(m);
  std::vector<double> f1s;
  for (const ClassPrf& c : prf) f1s.push_back(c.f1);
  CHECK(report["result"]["estimate"].get<double>() ==
        f1_aggregates(f1s).median_f1);
  CHECK(report["clusters"]["count"] == 8);
  CHECK(report["result"]["lower"].get<double>() <=
        report["result"]["upper"].get<double>());

  // detection statistic over the hand-checked scene
  std::string det_dir = fresh_dir("boot_detect");
  write_file_atomic(det_dir + "/dets.jsonl",
                    jsonl_box("r1", 10, 10, 20, 20, 0.9) +
                        jsonl_box("r1", 300, 300, 20, 20, 0.8) +
                        jsonl_box("r2", 50, 50, 30, 30, 0.7));
  write_file_atomic(det_dir + "/gts.jsonl",
                    jsonl_box("r1", 10, 10, 20, 20) +
                        jsonl_box("r1", 100, 100, 20, 20) +
                        jsonl_box("r2", 50, 50, 30, 30));
  BootstrapCmd det_cmd;
  det_cmd.statistic = "detection_ap";
  det_cmd.detections_path = det_dir + "/dets.jsonl";
  det_cmd.groundtruth_path = det_dir + "/gts.jsonl";
  det_cmd.out_dir = det_dir;
  det_cmd.options.b = 200;
  ordered_json det_report = run_bootstrap_ci(det_cmd);
  CHECK(det_report["result"]["estimate"].get<double>() ==
        doctest::Approx(5.0 / 9.0).epsilon(1e-12));
  CHECK(det_report["clusters"]["count"] == 2);
  CHECK(det_report["options"]["iou_threshold"] == 0.5);
}

TEST_CASE("train and predict commands round trip a model") {
  synth::SyntheticCohort sc = synth::make_cohort(30, 40, 99);
  const Taxonomy& taxonomy = default_taxonomy();
  label_cells(sc, taxonomy);
  Cohort cohort{sc.patients, sc.cells};
  FeatureTable features = build_dcc_features(cohort, taxonomy);

  std::string dir = fresh_dir("train");
  std::string features_path = dir + "/features.csv";
  write_features_csv(features_path, features);

  TrainDiagnosisCmd cmd;
  cmd.features_path = features_path;
  cmd.out_dir = dir;
  cmd.grid = false;
  cmd.params.n_iterations = 60;
  cmd.params.learning_rate = 0.3;
  cmd.params.max_leaves = 4;
  ordered_json report = run_train_diagnosis(cmd);

  CHECK(report["data"]["n_patients"] == 30);
  CHECK(report["data"]["n_features"] == 33);
  CHECK(report["data"]["label_counts"]["ALL"] == 10);
  CHECK(report["params"]["n_iterations"] == 60);
  CHECK(!report.contains("grid_search"));
  CHECK(report["training_fit"]["macro_f1"].get<double>() >= 0.99);
  CHECK(fs::exists(dir + "/model.json"));

  PredictDiagnosisCmd pred;
  pred.features_path = features_path;
  pred.model_path = dir + "/model.json";
  pred.out_dir = dir;
  ordered_json pred_report = run_predict_diagnosis(pred);
  CHECK(pred_report["metrics"]["accuracy"].get<double>() ==
        report["training_fit"]["accuracy"].get<double>());

  Csv preds = read_csv(dir + "/diagnosis_predictions.csv");
  REQUIRE(preds.header.size() == 6);
  CHECK(preds.header[0] == "patient_id");
  CHECK(preds.header[1] == "truth");
  CHECK(preds.header[2] == "ALL");
  CHECK(preds.header[5] == "predicted");
  CHECK(preds.rows.size() == 30);

  // grid mode reports the whole table and picks a listed point
  TrainDiagnosisCmd grid_cmd = cmd;
  grid_cmd.out_dir = fresh_dir("train_grid");
  grid_cmd.grid = true;
  grid_cmd.holdout_repeats = 3;
  ordered_json grid_report = run_train_diagnosis(grid_cmd);
  CHECK(grid_report["grid_search"].size() == 16);
  double best = -1;
  for (const auto& row : grid_report["grid_search"]) {
    best = std::max(best, row["mean_macro_f1"].get<double>());
  }
  bool found = false;
  for (const auto& row : grid_report["grid_search"]) {
    if (row["mean_macro_f1"].get<double>() == best &&
        row["n_iterations"] == grid_report["params"]["n_iterations"] &&
        row["learning_rate"] == grid_report["params"]["learning_rate"] &&
        row["max_leaves"] == grid_report["params"]["max_leaves"] &&
        row["l2"] == grid_report["params"]["l2"]) {
      found = true;
      break;
    }
  }
  CHECK(found);
}

TEST_CASE("training selects the requested feature block") {
  synth::SyntheticCohort sc = synth::make_cohort(12, 10, 55);
  const Taxonomy& taxonomy = default_taxonomy();
  label_cells(sc, taxonomy);
  for (size_t i = 0; i < sc.patients.size(); ++i) {
    PatientRecord& p = sc.patients[i];
    p.labs[0] = 4.0 + static_cast<double>(p.diagnosis);
    p.labs[1] = 2.0 + 0.1 * static_cast<double>(i);
  }
  Cohort cohort{sc.patients, sc.cells};
  FeatureTable features = build_dcc_features(cohort, taxonomy, true);

  std::string dir = fresh_dir("feature_set");
  std::string features_path = dir + "/features.csv";
  write_features_csv(features_path, features);

  TrainDiagnosisCmd cmd;
  cmd.features_path = features_path;
  cmd.grid = false;
  cmd.params.n_iterations = 20;
  cmd.params.learning_rate = 0.3;
  cmd.params.max_leaves = 4;

  cmd.feature_set = "lab";
  cmd.out_dir = fresh_dir("feature_set_lab");
  ordered_json lab = run_train_diagnosis(cmd);
  CHECK(lab["data"]["n_features"] == 18);
  CHECK(lab["options"]["feature_set"] == "lab");

  cmd.feature_set = "dcc-predicted";
  cmd.out_dir = fresh_dir("feature_set_dcc");
  CHECK(run_train_diagnosis(cmd)["data"]["n_features"] == 33);

  cmd.feature_set = "lab+dcc";
  cmd.out_dir = fresh_dir("feature_set_both");
  CHECK(run_train_diagnosis(cmd)["data"]["n_features"] == 51);

  cmd.feature_set = "pca";
  cmd.out_dir = fresh_dir("feature_set_bad");
  CHECK_THROWS_WITH_AS((void)run_train_diagnosis(cmd),
                       doctest::Contains("unknown feature set"), Error);
}

TEST_CASE("end-to-end command is deterministic across threads and reruns") {
  synth::SyntheticCohort sc = synth::make_cohort(45, 24, 2024);
  std::string in_dir = fresh_dir("e2e_in");
  std::string obs_path = in_dir + "/obs.jsonl";
  std::string cells_path = in_dir + "/cells.jsonl";
  std::string patients_path = in_dir + "/patients.csv";
  write_observations_jsonl(obs_path, sc.observations);
  write_cells_jsonl(cells_path, sc.cells);
  write_patients_csv(patients_path, sc.patients);

  EndToEndCmd cmd;
  cmd.observations_path = obs_path;
  cmd.cells_path = cells_path;
  cmd.patients_path = patients_path;
  cmd.out_dir = fresh_dir("e2e_a");
  cmd.seed = 7;
  cmd.grid = false;
  cmd.params.n_iterations = 60;
  cmd.params.learning_rate = 0.3;
  cmd.ci.b = 400;
  ordered_json report = run_end_to_end(cmd);

  CHECK(report["split"]["sizes"]["train"] == 31);
  CHECK(report["split"]["sizes"]["validation"] == 7);
  CHECK(report["split"]["sizes"]["test"] == 7);
  CHECK(report["features"]["n_patients"] == 45);
  CHECK(report["features"]["n_features"] == 33);
  CHECK(report["test"]["macro_f1"].get<double>() >= 0.9);
  for (const char* key : {"f1_ALL", "f1_AML", "f1_CML", "mean_f1"}) {
    REQUIRE(report["intervals"].contains(key));
    const auto& iv = report["intervals"][key];
    CHECK(iv["replicates"].get<int64_t>() + iv["dropped"].get<int64_t>() == 400);
    if (!iv["lower"].is_null() && !iv["upper"].is_null()) {
      CHECK(iv["lower"].get<double>() <= iv["upper"].get<double>());
    }
  }
  for (const char* name :
       {"cells_labeled.jsonl", "patients_split.csv", "features.csv",
        "model.json", "test_predictions.csv", "end_to_end_report.json"}) {
    CHECK(fs::exists(cmd.out_dir + "/" + std::string(name)));
  }

  // same directory, second run: identical bytes
  run_end_to_end(cmd);
  std::string bytes_a = read_file(cmd.out_dir + "/end_to_end_report.json");
  CHECK(ordered_json::parse(bytes_a) == report);

  // cli runs under different thread counts agree file for file
  std::string dir_b = fresh_dir("e2e_b");
  std::string dir_c = fresh_dir("e2e_c");
  std::string args = "end-to-end --observations " + obs_path + " --cells " +
                     cells_path + " --patients " + patients_path +
                     " --seed 7 --no-grid --iterations 60 --learning-rate 0.3"
                     " --replicates 400 --out-dir ";
  CliResult rb = run_cli(args + dir_b, "e2e_b", "OMP_NUM_THREADS=4");
  CliResult rc = run_cli(args + dir_c, "e2e_c", "OMP_NUM_THREADS=1");
  REQUIRE(rb.code == 0);
  REQUIRE(rc.code == 0);
  for (const char* name : {"cells_labeled.jsonl", "patients_split.csv",
                           "features.csv", "model.json", "test_predictions.csv"}) {
    CHECK(read_file(dir_b + "/" + std::string(name)) ==
          read_file(dir_c + "/" + std::string(name)));
  }
  ordered_json report_b = ordered_json::parse(read_file(dir_b + "/end_to_end_report.json"));
  ordered_json report_c = ordered_json::parse(read_file(dir_c + "/end_to_end_report.json"));
  report_b.erase("outputs");
  report_c.erase("outputs");
  CHECK(report_b == report_c);
  ordered_json report_a = report;
  report_a.erase("outputs");
  CHECK(report_a == report_b);

  // a completed split column is honored instead of reassigned
  EndToEndCmd chained = cmd;
  chained.patients_path = cmd.out_dir + "/patients_split.csv";
  chained.out_dir = fresh_dir("e2e_chained");
  chained.seed = 99;
  ordered_json chained_report = run_end_to_end(chained);
  CHECK(chained_report["split"]["reused"] == true);
  CHECK(chained_report["split"]["sizes"] == report["split"]["sizes"]);
  CHECK(chained_report["test"]["macro_f1"] == report["test"]["macro_f1"]);

  // a partial split column is an error
  std::vector<PatientRecord> partial = sc.patients;
  partial[0].split = SplitSet::train;
  std::string partial_path = in_dir + "/patients_partial.csv";
  write_patients_csv(partial_path, partial);
  EndToEndCmd bad = cmd;
  bad.patients_path = partial_path;
  bad.out_dir = fresh_dir("e2e_bad");
  CHECK_THROWS_WITH_AS(run_end_to_end(bad),
                       doctest::Contains("partly assigned"), Error);
}

TEST_CASE("report command renders markdown, csv and json") {
  synth::SyntheticCohort sc = synth::make_cohort(12, 10, 5);
  std::string dir = fresh_dir("render");
  write_observations_jsonl(dir + "/obs.jsonl", sc.observations);
  ConsensusCmd cons;
  cons.observations_path = dir + "/obs.jsonl";
  cons.out_dir = dir;
  run_consensus(cons);
  std::string report_path = dir + "/consensus_report.json";

  ReportCmd md;
  md.input_path = report_path;
  md.format = "markdown";
  std::string markdown = render_report(md);
  CHECK(markdown.rfind("# consensus report", 0) == 0);
  CHECK(markdown.find("## totals") != std::string::npos);
  CHECK(markdown.find("## inputs") != std::string::npos);
  CHECK(markdown.find("| name |") != std::string::npos);

  ReportCmd csv;
  csv.input_path = report_path;
  csv.format = "csv";
  std::string flat = render_report(csv);
  CHECK(flat.rfind("key,value\n", 0) == 0);
  CHECK(flat.find("kind,consensus\n") != std::string::npos);
  CHECK(flat.find("totals.cells,") != std::string::npos);

  ReportCmd as_json;
  as_json.input_path = report_path;
  as_json.format = "json";
  as_json.out_path = dir + "/rendered.json";
  std::string pretty = render_report(as_json);
  CHECK(ordered_json::parse(pretty) == ordered_json::parse(read_file(report_path)));
  CHECK(read_file(dir + "/rendered.json") == pretty);

  // the cli prints the rendering when no output file is given
  CliResult cli = run_cli("report --input " + report_path + " --format markdown",
                          "render_md");
  CHECK(cli.code == 0);
  CHECK(cli.out == markdown);
}

TEST_CASE("cli maps failures onto exit codes") {
  std::string dir = fresh_dir("errors");

  CHECK(run_cli("", "err_noargs").code == 2);
  CHECK(run_cli("definitely-not-a-command", "err_unknown").code == 2);

  CliResult missing = run_cli(
      "eval-classify --predictions " + dir + "/nope.csv --out-dir " + dir,
      "err_io");
  CHECK(missing.code == 3);
  CHECK(missing.err.rfind("marrowbench: error code=io", 0) == 0);

  Csv table;
  table.header = {"patient", "value"};
  table.rows.push_back({"p1", "1.5"});
  write_file_atomic(dir + "/t.csv", format_csv(table));
  CliResult unknown_stat = run_cli(
      "bootstrap-ci --statistic bogus --table " + dir + "/t.csv" +
          " --cluster-column patient --out-dir " + dir,
      "err_stat");
  CHECK(unknown_stat.code == 2);
  CHECK(unknown_stat.err.find("code=usage") != std::string::npos);
  CHECK(unknown_stat.err.find("stage=bootstrap") != std::string::npos);

  write_file_atomic(dir + "/not_report.json", "{\"hello\": 1}\n");
  CliResult bad_report = run_cli(
      "report --input " + dir + "/not_report.json", "err_report");
  CHECK(bad_report.code == 4);
  CHECK(bad_report.err.find("code=schema") != std::string::npos);

  CliResult bad_format = run_cli(
      "report --input " + dir + "/not_report.json --format pdf", "err_format");
  CHECK(bad_format.code == 2);
}
