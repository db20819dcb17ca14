#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "marrowbench/error.hpp"
#include "marrowbench/pipeline.hpp"
#include "marrowbench/taxonomy.hpp"
#include "marrowbench/version.hpp"

namespace {

void print_outputs(const nlohmann::ordered_json& report) {
  if (!report.contains("outputs")) return;
  for (const auto& kv : report["outputs"].items()) {
    std::cout << "wrote " << kv.value().get<std::string>() << "\n";
  }
}

void add_gbdt_options(CLI::App* sub, marrowbench::GbdtParams& p) {
  sub->add_option("--iterations", p.n_iterations, "boosting iterations")
      ->capture_default_str();
  sub->add_option("--learning-rate", p.learning_rate, "shrinkage per iteration")
      ->capture_default_str();
  sub->add_option("--max-leaves", p.max_leaves, "leaves per tree")
      ->capture_default_str();
  sub->add_option("--min-samples-leaf", p.min_samples_leaf, "minimum rows per leaf")
      ->capture_default_str();
  sub->add_option("--l2", p.l2, "leaf weight regularization")->capture_default_str();
  sub->add_option("--max-bins", p.max_bins, "histogram bins per feature")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace marrowbench;

  CLI::App app{"bone marrow cytology evaluation toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // consensus
  ConsensusCmd consensus_cmd;
  CLI::App* consensus = app.add_subcommand(
      "consensus", "resolve annotation streams into per-cell labels");
  consensus->add_option("--observations", consensus_cmd.observations_path,
                        "observation stream (jsonl)")->required();
  consensus->add_option("--cells", consensus_cmd.cells_path,
                        "cell table to relabel (jsonl)");
  consensus->add_option("--taxonomy", consensus_cmd.taxonomy_path,
                        "taxonomy json (default: built-in)");
  consensus->add_option("--out-dir", consensus_cmd.out_dir, "output directory")
      ->required();
  consensus->add_option("--max-observers", consensus_cmd.max_observers,
                        "observation cap per cell")->capture_default_str();
  consensus->add_flag("--reduce,!--no-reduce", consensus_cmd.reduce,
                      "map winning labels onto model classes");
  consensus->callback([&] { print_outputs(run_consensus(consensus_cmd)); });

  // split
  SplitCmd split_cmd;
  CLI::App* split = app.add_subcommand(
      "split", "assign patients to stratified train/validation/test sets");
  split->add_option("--patients", split_cmd.patients_path, "patient table (csv)")
      ->required();
  split->add_option("--cells", split_cmd.cells_path,
                    "labeled cells for the class-balance objective (jsonl)");
  split->add_option("--taxonomy", split_cmd.taxonomy_path,
                    "taxonomy json (default: built-in)");
  split->add_option("--out-dir", split_cmd.out_dir, "output directory")->required();
  split->add_option("--train", split_cmd.ratios.train, "train fraction")
      ->capture_default_str();
  split->add_option("--validation", split_cmd.ratios.validation,
                    "validation fraction")->capture_default_str();
  split->add_option("--test", split_cmd.ratios.test, "test fraction")
      ->capture_default_str();
  split->add_option("--seed", split_cmd.seed, "shuffle seed")->capture_default_str();
  split->add_flag("--refine,!--no-refine", split_cmd.refine,
                  "improve balance with same-stratum swaps");
  split->callback([&] { print_outputs(run_split(split_cmd)); });

  // eval-detect
  EvalDetectCmd detect_cmd;
  double nms_value = 0.3;
  CLI::App* eval_detect = app.add_subcommand(
      "eval-detect", "score detections against ground-truth boxes");
  eval_detect->add_option("--detections", detect_cmd.detections_path,
                          "detections (jsonl)")->required();
  eval_detect->add_option("--groundtruth", detect_cmd.groundtruth_path,
                          "ground-truth boxes (jsonl)")->required();
  eval_detect->add_option("--out-dir", detect_cmd.out_dir, "output directory")
      ->required();
  eval_detect->add_option("--iou", detect_cmd.iou_threshold,
                          "minimum IoU for a match")->capture_default_str();
  CLI::Option* nms_opt = eval_detect->add_option(
      "--nms", nms_value, "suppress overlapping detections at this IoU first");
  eval_detect->add_flag("--write-matches", detect_cmd.write_matches,
                        "write per-detection match records");
  eval_detect->callback([&] {
    if (nms_opt->count()) detect_cmd.nms_threshold = nms_value;
    print_outputs(run_eval_detect(detect_cmd));
  });

  // eval-classify
  EvalClassifyCmd classify_cmd;
  CLI::App* eval_classify = app.add_subcommand(
      "eval-classify", "score per-cell class predictions");
  eval_classify->add_option("--predictions", classify_cmd.predictions_path,
                            "scored predictions (csv)")->required();
  eval_classify->add_option("--taxonomy", classify_cmd.taxonomy_path,
                            "taxonomy json (default: built-in)");
  eval_classify->add_option("--out-dir", classify_cmd.out_dir, "output directory")
      ->required();
  eval_classify->callback([&] { print_outputs(run_eval_classify(classify_cmd)); });

  // bootstrap-ci
  BootstrapCmd boot_cmd;
  std::string boot_mode = "two_level";
  CLI::App* bootstrap = app.add_subcommand(
      "bootstrap-ci", "cluster-aware confidence interval for a statistic");
  bootstrap->add_option("--statistic", boot_cmd.statistic,
                        "statistic name (see docs)")->required();
  bootstrap->add_option("--table", boot_cmd.table_path, "generic csv table");
  bootstrap->add_option("--cluster-column", boot_cmd.cluster_column,
                        "cluster id column of --table");
  bootstrap->add_option("--predictions", boot_cmd.predictions_path,
                        "scored predictions (csv)");
  bootstrap->add_option("--cells", boot_cmd.cells_path,
                        "cells mapping predictions to patients (jsonl)");
  bootstrap->add_option("--detections", boot_cmd.detections_path,
                        "detections (jsonl)");
  bootstrap->add_option("--groundtruth", boot_cmd.groundtruth_path,
                        "ground-truth boxes (jsonl)");
  bootstrap->add_option("--features", boot_cmd.features_path,
                        "patient feature table (csv)");
  bootstrap->add_option("--model", boot_cmd.model_path, "trained model (json)");
  bootstrap->add_option("--taxonomy", boot_cmd.taxonomy_path,
                        "taxonomy json (default: built-in)");
  bootstrap->add_option("--out-dir", boot_cmd.out_dir, "output directory")
      ->required();
  bootstrap->add_option("--iou", boot_cmd.iou_threshold,
                        "minimum IoU for detection statistics")
      ->capture_default_str();
  bootstrap->add_option("--replicates", boot_cmd.options.b, "bootstrap replicates")
      ->capture_default_str();
  bootstrap->add_option("--alpha", boot_cmd.options.alpha,
                        "two-sided miss probability")->capture_default_str();
  bootstrap->add_option("--seed", boot_cmd.options.seed, "resampling seed")
      ->capture_default_str();
  bootstrap->add_option("--mode", boot_mode, "resampling mode")
      ->check(CLI::IsMember({"two_level", "clusters_only"}))
      ->capture_default_str();
  bootstrap->callback([&] {
    boot_cmd.options.mode = parse_resample_mode(boot_mode);
    print_outputs(run_bootstrap_ci(boot_cmd));
  });

  // train-diagnosis
  TrainDiagnosisCmd train_cmd;
  CLI::App* train = app.add_subcommand(
      "train-diagnosis", "fit the diagnosis model on a feature table");
  train->add_option("--features", train_cmd.features_path,
                    "patient feature table (csv)")->required();
  train->add_option("--out-dir", train_cmd.out_dir, "output directory")->required();
  train->add_option("--seed", train_cmd.seed, "holdout seed")->capture_default_str();
  train->add_option("--feature-set", train_cmd.feature_set,
                    "column block: lab, dcc-clinical, dcc-predicted, lab+dcc")
      ->capture_default_str();
  train->add_flag("--grid,!--no-grid", train_cmd.grid,
                  "search the hyperparameter grid");
  train->add_option("--holdout-repeats", train_cmd.holdout_repeats,
                    "holdout repeats per grid point")->capture_default_str();
  train->add_option("--holdout-frac", train_cmd.holdout_frac,
                    "held-out fraction per repeat")->capture_default_str();
  add_gbdt_options(train, train_cmd.params);
  train->callback([&] { print_outputs(run_train_diagnosis(train_cmd)); });

  // predict-diagnosis
  PredictDiagnosisCmd predict_cmd;
  CLI::App* predict = app.add_subcommand(
      "predict-diagnosis", "score a feature table with a trained model");
  predict->add_option("--features", predict_cmd.features_path,
                      "patient feature table (csv)")->required();
  predict->add_option("--model", predict_cmd.model_path, "trained model (json)")
      ->required();
  predict->add_option("--out-dir", predict_cmd.out_dir, "output directory")
      ->required();
  predict->callback([&] { print_outputs(run_predict_diagnosis(predict_cmd)); });

  // end-to-end
  EndToEndCmd e2e_cmd;
  std::string ci_mode = "two_level";
  CLI::App* e2e = app.add_subcommand(
      "end-to-end", "annotation stream to diagnosis report in one run");
  e2e->add_option("--observations", e2e_cmd.observations_path,
                  "observation stream (jsonl)")->required();
  e2e->add_option("--cells", e2e_cmd.cells_path, "cell table (jsonl)")->required();
  e2e->add_option("--patients", e2e_cmd.patients_path, "patient table (csv)")
      ->required();
  e2e->add_option("--taxonomy", e2e_cmd.taxonomy_path,
                  "taxonomy json (default: built-in)");
  e2e->add_option("--out-dir", e2e_cmd.out_dir, "output directory")->required();
  e2e->add_option("--seed", e2e_cmd.seed, "seed for split, grid and intervals")
      ->capture_default_str();
  e2e->add_option("--train", e2e_cmd.ratios.train, "train fraction")
      ->capture_default_str();
  e2e->add_option("--validation", e2e_cmd.ratios.validation, "validation fraction")
      ->capture_default_str();
  e2e->add_option("--test", e2e_cmd.ratios.test, "test fraction")
      ->capture_default_str();
  e2e->add_option("--max-observers", e2e_cmd.max_observers,
                  "observation cap per cell")->capture_default_str();
  e2e->add_flag("--include-labs", e2e_cmd.include_labs,
                "append blood lab features");
  e2e->add_flag("--nucleated-only", e2e_cmd.nucleated_only,
                "count only the curated nucleated classes");
  e2e->add_flag("--grid,!--no-grid", e2e_cmd.grid,
                "search the hyperparameter grid");
  e2e->add_option("--holdout-repeats", e2e_cmd.holdout_repeats,
                  "holdout repeats per grid point")->capture_default_str();
  e2e->add_option("--holdout-frac", e2e_cmd.holdout_frac,
                  "held-out fraction per repeat")->capture_default_str();
  add_gbdt_options(e2e, e2e_cmd.params);
  e2e->add_option("--replicates", e2e_cmd.ci.b, "bootstrap replicates")
      ->capture_default_str();
  e2e->add_option("--alpha", e2e_cmd.ci.alpha, "two-sided miss probability")
      ->capture_default_str();
  e2e->add_option("--ci-mode", ci_mode, "interval resampling mode")
      ->check(CLI::IsMember({"two_level", "clusters_only"}))
      ->capture_default_str();
  e2e->callback([&] {
    e2e_cmd.ci.mode = parse_resample_mode(ci_mode);
    print_outputs(run_end_to_end(e2e_cmd));
  });

  // report
  ReportCmd report_cmd;
  CLI::App* report = app.add_subcommand(
      "report", "render a written report as markdown, csv or json");
  report->add_option("--input", report_cmd.input_path, "report json")->required();
  report->add_option("--format", report_cmd.format, "output format")
      ->check(CLI::IsMember({"markdown", "csv", "json"}))
      ->capture_default_str();
  report->add_option("--out", report_cmd.out_path,
                     "output file (default: stdout)");
  report->callback([&] {
    std::string text = render_report(report_cmd);
    if (report_cmd.out_path.empty()) {
      std::cout << text;
    } else {
      std::cout << "wrote " << report_cmd.out_path << "\n";
    }
  });

  // taxonomy export
  std::string taxonomy_out;
  CLI::App* taxonomy = app.add_subcommand(
      "taxonomy", "write the built-in class taxonomy as json");
  taxonomy->add_option("--out", taxonomy_out, "output path")->required();
  taxonomy->callback([&] {
    save_taxonomy(default_taxonomy(), taxonomy_out);
    std::cout << "wrote " << taxonomy_out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "marrowbench: error code=" << error_code_name(e.code)
              << " stage=" << e.stage << " msg=\"" << e.what() << "\"\n";
    return static_cast<int>(e.code);
  } catch (const std::exception& e) {
    std::cerr << "marrowbench: error code=internal stage=main msg=\"" << e.what()
              << "\"\n";
    return 6;
  }
  return 0;
}
