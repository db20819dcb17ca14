#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "marrowbench/error.hpp"
#include "marrowbench/gbdt.hpp"
#include "marrowbench/io.hpp"
#include "marrowbench/rng.hpp"
#include "marrowbench/taxonomy.hpp"

using namespace marrowbench;

namespace {

std::string temp_path(const char* name) {
  return std::string(MB_BINARY_DIR) + "/" + name;
}

// three well separated clusters on the first feature, plus a noise feature
DiagnosisDataset separable_dataset(int per_class, uint64_t seed) {
  DiagnosisDataset d;
  d.class_names = {"ALL", "AML", "CML"};
  d.feature_names = {"f0", "noise"};
  Rng rng(seed);
  int row = 0;
  for (int32_t k = 0; k < 3; ++k) {
    for (int i = 0; i < per_class; ++i) {
      d.ids.push_back("p" + std::to_string(1000 + row++));
      d.labels.push_back(k);
      d.subtypes.push_back(i % 2 ? "s" : "");
      d.x.push_back(2.0 * k + rng.next_double());
      d.x.push_back(rng.next_double());
    }
  }
  return d;
}

GbdtParams quick_params() {
  GbdtParams p;
  p.n_iterations = 30;
  p.learning_rate = 0.3;
  p.max_leaves = 4;
  p.min_samples_leaf = 1;
  return p;
}

}  // namespace

TEST_CASE("softmax basics") {
  double raw[3] = {0, 0, 0};
  double p[3];
  softmax_probs(raw, 3, p);
  CHECK(p[0] == doctest::Approx(1.0 / 3));
  CHECK(p[1] == doctest::Approx(1.0 / 3));
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));

  // extreme scores stay finite
  double raw2[3] = {1000, 0, -1000};
  softmax_probs(raw2, 3, p);
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(p[2]));
}

TEST_CASE("gradients and hessians match finite differences") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int32_t k = 3;
    std::vector<double> raw(3);
    for (auto& v : raw) v = 2.0 * rng.next_double() - 1.0;
    int32_t label = static_cast<int32_t>(rng.bounded(3));
    std::vector<int32_t> y = {label};

    std::vector<double> g(3), h(3);
    multiclass_grad_hess(raw.data(), k, label, g.data(), h.data());

    for (int32_t i = 0; i < k; ++i) {
      const double eps_g = 1e-6;
      std::vector<double> up = raw, dn = raw;
      up[static_cast<size_t>(i)] += eps_g;
      dn[static_cast<size_t>(i)] -= eps_g;
      double fd_grad = (multiclass_log_loss(up, k, y) -
                        multiclass_log_loss(dn, k, y)) /
                       (2 * eps_g);
      CHECK(std::abs(fd_grad - g[static_cast<size_t>(i)]) <=
            1e-6 * std::max(1.0, std::abs(g[static_cast<size_t>(i)])));

      const double eps_h = 1e-4;
      up = raw;
      dn = raw;
      up[static_cast<size_t>(i)] += eps_h;
      dn[static_cast<size_t>(i)] -= eps_h;
      double fd_hess = (multiclass_log_loss(up, k, y) -
                        2 * multiclass_log_loss(raw, k, y) +
                        multiclass_log_loss(dn, k, y)) /
                       (eps_h * eps_h);
      CHECK(std::abs(fd_hess - h[static_cast<size_t>(i)]) <=
            1e-5 * std::max(1.0, std::abs(h[static_cast<size_t>(i)])));
    }
  }
}

TEST_CASE("zero iterations predict the class priors") {
  DiagnosisDataset d;
  d.class_names = {"ALL", "AML", "CML"};
  d.feature_names = {"f"};
  // class counts 3 / 5 / 2
  std::vector<int32_t> labels = {0, 0, 0, 1, 1, 1, 1, 1, 2, 2};
  for (size_t i = 0; i < labels.size(); ++i) {
    d.ids.push_back("p" + std::to_string(i));
    d.labels.push_back(labels[i]);
    d.subtypes.push_back("");
    d.x.push_back(static_cast<double>(i));
  }
  GbdtParams p;
  p.n_iterations = 0;
  GbdtModel m = train_gbdt(d, p);
  CHECK(m.trees.empty());

  double row = 0.0;
  std::vector<double> probs = predict_proba(m, &row);
  CHECK(std::abs(probs[0] - 0.3) < 1e-12);
  CHECK(std::abs(probs[1] - 0.5) < 1e-12);
  CHECK(std::abs(probs[2] - 0.2) < 1e-12);

  // initial loss equals the entropy of the label distribution
  std::vector<double> raw;
  for (size_t i = 0; i < labels.size(); ++i) {
    for (double b : m.base_scores) raw.push_back(b);
  }
  double expected = -(0.3 * std::log(0.3) + 0.5 * std::log(0.5) +
                      0.2 * std::log(0.2));
  CHECK(std::abs(multiclass_log_loss(raw, 3, d.labels) - expected) < 1e-9);
}

TEST_CASE("quantile bin edges") {
  CHECK(quantile_bin_edges({}, 256).empty());
  CHECK(quantile_bin_edges({5, 5, 5}, 256).empty());

  auto mid = quantile_bin_edges({4, 1, 3, 2}, 256);
  CHECK(mid == std::vector<double>{1.5, 2.5, 3.5});

  auto dup = quantile_bin_edges({1, 1, 1, 2, 2, 9}, 256);
  CHECK(dup == std::vector<double>{1.5, 5.5});

  double nan = std::nan("");
  auto skip = quantile_bin_edges({nan, 1, 2, nan, 3, 4}, 256);
  CHECK(skip == std::vector<double>{1.5, 2.5, 3.5});

  auto coarse = quantile_bin_edges({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 4);
  CHECK(coarse == std::vector<double>{2.5, 5.5, 7.5});

  CHECK_THROWS_AS((void)quantile_bin_edges({1, 2}, 1), Error);
}

TEST_CASE("bin lookup is the left-inclusive inverse of the edges") {
  std::vector<double> edges = {1.5, 2.5};
  CHECK(bin_of(1.0, edges) == 0);
  CHECK(bin_of(1.5, edges) == 0);  // a value on the edge stays left
  CHECK(bin_of(2.0, edges) == 1);
  CHECK(bin_of(2.5, edges) == 1);
  CHECK(bin_of(99.0, edges) == 2);
  CHECK(bin_of(0.0, {}) == 0);
}

TEST_CASE("separable classes reach a perfect fit") {
  DiagnosisDataset d = separable_dataset(50, 11);
  GbdtModel m = train_gbdt(d, quick_params());
  DiagnosisEval eval = evaluate_diagnosis(m, d);
  CHECK(eval.macro_f1 == 1.0);
  CHECK(eval.accuracy == 1.0);
}

TEST_CASE("missing values route informatively") {
  DiagnosisDataset d;
  d.class_names = {"ALL", "AML", "CML"};
  d.feature_names = {"f"};
  for (int i = 0; i < 60; ++i) {
    d.ids.push_back("p" + std::to_string(i));
    int32_t k = i % 3;
    d.labels.push_back(k);
    d.subtypes.push_back("");
    d.x.push_back(k == 0 ? std::nan("") : static_cast<double>(k));
  }
  GbdtModel m = train_gbdt(d, quick_params());
  DiagnosisEval eval = evaluate_diagnosis(m, d);
  CHECK(eval.macro_f1 == 1.0);

  double missing = std::nan("");
  std::vector<double> p = predict_proba(m, &missing);
  CHECK(p[0] > 0.9);
  double two = 2.0;
  p = predict_proba(m, &two);
  CHECK(p[2] > 0.9);
}

TEST_CASE("row order does not change the model") {
  DiagnosisDataset d = separable_dataset(20, 5);
  DiagnosisDataset shuffled;
  shuffled.class_names = d.class_names;
  shuffled.feature_names = d.feature_names;
  std::vector<size_t> perm(d.ids.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(3);
  for (size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.bounded(i)]);
  }
  for (size_t i : perm) {
    shuffled.ids.push_back(d.ids[i]);
    shuffled.labels.push_back(d.labels[i]);
    shuffled.subtypes.push_back(d.subtypes[i]);
    shuffled.x.push_back(d.x[2 * i]);
    shuffled.x.push_back(d.x[2 * i + 1]);
  }

  GbdtModel a = train_gbdt(d, quick_params());
  GbdtModel b = train_gbdt(shuffled, quick_params());
  std::string pa = temp_path("model_order_a.json");
  std::string pb = temp_path("model_order_b.json");
  save_model(a, pa);
  save_model(b, pb);
  CHECK(read_file(pa) == read_file(pb));
  std::remove(pa.c_str());
  std::remove(pb.c_str());
}

TEST_CASE("serial twin trains the identical model") {
  DiagnosisDataset d = separable_dataset(25, 77);
  GbdtModel a = train_gbdt(d, quick_params());
  GbdtModel b = reference::train_gbdt(d, quick_params());
  std::string pa = temp_path("model_par.json");
  std::string pb = temp_path("model_ser.json");
  save_model(a, pa);
  save_model(b, pb);
  CHECK(read_file(pa) == read_file(pb));
  std::remove(pa.c_str());
  std::remove(pb.c_str());
}

TEST_CASE("model files round trip") {
  DiagnosisDataset d = separable_dataset(20, 21);
  GbdtModel m = train_gbdt(d, quick_params());
  std::string path = temp_path("model_rt.json");
  save_model(m, path);
  GbdtModel back = load_model(path);

  CHECK(back.class_names == m.class_names);
  CHECK(back.feature_names == m.feature_names);
  CHECK(back.base_scores == m.base_scores);
  CHECK(back.params.n_iterations == m.params.n_iterations);
  CHECK(back.params.learning_rate == m.params.learning_rate);
  CHECK(back.trees.size() == m.trees.size());

  // predictions agree bitwise
  for (int64_t r = 0; r < d.rows(); ++r) {
    auto pa = predict_raw(m, d.x.data() + 2 * r);
    auto pb = predict_raw(back, d.x.data() + 2 * r);
    CHECK(pa == pb);
  }
  std::remove(path.c_str());
}

TEST_CASE("model files are validated on load") {
  DiagnosisDataset d = separable_dataset(10, 2);
  GbdtParams p = quick_params();
  p.n_iterations = 2;
  GbdtModel m = train_gbdt(d, p);
  std::string path = temp_path("model_bad.json");

  save_model(m, path);
  std::string text = read_file(path);
  auto pos = text.find("\"f0\"");
  REQUIRE(pos != std::string::npos);
  std::string tampered = text;
  tampered.replace(pos, 4, "\"fX\"");  // breaks the schema hash
  write_file_atomic(path, tampered);
  CHECK_THROWS_AS((void)load_model(path), Error);

  write_file_atomic(path, "{}");
  CHECK_THROWS_AS((void)load_model(path), Error);
  write_file_atomic(path, "not json");
  CHECK_THROWS_AS((void)load_model(path), Error);
  std::remove(path.c_str());
}

TEST_CASE("training preconditions") {
  DiagnosisDataset d = separable_dataset(5, 1);
  GbdtParams p = quick_params();

  DiagnosisDataset empty = d;
  empty.ids.clear();
  empty.labels.clear();
  empty.subtypes.clear();
  empty.x.clear();
  CHECK_THROWS_AS((void)train_gbdt(empty, p), Error);

  DiagnosisDataset missing_class = d;
  for (auto& y : missing_class.labels) {
    if (y == 2) y = 1;
  }
  CHECK_THROWS_AS((void)train_gbdt(missing_class, p), Error);

  DiagnosisDataset dup = d;
  dup.ids[1] = dup.ids[0];
  CHECK_THROWS_AS((void)train_gbdt(dup, p), Error);

  GbdtParams bad = p;
  bad.learning_rate = 0;
  CHECK_THROWS_AS((void)train_gbdt(d, bad), Error);
  bad = p;
  bad.max_leaves = 1;
  CHECK_THROWS_AS((void)train_gbdt(d, bad), Error);
}

TEST_CASE("prediction rejects mismatched schemas") {
  DiagnosisDataset d = separable_dataset(5, 1);
  GbdtParams p = quick_params();
  p.n_iterations = 1;
  GbdtModel m = train_gbdt(d, p);
  DiagnosisDataset other = d;
  other.feature_names = {"f0", "different"};
  CHECK_THROWS_AS((void)predict_dataset(m, other), Error);
}

TEST_CASE("grid enumeration is ordered and complete") {
  GbdtGrid grid;
  GbdtParams base;
  base.min_samples_leaf = 3;
  auto points = enumerate_grid(grid, base);
  REQUIRE(points.size() == 16);
  CHECK(points[0].n_iterations == 50);
  CHECK(points[0].learning_rate == 0.1);
  CHECK(points[0].max_leaves == 4);
  CHECK(points[0].l2 == 0.5);
  CHECK(points[0].min_samples_leaf == 3);  // carried from the base
  CHECK(points[15].n_iterations == 150);
  CHECK(points[15].learning_rate == 0.3);
  CHECK(points[15].max_leaves == 8);
  CHECK(points[15].l2 == 2.0);
  // l2 varies fastest
  CHECK(points[1].l2 == 2.0);
  CHECK(points[1].n_iterations == 50);
}

TEST_CASE("grid search is deterministic and ties go first") {
  DiagnosisDataset d = separable_dataset(20, 31);
  GbdtGrid grid;
  grid.n_iterations = {10, 20};
  grid.learning_rate = {0.3};
  grid.max_leaves = {4};
  grid.l2 = {1.0};
  GbdtParams base;
  base.min_samples_leaf = 1;

  GridSearchResult a = grid_search(d, grid, base, 3, 0.25, 42);
  GridSearchResult b = grid_search(d, grid, base, 3, 0.25, 42);
  REQUIRE(a.table.size() == 2);
  CHECK(a.table[0].mean_macro_f1 == b.table[0].mean_macro_f1);
  CHECK(a.table[1].per_repeat == b.table[1].per_repeat);
  CHECK(a.best.n_iterations == b.best.n_iterations);

  // separable data scores perfectly everywhere, so the earliest point wins
  CHECK(a.table[0].mean_macro_f1 == 1.0);
  CHECK(a.table[1].mean_macro_f1 == 1.0);
  CHECK(a.best.n_iterations == 10);
}

TEST_CASE("grid search rejects bad settings") {
  DiagnosisDataset d = separable_dataset(10, 3);
  GbdtGrid grid;
  GbdtParams base;
  CHECK_THROWS_AS((void)grid_search(d, grid, base, 0, 0.2, 1), Error);
  CHECK_THROWS_AS((void)grid_search(d, grid, base, 5, 0.0, 1), Error);
  CHECK_THROWS_AS((void)grid_search(d, grid, base, 5, 1.0, 1), Error);
}

TEST_CASE("differential count features") {
  const Taxonomy& t = default_taxonomy();
  Cohort c;
  PatientRecord p1;
  p1.patient_id = "p1";
  p1.age = {2, 4};
  p1.diagnosis = Diagnosis::aml;
  p1.subtype = "M3";
  p1.labs[0] = 7.5;
  PatientRecord p2;
  p2.patient_id = "p2";
  p2.age = {2, 4};
  p2.diagnosis = Diagnosis::all;
  c.patients = {p1, p2};

  auto cell = [](const char* id, const char* pid, const char* label) {
    CellRecord r;
    r.cell_id = id;
    r.patient_id = pid;
    r.roi_id = "roi";
    r.bbox = {0, 0, 5, 5};
    r.consensus_label = label;
    return r;
  };
  c.cells = {cell("c1", "p1", "Lymphocyte"), cell("c2", "p1", "Lymphocyte"),
             cell("c3", "p1", "Monocyte"),   cell("c4", "p1", "Artifact"),
             cell("c5", "p2", "Artifact"),   cell("c6", "p2", "Not Identifiable")};
  // an unresolved cell never counts
  CellRecord un = cell("c7", "p1", "Lymphocyte");
  un.consensus_label = std::nullopt;
  c.cells.push_back(un);

  // default: every model class counts
  FeatureTable f = build_dcc_features(c, t, false);
  REQUIRE(f.feature_names.size() == 33);
  CHECK(f.feature_names[0] == "dcc:Myeloid Precursor Cell");
  REQUIRE(f.ids == std::vector<std::string>{"p1", "p2"});
  CHECK(f.labels == std::vector<std::string>{"AML", "ALL"});
  CHECK(f.subtypes == std::vector<std::string>{"M3", ""});

  auto col = [](const FeatureTable& ft, const std::string& name) {
    for (size_t i = 0; i < ft.feature_names.size(); ++i) {
      if (ft.feature_names[i] == name) return static_cast<int64_t>(i);
    }
    return static_cast<int64_t>(-1);
  };
  int64_t lym = col(f, "dcc:Lymphocyte");
  int64_t mono = col(f, "dcc:Monocyte");
  int64_t art = col(f, "dcc:Artifact");
  REQUIRE(lym >= 0);
  REQUIRE(mono >= 0);
  REQUIRE(art >= 0);
  CHECK(f.at(0, lym) == 0.5);
  CHECK(f.at(0, mono) == 0.25);
  CHECK(f.at(0, art) == 0.25);
  CHECK(f.at(1, art) == 0.5);
  CHECK(f.at(1, col(f, "dcc:Not Identifiable")) == 0.5);
  CHECK(f.at(1, lym) == 0.0);

  // the curated subset drops non-nucleated classes from the denominator too
  FeatureTable n = build_dcc_features(c, t, false, true);
  REQUIRE(n.feature_names.size() == 26);
  CHECK(col(n, "dcc:Artifact") == -1);
  CHECK(col(n, "dcc:Not Identifiable") == -1);
  CHECK(col(n, "dcc:Smudge Cell") == -1);
  CHECK(n.at(0, col(n, "dcc:Lymphocyte")) == doctest::Approx(2.0 / 3.0));
  CHECK(n.at(0, col(n, "dcc:Monocyte")) == doctest::Approx(1.0 / 3.0));

  // p2 then has no countable cells at all: whole row missing
  for (int64_t j = 0; j < n.cols(); ++j) CHECK(std::isnan(n.at(1, j)));

  // lab columns append after the counts
  FeatureTable g = build_dcc_features(c, t, true);
  REQUIRE(g.feature_names.size() == 33 + 18);
  CHECK(g.feature_names[33] == "lab:14804-9");
  CHECK(g.at(0, 33) == 7.5);
  CHECK(std::isnan(g.at(1, 33)));
}

TEST_CASE("feature tables become datasets") {
  FeatureTable f;
  f.feature_names = {"a"};
  f.ids = {"p1", "p2", "p3"};
  f.labels = {"AML", "all", "CML"};
  f.subtypes = {"", "x", ""};
  f.values = {1.0, 2.0, 3.0};
  DiagnosisDataset d = dataset_from_features(f);
  CHECK(d.class_names == std::vector<std::string>{"ALL", "AML", "CML"});
  CHECK(d.labels == std::vector<int32_t>{1, 0, 2});
  CHECK(d.x == f.values);

  f.labels[0] = "CLL";
  CHECK_THROWS_AS((void)dataset_from_features(f), Error);
}
