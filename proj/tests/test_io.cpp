#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "marrowbench/error.hpp"
#include "marrowbench/io.hpp"
#include "marrowbench/taxonomy.hpp"

using namespace marrowbench;

namespace {

std::string temp_path(const char* name) {
  return std::string(MB_BINARY_DIR) + "/" + name;
}

}  // namespace

TEST_CASE("csv parsing handles the dialect") {
  Csv c = parse_csv("a,b,c\n1,2,3\n4,5,6\n");
  CHECK(c.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(c.rows.size() == 2);
  CHECK(c.rows[1] == std::vector<std::string>{"4", "5", "6"});
  CHECK(c.column("b") == 1);
  CHECK(c.column("missing") == -1);

  SUBCASE("quoting") {
    Csv q = parse_csv("name,note\n\"a,b\",\"line1\nline2\"\n\"say \"\"hi\"\"\",x\n");
    REQUIRE(q.rows.size() == 2);
    CHECK(q.rows[0][0] == "a,b");
    CHECK(q.rows[0][1] == "line1\nline2");
    CHECK(q.rows[1][0] == "say \"hi\"");
  }
  SUBCASE("crlf input") {
    Csv q = parse_csv("a,b\r\n1,2\r\n");
    REQUIRE(q.rows.size() == 1);
    CHECK(q.rows[0] == std::vector<std::string>{"1", "2"});
  }
  SUBCASE("missing trailing newline") {
    Csv q = parse_csv("a,b\n1,2");
    REQUIRE(q.rows.size() == 1);
    CHECK(q.rows[0][1] == "2");
  }
  SUBCASE("ragged rows rejected") {
    CHECK_THROWS_AS(parse_csv("a,b\n1,2,3\n"), Error);
  }
  SUBCASE("unterminated quote rejected") {
    CHECK_THROWS_AS(parse_csv("a,b\n\"oops,2\n"), Error);
  }
  SUBCASE("empty text rejected") {
    CHECK_THROWS_AS(parse_csv(""), Error);
  }
}

TEST_CASE("csv formatting round trips exotic fields") {
  Csv c;
  c.header = {"k", "v"};
  c.rows = {{"plain", "with,comma"},
            {"with \"quotes\"", "multi\nline"},
            {"", "trailing space "}};
  Csv back = parse_csv(format_csv(c));
  CHECK(back.header == c.header);
  CHECK(back.rows == c.rows);
}

TEST_CASE("atomic write replaces content and leaves no temp files") {
  namespace fs = std::filesystem;
  std::string path = temp_path("atomic_test.txt");
  write_file_atomic(path, "first");
  CHECK(read_file(path) == "first");
  write_file_atomic(path, "second");
  CHECK(read_file(path) == "second");
  int stray = 0;
  for (const auto& entry : fs::directory_iterator(MB_BINARY_DIR)) {
    if (entry.path().filename().string().find("atomic_test.txt.tmp") == 0) ++stray;
  }
  CHECK(stray == 0);
  std::remove(path.c_str());
  CHECK_THROWS_AS((void)read_file(path), Error);
}

TEST_CASE("patients csv round trip") {
  std::vector<PatientRecord> ps(2);
  ps[0].patient_id = "p-001";
  ps[0].age = {4, 6};
  ps[0].sex = Sex::female;
  ps[0].diagnosis = Diagnosis::all;
  ps[0].subtype = "pre-B";
  ps[0].split = SplitSet::train;
  ps[0].labs[0] = 4.25;
  ps[0].labs[17] = 130.0;
  ps[1].patient_id = "p-002";
  ps[1].age = {0, 2};
  ps[1].sex = Sex::male;
  ps[1].diagnosis = Diagnosis::cml;
  ps[1].split = SplitSet::unassigned;

  std::string path = temp_path("patients_rt.csv");
  write_patients_csv(path, ps);
  auto back = read_patients_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].patient_id == "p-001");
  CHECK(back[0].age.lo == 4.0);
  CHECK(back[0].age.hi == 6.0);
  CHECK(back[0].sex == Sex::female);
  CHECK(back[0].diagnosis == Diagnosis::all);
  CHECK(back[0].subtype == "pre-B");
  CHECK(back[0].split == SplitSet::train);
  REQUIRE(back[0].labs[0].has_value());
  CHECK(*back[0].labs[0] == 4.25);
  REQUIRE(back[0].labs[17].has_value());
  CHECK(*back[0].labs[17] == 130.0);
  CHECK_FALSE(back[0].labs[5].has_value());
  CHECK(back[1].split == SplitSet::unassigned);
  CHECK_FALSE(back[1].labs[0].has_value());
  std::remove(path.c_str());
}

TEST_CASE("patients csv schema errors") {
  std::string path = temp_path("patients_bad.csv");
  write_file_atomic(path, "patient_id,age_lo\np1,4\n");
  CHECK_THROWS_AS((void)read_patients_csv(path), Error);
  try {
    (void)read_patients_csv(path);
  } catch (const Error& e) {
    CHECK(e.code == ErrorCode::schema);
  }
  std::remove(path.c_str());
}

TEST_CASE("cells jsonl round trip with unresolved sentinel") {
  std::vector<CellRecord> cells(2);
  cells[0] = {"c1", "p1", "roi-a", {1, 2, 30, 40}, "Lymphocyte"};
  cells[1] = {"c2", "p1", "roi-a", {5, 6, 20, 20}, std::nullopt};

  std::string path = temp_path("cells_rt.jsonl");
  write_cells_jsonl(path, cells);

  // the unresolved cell is exported with the sentinel label
  auto lines = read_lines(path);
  REQUIRE(lines.size() == 2);
  CHECK(lines[1].find("no consensus found") != std::string::npos);

  auto back = read_cells_jsonl(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].cell_id == "c1");
  CHECK(back[0].bbox.w == 30.0);
  REQUIRE(back[0].consensus_label.has_value());
  CHECK(*back[0].consensus_label == "Lymphocyte");
  CHECK_FALSE(back[1].consensus_label.has_value());
  std::remove(path.c_str());
}

TEST_CASE("cells jsonl schema errors") {
  std::string path = temp_path("cells_bad.jsonl");
  write_file_atomic(path, R"({"cell_id":"c1","patient_id":"p1","roi_id":"r"})"
                          "\n");
  CHECK_THROWS_AS((void)read_cells_jsonl(path), Error);  // missing bbox
  write_file_atomic(path,
                    R"({"cell_id":"c1","patient_id":"p1","roi_id":"r","bbox":[1,2,3]})"
                    "\n");
  CHECK_THROWS_AS((void)read_cells_jsonl(path), Error);  // bbox arity
  write_file_atomic(path, "not json\n");
  CHECK_THROWS_AS((void)read_cells_jsonl(path), Error);
  std::remove(path.c_str());
}

TEST_CASE("observations jsonl round trip") {
  std::vector<Observation> obs(2);
  obs[0] = {"c1", "obs-a", "Lymphocyte", 1, ObsView::labeling, 2.5};
  obs[1] = {"c1", "obs-b", "Monocyte", 2, ObsView::validation, std::nullopt};

  std::string path = temp_path("obs_rt.jsonl");
  write_observations_jsonl(path, obs);
  auto back = read_observations_jsonl(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].observer_id == "obs-a");
  CHECK(back[0].view == ObsView::labeling);
  REQUIRE(back[0].duration_s.has_value());
  CHECK(*back[0].duration_s == 2.5);
  CHECK(back[1].view == ObsView::validation);
  CHECK_FALSE(back[1].duration_s.has_value());
  std::remove(path.c_str());
}

TEST_CASE("observations jsonl rejects bad records") {
  std::string path = temp_path("obs_bad.jsonl");
  write_file_atomic(
      path,
      R"({"cell_id":"c","observer_id":"o","label":"L","seq":1,"view":"guessing"})"
      "\n");
  CHECK_THROWS_AS((void)read_observations_jsonl(path), Error);
  write_file_atomic(
      path,
      R"({"cell_id":"c","observer_id":"o","label":"L","seq":1,"view":"labeling","duration_s":-3})"
      "\n");
  CHECK_THROWS_AS((void)read_observations_jsonl(path), Error);
  write_file_atomic(
      path, R"({"cell_id":"c","observer_id":"o","label":"L","view":"labeling"})"
            "\n");
  CHECK_THROWS_AS((void)read_observations_jsonl(path), Error);  // missing seq
  std::remove(path.c_str());
}

TEST_CASE("detections and ground truth group by region") {
  std::string path = temp_path("dets.jsonl");
  write_file_atomic(path,
                    R"({"roi_id":"r2","bbox":[0,0,10,10],"score":0.5})"
                    "\n"
                    R"({"roi_id":"r1","bbox":[5,5,10,10],"score":0.25})"
                    "\n"
                    R"({"roi_id":"r2","bbox":[3,3,8,8],"score":1})"
                    "\n");
  auto dets = read_detections_jsonl(path);
  REQUIRE(dets.size() == 2);
  REQUIRE(dets.count("r2") == 1);
  CHECK(dets["r1"].size() == 1);
  CHECK(dets["r2"].size() == 2);
  CHECK(dets["r2"][0].score == 0.5);  // file order within a region

  write_file_atomic(path, R"({"roi_id":"r1","bbox":[0,0,10,10],"score":1.5})"
                          "\n");
  CHECK_THROWS_AS((void)read_detections_jsonl(path), Error);  // score > 1

  write_file_atomic(path,
                    R"({"roi_id":"r1","bbox":[0,0,10,10]})"
                    "\n"
                    R"({"roi_id":"r1","bbox":[8,8,4,4]})"
                    "\n");
  auto gts = read_groundtruth_jsonl(path);
  CHECK(gts["r1"].size() == 2);
  std::remove(path.c_str());
}

TEST_CASE("predictions csv enforces the canonical column order") {
  const Taxonomy& t = default_taxonomy();
  const size_t k = t.model_classes.size();

  PredictionsFile f;
  f.preds.n_classes = static_cast<int32_t>(k);
  f.cell_ids = {"c1", "c2"};
  f.preds.truth = {model_class_index(t, "Lymphocyte"),
                   model_class_index(t, "Monocyte")};
  f.preds.scores.assign(2 * k, 0.0);
  f.preds.scores[static_cast<size_t>(f.preds.truth[0])] = 1.0;
  f.preds.scores[k + static_cast<size_t>(f.preds.truth[1])] = 0.75;

  std::string path = temp_path("preds_rt.csv");
  write_predictions_csv(path, f, t);
  PredictionsFile back = read_predictions_csv(path, t);
  CHECK(back.cell_ids == f.cell_ids);
  CHECK(back.preds.truth == f.preds.truth);
  CHECK(back.preds.scores == f.preds.scores);

  // permuting two score columns must be rejected
  Csv csv = read_csv(path);
  std::swap(csv.header[2], csv.header[3]);
  write_file_atomic(path, format_csv(csv));
  CHECK_THROWS_AS((void)read_predictions_csv(path, t), Error);
  std::remove(path.c_str());
}

TEST_CASE("features csv keeps missing cells missing") {
  FeatureTable table;
  table.feature_names = {"dcc:Lymphocyte", "lab:6690-2"};
  table.ids = {"p1", "p2"};
  table.labels = {"ALL", "AML"};
  table.subtypes = {"pre-B", ""};
  table.values = {0.25, 11.5, std::nan(""), std::nan("")};

  std::string path = temp_path("features_rt.csv");
  write_features_csv(path, table);
  FeatureTable back = read_features_csv(path);
  CHECK(back.feature_names == table.feature_names);
  CHECK(back.ids == table.ids);
  CHECK(back.labels == table.labels);
  CHECK(back.subtypes == table.subtypes);
  CHECK(back.at(0, 0) == 0.25);
  CHECK(back.at(0, 1) == 11.5);
  CHECK(std::isnan(back.at(1, 0)));
  CHECK(std::isnan(back.at(1, 1)));
  std::remove(path.c_str());
}

TEST_CASE("doubles survive a text round trip exactly") {
  FeatureTable table;
  table.feature_names = {"x"};
  table.ids = {"p1", "p2", "p3"};
  table.labels = {"ALL", "AML", "CML"};
  table.subtypes = {"", "", ""};
  table.values = {0.1, 1.0 / 3.0, 6.02214076e23};

  std::string path = temp_path("features_prec.csv");
  write_features_csv(path, table);
  FeatureTable back = read_features_csv(path);
  CHECK(back.at(0, 0) == 0.1);
  CHECK(back.at(1, 0) == 1.0 / 3.0);
  CHECK(back.at(2, 0) == 6.02214076e23);
  std::remove(path.c_str());
}
