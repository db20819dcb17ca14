#include "marrowbench/io.hpp"

#include <unistd.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "marrowbench/error.hpp"

namespace marrowbench {

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

double parse_double(const std::string& text, const std::string& where) {
  const char* b = text.data();
  const char* e = b + text.size();
  double v = 0;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw Error(ErrorCode::schema, "io",
                where + ": bad number '" + text + "'");
  }
  return v;
}

json parse_json_line(const std::string& line, const std::string& path, size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::schema, "io",
                path + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

std::string require_string(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw Error(ErrorCode::schema, "io", ctx + ": missing string field '" + key + "'");
  }
  return j[key].get<std::string>();
}

double require_number(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw Error(ErrorCode::schema, "io", ctx + ": missing numeric field '" + key + "'");
  }
  return j[key].get<double>();
}

BoundingBox require_bbox(const json& j, const std::string& ctx) {
  if (!j.contains("bbox") || !j["bbox"].is_array() || j["bbox"].size() != 4) {
    throw Error(ErrorCode::schema, "io", ctx + ": bbox must be [x, y, w, h]");
  }
  BoundingBox b;
  double* out[4] = {&b.x, &b.y, &b.w, &b.h};
  for (size_t i = 0; i < 4; ++i) {
    if (!j["bbox"][i].is_number()) {
      throw Error(ErrorCode::schema, "io", ctx + ": bbox must be numeric");
    }
    *out[i] = j["bbox"][i].get<double>();
  }
  return b;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::io, "io", "cannot open for reading: " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) {
    throw Error(ErrorCode::io, "io", "read failed: " + path);
  }
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp =
      target.parent_path() /
      (target.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorCode::io, "io", "cannot open for writing: " + tmp.string());
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(ErrorCode::io, "io", "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::io, "io", "rename failed: " + path);
  }
}

int64_t Csv::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int64_t>(i);
  }
  return -1;
}

Csv parse_csv(const std::string& text) {
  Csv out;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool had_any = false;

  auto end_field = [&]() {
    row.push_back(field);
    field.clear();
  };
  auto end_row = [&]() {
    end_field();
    if (!had_any) {
      out.header = row;
      had_any = true;
    } else {
      out.rows.push_back(row);
    }
    row.clear();
  };

  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;  // swallow CR of CRLF
        field.push_back(c);
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
    }
  }
  if (quoted) {
    throw Error(ErrorCode::schema, "io", "unterminated quote in csv");
  }
  if (!field.empty() || !row.empty()) end_row();

  if (!had_any) {
    throw Error(ErrorCode::schema, "io", "csv has no header row");
  }
  for (size_t r = 0; r < out.rows.size(); ++r) {
    if (out.rows[r].size() != out.header.size()) {
      throw Error(ErrorCode::schema, "io",
                  "csv row " + std::to_string(r + 2) + " has " +
                      std::to_string(out.rows[r].size()) + " fields, expected " +
                      std::to_string(out.header.size()));
    }
  }
  return out;
}

Csv read_csv(const std::string& path) {
  try {
    return parse_csv(read_file(path));
  } catch (Error& e) {
    if (e.code == ErrorCode::schema) {
      throw Error(ErrorCode::schema, "io", path + ": " + e.what());
    }
    throw;
  }
}

namespace {

void append_csv_field(std::string& out, const std::string& f) {
  bool needs_quote = f.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs_quote) {
    out += f;
    return;
  }
  out.push_back('"');
  for (char c : f) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

}  // namespace

std::string format_csv(const Csv& csv) {
  std::string out;
  auto write_row = [&out](const std::vector<std::string>& row) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out.push_back(',');
      append_csv_field(out, row[i]);
    }
    out.push_back('\n');
  };
  write_row(csv.header);
  for (const auto& r : csv.rows) write_row(r);
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::string text = read_file(path);
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

// --- patients ----------------------------------------------------------------

static const std::vector<std::string>& patients_fixed_columns() {
  static const std::vector<std::string> cols = {
      "patient_id", "age_lo",           "age_hi", "sex",
      "leukemia_type", "leukemia_subtype", "split"};
  return cols;
}

std::vector<PatientRecord> read_patients_csv(const std::string& path) {
  Csv csv = read_csv(path);
  std::vector<int64_t> fixed_idx;
  for (const std::string& name : patients_fixed_columns()) {
    int64_t i = csv.column(name);
    if (i < 0) {
      throw Error(ErrorCode::schema, "io", path + ": missing column " + name);
    }
    fixed_idx.push_back(i);
  }
  std::array<int64_t, kNumLabs> lab_idx{};
  for (size_t i = 0; i < kNumLabs; ++i) {
    lab_idx[i] = csv.column(kLabCodes[i]);
    if (lab_idx[i] < 0) {
      throw Error(ErrorCode::schema, "io",
                  path + ": missing lab column " + std::string(kLabCodes[i]));
    }
  }
  if (csv.header.size() != patients_fixed_columns().size() + kNumLabs) {
    throw Error(ErrorCode::schema, "io", path + ": unexpected extra columns");
  }

  std::vector<PatientRecord> out;
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    std::string where = path + " row " + std::to_string(r + 2);
    PatientRecord p;
    p.patient_id = row[static_cast<size_t>(fixed_idx[0])];
    if (p.patient_id.empty()) {
      throw Error(ErrorCode::schema, "io", where + ": empty patient_id");
    }
    p.age.lo = parse_double(row[static_cast<size_t>(fixed_idx[1])], where);
    p.age.hi = parse_double(row[static_cast<size_t>(fixed_idx[2])], where);
    p.sex = parse_sex(row[static_cast<size_t>(fixed_idx[3])]);
    p.diagnosis = parse_diagnosis(row[static_cast<size_t>(fixed_idx[4])]);
    p.subtype = row[static_cast<size_t>(fixed_idx[5])];
    p.split = parse_split(row[static_cast<size_t>(fixed_idx[6])]);
    for (size_t i = 0; i < kNumLabs; ++i) {
      const std::string& cell = row[static_cast<size_t>(lab_idx[i])];
      if (!cell.empty()) p.labs[i] = parse_double(cell, where);
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_patients_csv(const std::string& path,
                        const std::vector<PatientRecord>& patients) {
  Csv csv;
  csv.header = patients_fixed_columns();
  for (const char* code : kLabCodes) csv.header.push_back(code);
  for (const PatientRecord& p : patients) {
    std::vector<std::string> row = {
        p.patient_id,       format_double(p.age.lo),      format_double(p.age.hi),
        sex_name(p.sex),    diagnosis_name(p.diagnosis), p.subtype,
        split_name(p.split)};
    for (const auto& lab : p.labs) {
      row.push_back(lab ? format_double(*lab) : std::string());
    }
    csv.rows.push_back(std::move(row));
  }
  write_file_atomic(path, format_csv(csv));
}

// --- cells ---------------------------------------------------------------------

std::vector<CellRecord> read_cells_jsonl(const std::string& path) {
  std::vector<CellRecord> out;
  auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::string ctx = path + ":" + std::to_string(i + 1);
    json j = parse_json_line(lines[i], path, i + 1);
    CellRecord c;
    c.cell_id = require_string(j, "cell_id", ctx);
    c.patient_id = require_string(j, "patient_id", ctx);
    c.roi_id = require_string(j, "roi_id", ctx);
    c.bbox = require_bbox(j, ctx);
    if (j.contains("consensus_label") && !j["consensus_label"].is_null()) {
      if (!j["consensus_label"].is_string()) {
        throw Error(ErrorCode::schema, "io", ctx + ": consensus_label must be a string");
      }
      std::string label = j["consensus_label"].get<std::string>();
      if (label != kNoConsensusLabel) c.consensus_label = label;
    }
    out.push_back(std::move(c));
  }
  return out;
}

void write_cells_jsonl(const std::string& path, const std::vector<CellRecord>& cells) {
  std::string out;
  for (const CellRecord& c : cells) {
    ordered_json j;
    j["cell_id"] = c.cell_id;
    j["patient_id"] = c.patient_id;
    j["roi_id"] = c.roi_id;
    j["bbox"] = {c.bbox.x, c.bbox.y, c.bbox.w, c.bbox.h};
    j["consensus_label"] = c.consensus_label ? *c.consensus_label : kNoConsensusLabel;
    out += j.dump();
    out.push_back('\n');
  }
  write_file_atomic(path, out);
}

// --- observations ----------------------------------------------------------------

std::vector<Observation> read_observations_jsonl(const std::string& path) {
  std::vector<Observation> out;
  auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::string ctx = path + ":" + std::to_string(i + 1);
    json j = parse_json_line(lines[i], path, i + 1);
    Observation o;
    o.cell_id = require_string(j, "cell_id", ctx);
    o.observer_id = require_string(j, "observer_id", ctx);
    o.label = require_string(j, "label", ctx);
    if (!j.contains("seq") || !j["seq"].is_number_integer()) {
      throw Error(ErrorCode::schema, "io", ctx + ": missing integer field 'seq'");
    }
    o.seq = j["seq"].get<int64_t>();
    o.view = parse_obs_view(require_string(j, "view", ctx));
    if (j.contains("duration_s") && !j["duration_s"].is_null()) {
      if (!j["duration_s"].is_number()) {
        throw Error(ErrorCode::schema, "io", ctx + ": duration_s must be a number");
      }
      double d = j["duration_s"].get<double>();
      if (!(d >= 0.0) || !std::isfinite(d)) {
        throw Error(ErrorCode::schema, "io", ctx + ": duration_s must be >= 0");
      }
      o.duration_s = d;
    }
    out.push_back(std::move(o));
  }
  return out;
}

void write_observations_jsonl(const std::string& path,
                              const std::vector<Observation>& obs) {
  std::string out;
  for (const Observation& o : obs) {
    ordered_json j;
    j["cell_id"] = o.cell_id;
    j["observer_id"] = o.observer_id;
    j["label"] = o.label;
    j["seq"] = o.seq;
    j["view"] = obs_view_name(o.view);
    if (o.duration_s) j["duration_s"] = *o.duration_s;
    out += j.dump();
    out.push_back('\n');
  }
  write_file_atomic(path, out);
}

// --- detections ------------------------------------------------------------------

std::map<std::string, std::vector<Detection>> read_detections_jsonl(
    const std::string& path) {
  std::map<std::string, std::vector<Detection>> out;
  auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::string ctx = path + ":" + std::to_string(i + 1);
    json j = parse_json_line(lines[i], path, i + 1);
    std::string roi = require_string(j, "roi_id", ctx);
    Detection d;
    d.box = require_bbox(j, ctx);
    d.score = require_number(j, "score", ctx);
    if (!(d.score >= 0.0 && d.score <= 1.0)) {
      throw Error(ErrorCode::schema, "io", ctx + ": score must lie in [0,1]");
    }
    out[roi].push_back(d);
  }
  return out;
}

std::map<std::string, std::vector<BoundingBox>> read_groundtruth_jsonl(
    const std::string& path) {
  std::map<std::string, std::vector<BoundingBox>> out;
  auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::string ctx = path + ":" + std::to_string(i + 1);
    json j = parse_json_line(lines[i], path, i + 1);
    std::string roi = require_string(j, "roi_id", ctx);
    out[roi].push_back(require_bbox(j, ctx));
  }
  return out;
}

// --- predictions -------------------------------------------------------------------

PredictionsFile read_predictions_csv(const std::string& path, const Taxonomy& t) {
  Csv csv = read_csv(path);
  const size_t k = t.model_classes.size();
  if (csv.header.size() != 2 + k || csv.header[0] != "cell_id" ||
      csv.header[1] != "truth") {
    throw Error(ErrorCode::schema, "io",
                path + ": header must be cell_id, truth, then one column per "
                       "model class");
  }
  for (size_t i = 0; i < k; ++i) {
    if (normalize_class_name(csv.header[2 + i]) !=
        normalize_class_name(t.model_classes[i])) {
      throw Error(ErrorCode::schema, "io",
                  path + ": score column " + std::to_string(i + 3) +
                      " must be " + t.model_classes[i]);
    }
  }
  PredictionsFile out;
  out.preds.n_classes = static_cast<int32_t>(k);
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    std::string where = path + " row " + std::to_string(r + 2);
    out.cell_ids.push_back(row[0]);
    out.preds.truth.push_back(model_class_index(t, row[1]));
    for (size_t i = 0; i < k; ++i) {
      double v = parse_double(row[2 + i], where);
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::schema, "io", where + ": non-finite score");
      }
      out.preds.scores.push_back(v);
    }
  }
  return out;
}

void write_predictions_csv(const std::string& path, const PredictionsFile& file,
                           const Taxonomy& t) {
  Csv csv;
  csv.header = {"cell_id", "truth"};
  for (const auto& c : t.model_classes) csv.header.push_back(c);
  for (size_t r = 0; r < file.cell_ids.size(); ++r) {
    std::vector<std::string> row;
    row.push_back(file.cell_ids[r]);
    row.push_back(
        t.model_classes[static_cast<size_t>(file.preds.truth[r])]);
    const double* s = file.preds.row(static_cast<int64_t>(r));
    for (int32_t i = 0; i < file.preds.n_classes; ++i) {
      row.push_back(format_double(s[i]));
    }
    csv.rows.push_back(std::move(row));
  }
  write_file_atomic(path, format_csv(csv));
}

// --- features ----------------------------------------------------------------------

FeatureTable read_features_csv(const std::string& path) {
  Csv csv = read_csv(path);
  if (csv.header.size() < 4 || csv.header[0] != "patient_id" ||
      csv.header[1] != "label" || csv.header[2] != "subtype") {
    throw Error(ErrorCode::schema, "io",
                path + ": header must be patient_id, label, subtype, then at "
                       "least one feature");
  }
  FeatureTable out;
  for (size_t i = 3; i < csv.header.size(); ++i) {
    out.feature_names.push_back(csv.header[i]);
  }
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    std::string where = path + " row " + std::to_string(r + 2);
    out.ids.push_back(row[0]);
    out.labels.push_back(row[1]);
    out.subtypes.push_back(row[2]);
    for (size_t i = 3; i < csv.header.size(); ++i) {
      if (row[i].empty()) {
        out.values.push_back(std::nan(""));
      } else {
        double v = parse_double(row[i], where);
        if (!std::isfinite(v)) {
          throw Error(ErrorCode::schema, "io", where + ": non-finite feature");
        }
        out.values.push_back(v);
      }
    }
  }
  return out;
}

void write_features_csv(const std::string& path, const FeatureTable& table) {
  Csv csv;
  csv.header = {"patient_id", "label", "subtype"};
  for (const auto& f : table.feature_names) csv.header.push_back(f);
  for (int64_t r = 0; r < table.rows(); ++r) {
    std::vector<std::string> row = {table.ids[static_cast<size_t>(r)],
                                    table.labels[static_cast<size_t>(r)],
                                    table.subtypes[static_cast<size_t>(r)]};
    for (int64_t c = 0; c < table.cols(); ++c) {
      double v = table.at(r, c);
      row.push_back(std::isnan(v) ? std::string() : format_double(v));
    }
    csv.rows.push_back(std::move(row));
  }
  write_file_atomic(path, format_csv(csv));
}

}  // namespace marrowbench
