#include "marrowbench/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "marrowbench/error.hpp"
#include "marrowbench/hash.hpp"
#include "marrowbench/rng.hpp"
#include "marrowbench/version.hpp"

namespace marrowbench {

DiagnosisDataset dataset_from_features(const FeatureTable& table) {
  DiagnosisDataset d;
  for (const char* n : kDiagnosisNames) d.class_names.push_back(n);
  d.ids = table.ids;
  d.subtypes = table.subtypes;
  d.feature_names = table.feature_names;
  d.x = table.values;
  for (const std::string& label : table.labels) {
    d.labels.push_back(static_cast<int32_t>(parse_diagnosis(label)));
  }
  return d;
}

const std::vector<std::string>& non_nucleated_classes() {
  static const std::vector<std::string> v = {
      "Thrombocyte",  "Giant Platelet", "Neutrophil Extracellular Trap",
      "Spicule",      "Smudge Cell",    "Artifact",
      "Not Identifiable"};
  return v;
}

FeatureTable build_dcc_features(const Cohort& cohort, const Taxonomy& taxonomy,
                                bool include_labs, bool nucleated_only) {
  std::set<std::string> excluded;
  if (nucleated_only) {
    for (const std::string& c : non_nucleated_classes()) {
      excluded.insert(normalize_class_name(c));
    }
  }
  std::vector<int32_t> countable;  // model class indices used as features
  for (int32_t k = 0; k < taxonomy.n_model_classes(); ++k) {
    if (!excluded.count(normalize_class_name(taxonomy.model_classes[static_cast<size_t>(k)]))) {
      countable.push_back(k);
    }
  }

  std::map<std::string, const PatientRecord*> by_id;
  for (const PatientRecord& p : cohort.patients) {
    if (!by_id.emplace(p.patient_id, &p).second) {
      throw Error(ErrorCode::precondition, "features",
                  "duplicate patient id: " + p.patient_id);
    }
  }
  std::map<std::string, std::vector<int64_t>> counts;
  for (const auto& [id, p] : by_id) {
    counts[id].assign(static_cast<size_t>(taxonomy.n_model_classes()), 0);
  }
  for (const CellRecord& c : cohort.cells) {
    if (!c.consensus_label) continue;
    auto it = counts.find(c.patient_id);
    if (it == counts.end()) {
      throw Error(ErrorCode::precondition, "features",
                  "cell " + c.cell_id + " references unknown patient " + c.patient_id);
    }
    int32_t k = model_class_index(taxonomy, *c.consensus_label);
    it->second[static_cast<size_t>(k)]++;
  }

  FeatureTable out;
  for (int32_t k : countable) {
    out.feature_names.push_back(
        "dcc:" + taxonomy.model_classes[static_cast<size_t>(k)]);
  }
  if (include_labs) {
    for (const char* code : kLabCodes) {
      out.feature_names.push_back(std::string("lab:") + code);
    }
  }

  for (const auto& [id, p] : by_id) {
    out.ids.push_back(id);
    out.labels.push_back(diagnosis_name(p->diagnosis));
    out.subtypes.push_back(p->subtype);
    const auto& cls = counts[id];
    int64_t total = 0;
    for (int32_t k : countable) total += cls[static_cast<size_t>(k)];
    for (int32_t k : countable) {
      out.values.push_back(total > 0 ? static_cast<double>(cls[static_cast<size_t>(k)]) /
                                           static_cast<double>(total)
                                     : std::nan(""));
    }
    if (include_labs) {
      for (size_t i = 0; i < kNumLabs; ++i) {
        out.values.push_back(p->labs[i] ? *p->labs[i] : std::nan(""));
      }
    }
  }
  return out;
}

// --- objective ---------------------------------------------------------------

void softmax_probs(const double* raw, int32_t k, double* probs) {
  double mx = raw[0];
  for (int32_t i = 1; i < k; ++i) mx = std::max(mx, raw[i]);
  double sum = 0;
  for (int32_t i = 0; i < k; ++i) {
    probs[i] = std::exp(raw[i] - mx);
    sum += probs[i];
  }
  for (int32_t i = 0; i < k; ++i) probs[i] /= sum;
}

void multiclass_grad_hess(const double* raw, int32_t k, int32_t label,
                          double* grad, double* hess) {
  std::vector<double> p(static_cast<size_t>(k));
  softmax_probs(raw, k, p.data());
  for (int32_t i = 0; i < k; ++i) {
    grad[i] = p[static_cast<size_t>(i)] - (i == label ? 1.0 : 0.0);
    hess[i] = p[static_cast<size_t>(i)] * (1.0 - p[static_cast<size_t>(i)]);
  }
}

double multiclass_log_loss(const std::vector<double>& raw, int32_t k,
                           const std::vector<int32_t>& labels) {
  const size_t n = labels.size();
  if (raw.size() != n * static_cast<size_t>(k)) {
    throw Error(ErrorCode::precondition, "gbdt", "raw score shape mismatch");
  }
  double loss = 0;
  std::vector<double> p(static_cast<size_t>(k));
  for (size_t r = 0; r < n; ++r) {
    softmax_probs(raw.data() + r * static_cast<size_t>(k), k, p.data());
    double q = std::max(p[static_cast<size_t>(labels[r])], 1e-15);
    loss -= std::log(q);
  }
  return loss / static_cast<double>(n);
}

// --- binning -----------------------------------------------------------------

std::vector<double> quantile_bin_edges(std::vector<double> values, int32_t max_bins) {
  if (max_bins < 2) {
    throw Error(ErrorCode::precondition, "gbdt", "max_bins must be at least 2");
  }
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return std::isnan(v); }),
               values.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> edges;
  const int64_t n = static_cast<int64_t>(values.size());
  if (n <= 1) return edges;  // constant or empty feature: one bin
  if (n <= max_bins) {
    // every distinct value gets a bin; edges at midpoints
    for (int64_t i = 0; i + 1 < n; ++i) {
      edges.push_back(0.5 * (values[static_cast<size_t>(i)] +
                             values[static_cast<size_t>(i + 1)]));
    }
    return edges;
  }
  for (int32_t b = 1; b < max_bins; ++b) {
    // value index at quantile b / max_bins
    int64_t idx = (static_cast<int64_t>(b) * n) / max_bins;
    idx = std::min<int64_t>(idx, n - 1);
    double edge = 0.5 * (values[static_cast<size_t>(idx - 1)] +
                         values[static_cast<size_t>(idx)]);
    if (edges.empty() || edge > edges.back()) edges.push_back(edge);
  }
  return edges;
}

int32_t bin_of(double value, const std::vector<double>& edges) {
  // first edge with value <= edge; edges are strictly increasing
  auto it = std::lower_bound(edges.begin(), edges.end(), value);
  return static_cast<int32_t>(it - edges.begin());
}

// --- training ----------------------------------------------------------------

namespace {

constexpr double kMinSplitGain = 1e-12;
constexpr double kMinHess = 1e-12;

struct BuildContext {
  const DiagnosisDataset* data = nullptr;
  GbdtParams params;
  bool parallel = true;
  std::vector<size_t> order;               // canonical row order by id
  std::vector<std::vector<double>> edges;  // per feature
  std::vector<int32_t> binned;             // canonical rows * features, -1 = missing
  int64_t n = 0;
  int64_t f = 0;

  int32_t bin_at(int64_t row, int64_t feat) const {
    return binned[static_cast<size_t>(row) * static_cast<size_t>(f) +
                  static_cast<size_t>(feat)];
  }
};

struct SplitCand {
  double gain = 0;
  int32_t feature = -1;
  int32_t bin = -1;
  bool missing_left = false;

  bool valid() const { return feature >= 0 && gain > kMinSplitGain; }
};

double leaf_objective(double g, double h, double l2) {
  return g * g / std::max(h + l2, kMinHess);
}

// Best cut for one feature over the node's rows, by gain
//   0.5 * (GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2)).
// Both missing directions are scanned; ties keep missing on the right.
SplitCand best_split_for_feature(const BuildContext& ctx,
                                 const std::vector<int64_t>& rows,
                                 const std::vector<double>& grad,
                                 const std::vector<double>& hess, double g_sum,
                                 double h_sum, int32_t feature) {
  const auto& edges = ctx.edges[static_cast<size_t>(feature)];
  SplitCand best;
  if (edges.empty()) return best;
  const int32_t nbins = static_cast<int32_t>(edges.size()) + 1;

  std::vector<double> hg(static_cast<size_t>(nbins), 0.0);
  std::vector<double> hh(static_cast<size_t>(nbins), 0.0);
  std::vector<int64_t> hc(static_cast<size_t>(nbins), 0);
  double mg = 0, mh = 0;
  int64_t mc = 0;
  for (int64_t r : rows) {
    int32_t b = ctx.bin_at(r, feature);
    if (b < 0) {
      mg += grad[static_cast<size_t>(r)];
      mh += hess[static_cast<size_t>(r)];
      ++mc;
    } else {
      hg[static_cast<size_t>(b)] += grad[static_cast<size_t>(r)];
      hh[static_cast<size_t>(b)] += hess[static_cast<size_t>(r)];
      hc[static_cast<size_t>(b)]++;
    }
  }

  const double parent = leaf_objective(g_sum, h_sum, ctx.params.l2);
  const int64_t n_node = static_cast<int64_t>(rows.size());
  double gl = 0, hl = 0;
  int64_t cl = 0;
  for (int32_t b = 0; b + 1 < nbins; ++b) {
    gl += hg[static_cast<size_t>(b)];
    hl += hh[static_cast<size_t>(b)];
    cl += hc[static_cast<size_t>(b)];
    // missing goes right
    {
      int64_t left_n = cl, right_n = n_node - cl;
      if (left_n >= ctx.params.min_samples_leaf &&
          right_n >= ctx.params.min_samples_leaf) {
        double gain = 0.5 * (leaf_objective(gl, hl, ctx.params.l2) +
                             leaf_objective(g_sum - gl, h_sum - hl, ctx.params.l2) -
                             parent);
        if (gain > kMinSplitGain && gain > best.gain) {
          best = {gain, feature, b, false};
        }
      }
    }
    // missing goes left
    if (mc > 0) {
      double gml = gl + mg, hml = hl + mh;
      int64_t left_n = cl + mc, right_n = n_node - cl - mc;
      if (left_n >= ctx.params.min_samples_leaf &&
          right_n >= ctx.params.min_samples_leaf) {
        double gain = 0.5 * (leaf_objective(gml, hml, ctx.params.l2) +
                             leaf_objective(g_sum - gml, h_sum - hml, ctx.params.l2) -
                             parent);
        if (gain > kMinSplitGain && gain > best.gain) {
          best = {gain, feature, b, true};
        }
      }
    }
  }
  return best;
}

SplitCand find_best_split(const BuildContext& ctx, const std::vector<int64_t>& rows,
                          const std::vector<double>& grad,
                          const std::vector<double>& hess, double g_sum,
                          double h_sum) {
  std::vector<SplitCand> per_feature(static_cast<size_t>(ctx.f));
#pragma omp parallel for schedule(dynamic) if (ctx.parallel)
  for (int64_t feat = 0; feat < ctx.f; ++feat) {
    per_feature[static_cast<size_t>(feat)] = best_split_for_feature(
        ctx, rows, grad, hess, g_sum, h_sum, static_cast<int32_t>(feat));
  }
  SplitCand best;
  for (const SplitCand& c : per_feature) {  // ascending feature order
    if (c.valid() && c.gain > best.gain) best = c;
  }
  return best;
}

struct OpenNode {
  int32_t node_index = -1;
  std::vector<int64_t> rows;
  double g_sum = 0, h_sum = 0;
  SplitCand cand;
};

// Grows one tree on the given gradient column and immediately applies the
// leaf updates to the raw-score column.
Tree grow_tree(const BuildContext& ctx, const std::vector<double>& grad,
               const std::vector<double>& hess, std::vector<double>& f_column) {
  Tree tree;
  tree.nodes.emplace_back();

  OpenNode root;
  root.node_index = 0;
  root.rows.resize(static_cast<size_t>(ctx.n));
  std::iota(root.rows.begin(), root.rows.end(), int64_t{0});
  for (int64_t r = 0; r < ctx.n; ++r) {
    root.g_sum += grad[static_cast<size_t>(r)];
    root.h_sum += hess[static_cast<size_t>(r)];
  }
  root.cand = find_best_split(ctx, root.rows, grad, hess, root.g_sum, root.h_sum);

  std::vector<OpenNode> open;
  open.push_back(std::move(root));
  int32_t leaves = 1;

  while (leaves < ctx.params.max_leaves) {
    // best-improvement expansion; ties pick the oldest node
    size_t pick = open.size();
    double best_gain = kMinSplitGain;
    for (size_t i = 0; i < open.size(); ++i) {
      if (open[i].cand.valid() && open[i].cand.gain > best_gain) {
        best_gain = open[i].cand.gain;
        pick = i;
      }
    }
    if (pick == open.size()) break;

    OpenNode node = std::move(open[pick]);
    open.erase(open.begin() + static_cast<long>(pick));

    const SplitCand& cand = node.cand;
    const auto& edges = ctx.edges[static_cast<size_t>(cand.feature)];

    OpenNode left, right;
    for (int64_t r : node.rows) {
      int32_t b = ctx.bin_at(r, cand.feature);
      bool goes_left = b < 0 ? cand.missing_left : b <= cand.bin;
      OpenNode& dst = goes_left ? left : right;
      dst.rows.push_back(r);
      dst.g_sum += grad[static_cast<size_t>(r)];
      dst.h_sum += hess[static_cast<size_t>(r)];
    }

    left.node_index = static_cast<int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    right.node_index = static_cast<int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();

    TreeNode& parent = tree.nodes[static_cast<size_t>(node.node_index)];
    parent.feature = cand.feature;
    parent.threshold = edges[static_cast<size_t>(cand.bin)];
    parent.missing_left = cand.missing_left;
    parent.left = left.node_index;
    parent.right = right.node_index;

    left.cand = find_best_split(ctx, left.rows, grad, hess, left.g_sum, left.h_sum);
    right.cand = find_best_split(ctx, right.rows, grad, hess, right.g_sum, right.h_sum);
    open.push_back(std::move(left));
    open.push_back(std::move(right));
    ++leaves;
  }

  for (const OpenNode& node : open) {
    double value = -ctx.params.learning_rate * node.g_sum /
                   std::max(node.h_sum + ctx.params.l2, kMinHess);
    tree.nodes[static_cast<size_t>(node.node_index)].value = value;
    for (int64_t r : node.rows) f_column[static_cast<size_t>(r)] += value;
  }
  return tree;
}

void validate_dataset(const DiagnosisDataset& data) {
  if (data.rows() == 0) {
    throw Error(ErrorCode::precondition, "gbdt", "empty training set");
  }
  if (data.cols() == 0) {
    throw Error(ErrorCode::precondition, "gbdt", "no features");
  }
  if (data.n_classes() < 2) {
    throw Error(ErrorCode::precondition, "gbdt", "need at least two classes");
  }
  if (data.x.size() != static_cast<size_t>(data.rows()) *
                           static_cast<size_t>(data.cols()) ||
      data.labels.size() != data.ids.size() ||
      data.subtypes.size() != data.ids.size()) {
    throw Error(ErrorCode::precondition, "gbdt", "dataset shape mismatch");
  }
  std::vector<int64_t> seen(static_cast<size_t>(data.n_classes()), 0);
  for (int32_t y : data.labels) {
    if (y < 0 || y >= data.n_classes()) {
      throw Error(ErrorCode::precondition, "gbdt", "label out of range");
    }
    seen[static_cast<size_t>(y)]++;
  }
  for (int32_t k = 0; k < data.n_classes(); ++k) {
    if (seen[static_cast<size_t>(k)] == 0) {
      throw Error(ErrorCode::precondition, "gbdt",
                  "class absent from training labels: " +
                      data.class_names[static_cast<size_t>(k)]);
    }
  }
}

GbdtModel train_gbdt_impl(const DiagnosisDataset& data, const GbdtParams& params,
                          bool parallel) {
  validate_dataset(data);
  if (params.n_iterations < 0 || params.learning_rate <= 0 ||
      params.max_leaves < 2 || params.min_samples_leaf < 1 || params.l2 < 0) {
    throw Error(ErrorCode::precondition, "gbdt", "invalid hyperparameters");
  }

  BuildContext ctx;
  ctx.data = &data;
  ctx.params = params;
  ctx.parallel = parallel;
  ctx.n = data.rows();
  ctx.f = data.cols();

  // canonical row order: sort by patient id so input order cannot matter
  ctx.order.resize(static_cast<size_t>(ctx.n));
  std::iota(ctx.order.begin(), ctx.order.end(), size_t{0});
  std::sort(ctx.order.begin(), ctx.order.end(), [&data](size_t a, size_t b) {
    return data.ids[a] < data.ids[b];
  });
  for (size_t i = 1; i < ctx.order.size(); ++i) {
    if (data.ids[ctx.order[i]] == data.ids[ctx.order[i - 1]]) {
      throw Error(ErrorCode::precondition, "gbdt",
                  "duplicate row id: " + data.ids[ctx.order[i]]);
    }
  }

  ctx.edges.resize(static_cast<size_t>(ctx.f));
  for (int64_t feat = 0; feat < ctx.f; ++feat) {
    std::vector<double> col;
    col.reserve(static_cast<size_t>(ctx.n));
    for (int64_t r = 0; r < ctx.n; ++r) {
      col.push_back(data.at(r, feat));
    }
    ctx.edges[static_cast<size_t>(feat)] = quantile_bin_edges(col, params.max_bins);
  }
  ctx.binned.resize(static_cast<size_t>(ctx.n) * static_cast<size_t>(ctx.f));
  for (int64_t r = 0; r < ctx.n; ++r) {
    for (int64_t feat = 0; feat < ctx.f; ++feat) {
      double v = data.at(static_cast<int64_t>(ctx.order[static_cast<size_t>(r)]), feat);
      ctx.binned[static_cast<size_t>(r) * static_cast<size_t>(ctx.f) +
                 static_cast<size_t>(feat)] =
          std::isnan(v) ? -1 : bin_of(v, ctx.edges[static_cast<size_t>(feat)]);
    }
  }

  const int32_t k = data.n_classes();
  GbdtModel model;
  model.class_names = data.class_names;
  model.feature_names = data.feature_names;
  model.params = params;
  model.base_scores.resize(static_cast<size_t>(k));
  std::vector<int64_t> counts(static_cast<size_t>(k), 0);
  for (int32_t y : data.labels) counts[static_cast<size_t>(y)]++;
  for (int32_t c = 0; c < k; ++c) {
    model.base_scores[static_cast<size_t>(c)] =
        std::log(static_cast<double>(counts[static_cast<size_t>(c)]) /
                 static_cast<double>(ctx.n));
  }

  // raw scores in canonical row order
  std::vector<double> f_mat(static_cast<size_t>(ctx.n) * static_cast<size_t>(k));
  for (int64_t r = 0; r < ctx.n; ++r) {
    for (int32_t c = 0; c < k; ++c) {
      f_mat[static_cast<size_t>(r) * static_cast<size_t>(k) +
            static_cast<size_t>(c)] = model.base_scores[static_cast<size_t>(c)];
    }
  }
  std::vector<int32_t> y(static_cast<size_t>(ctx.n));
  for (int64_t r = 0; r < ctx.n; ++r) {
    y[static_cast<size_t>(r)] = data.labels[ctx.order[static_cast<size_t>(r)]];
  }

  std::vector<double> grad(static_cast<size_t>(ctx.n));
  std::vector<double> hess(static_cast<size_t>(ctx.n));
  std::vector<double> g_all(static_cast<size_t>(ctx.n) * static_cast<size_t>(k));
  std::vector<double> h_all(static_cast<size_t>(ctx.n) * static_cast<size_t>(k));
  std::vector<double> f_col(static_cast<size_t>(ctx.n));

  for (int32_t iter = 0; iter < params.n_iterations; ++iter) {
#pragma omp parallel for schedule(static) if (parallel)
    for (int64_t r = 0; r < ctx.n; ++r) {
      multiclass_grad_hess(
          f_mat.data() + static_cast<size_t>(r) * static_cast<size_t>(k), k,
          y[static_cast<size_t>(r)],
          g_all.data() + static_cast<size_t>(r) * static_cast<size_t>(k),
          h_all.data() + static_cast<size_t>(r) * static_cast<size_t>(k));
    }
    model.trees.emplace_back();
    for (int32_t c = 0; c < k; ++c) {
      for (int64_t r = 0; r < ctx.n; ++r) {
        grad[static_cast<size_t>(r)] =
            g_all[static_cast<size_t>(r) * static_cast<size_t>(k) +
                  static_cast<size_t>(c)];
        hess[static_cast<size_t>(r)] =
            h_all[static_cast<size_t>(r) * static_cast<size_t>(k) +
                  static_cast<size_t>(c)];
        f_col[static_cast<size_t>(r)] =
            f_mat[static_cast<size_t>(r) * static_cast<size_t>(k) +
                  static_cast<size_t>(c)];
      }
      model.trees.back().push_back(grow_tree(ctx, grad, hess, f_col));
      for (int64_t r = 0; r < ctx.n; ++r) {
        f_mat[static_cast<size_t>(r) * static_cast<size_t>(k) +
              static_cast<size_t>(c)] = f_col[static_cast<size_t>(r)];
      }
    }
  }
  return model;
}

}  // namespace

GbdtModel train_gbdt(const DiagnosisDataset& data, const GbdtParams& params) {
  return train_gbdt_impl(data, params, true);
}

namespace reference {
GbdtModel train_gbdt(const DiagnosisDataset& data, const GbdtParams& params) {
  return train_gbdt_impl(data, params, false);
}
}  // namespace reference

// --- prediction -----------------------------------------------------------------

namespace {

double tree_value(const Tree& tree, const double* row) {
  int32_t i = 0;
  while (tree.nodes[static_cast<size_t>(i)].feature >= 0) {
    const TreeNode& n = tree.nodes[static_cast<size_t>(i)];
    double v = row[n.feature];
    bool left = std::isnan(v) ? n.missing_left : v <= n.threshold;
    i = left ? n.left : n.right;
  }
  return tree.nodes[static_cast<size_t>(i)].value;
}

}  // namespace

std::vector<double> predict_raw(const GbdtModel& m, const double* row) {
  std::vector<double> out = m.base_scores;
  for (const auto& iter : m.trees) {
    for (int32_t c = 0; c < m.n_classes(); ++c) {
      out[static_cast<size_t>(c)] += tree_value(iter[static_cast<size_t>(c)], row);
    }
  }
  return out;
}

std::vector<double> predict_proba(const GbdtModel& m, const double* row) {
  std::vector<double> raw = predict_raw(m, row);
  std::vector<double> probs(raw.size());
  softmax_probs(raw.data(), m.n_classes(), probs.data());
  return probs;
}

std::vector<double> predict_dataset(const GbdtModel& m, const DiagnosisDataset& d) {
  if (d.feature_names != m.feature_names) {
    std::string detail = "feature schema mismatch";
    for (size_t i = 0; i < std::max(d.feature_names.size(), m.feature_names.size());
         ++i) {
      std::string got = i < d.feature_names.size() ? d.feature_names[i] : "<none>";
      std::string want = i < m.feature_names.size() ? m.feature_names[i] : "<none>";
      if (got != want) {
        detail += ": column " + std::to_string(i + 1) + " is '" + got +
                  "', model expects '" + want + "'";
        break;
      }
    }
    throw Error(ErrorCode::precondition, "gbdt", detail);
  }
  std::vector<double> out(static_cast<size_t>(d.rows()) *
                          static_cast<size_t>(m.n_classes()));
  const int64_t n = d.rows();
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < n; ++r) {
    std::vector<double> p =
        predict_proba(m, d.x.data() + static_cast<size_t>(r) *
                                          static_cast<size_t>(d.cols()));
    std::copy(p.begin(), p.end(),
              out.begin() + static_cast<long>(r) * m.n_classes());
  }
  return out;
}

DiagnosisEval evaluate_diagnosis(const GbdtModel& m, const DiagnosisDataset& d) {
  PredictionSet p;
  p.n_classes = m.n_classes();
  p.truth = d.labels;
  p.scores = predict_dataset(m, d);
  DiagnosisEval out;
  out.confusion = confusion(p);
  out.per_class = per_class_prf(out.confusion);
  double sum = 0;
  int64_t correct = 0;
  for (int32_t k = 0; k < m.n_classes(); ++k) {
    sum += out.per_class[static_cast<size_t>(k)].f1;
    correct += out.confusion.at(k, k);
  }
  out.macro_f1 = sum / static_cast<double>(m.n_classes());
  out.accuracy = static_cast<double>(correct) / static_cast<double>(d.rows());
  return out;
}

// --- grid search ------------------------------------------------------------------

std::vector<GbdtParams> enumerate_grid(const GbdtGrid& grid, const GbdtParams& base) {
  std::vector<GbdtParams> out;
  for (int32_t it : grid.n_iterations) {
    for (double lr : grid.learning_rate) {
      for (int32_t leaves : grid.max_leaves) {
        for (double l2 : grid.l2) {
          GbdtParams p = base;
          p.n_iterations = it;
          p.learning_rate = lr;
          p.max_leaves = leaves;
          p.l2 = l2;
          out.push_back(p);
        }
      }
    }
  }
  if (out.empty()) {
    throw Error(ErrorCode::precondition, "gbdt", "empty hyperparameter grid");
  }
  return out;
}

namespace {

DiagnosisDataset subset(const DiagnosisDataset& d, const std::vector<int64_t>& rows) {
  DiagnosisDataset out;
  out.class_names = d.class_names;
  out.feature_names = d.feature_names;
  for (int64_t r : rows) {
    out.ids.push_back(d.ids[static_cast<size_t>(r)]);
    out.labels.push_back(d.labels[static_cast<size_t>(r)]);
    out.subtypes.push_back(d.subtypes[static_cast<size_t>(r)]);
    for (int64_t c = 0; c < d.cols(); ++c) out.x.push_back(d.at(r, c));
  }
  return out;
}

double macro_f1_of(const GbdtModel& m, const DiagnosisDataset& holdout) {
  return evaluate_diagnosis(m, holdout).macro_f1;
}

}  // namespace

GridSearchResult grid_search(const DiagnosisDataset& data, const GbdtGrid& grid,
                             const GbdtParams& base, int32_t n_repeats,
                             double holdout_frac, uint64_t seed) {
  validate_dataset(data);
  if (n_repeats < 1 || !(holdout_frac > 0.0 && holdout_frac < 1.0)) {
    throw Error(ErrorCode::precondition, "gbdt", "bad grid search settings");
  }

  // (label, subtype) strata with id-sorted members
  std::map<std::string, std::vector<int64_t>> strata;
  for (int64_t r = 0; r < data.rows(); ++r) {
    std::string key = data.class_names[static_cast<size_t>(
                          data.labels[static_cast<size_t>(r)])] +
                      "|" + data.subtypes[static_cast<size_t>(r)];
    strata[key].push_back(r);
  }
  for (auto& [key, rows] : strata) {
    std::sort(rows.begin(), rows.end(), [&data](int64_t a, int64_t b) {
      return data.ids[static_cast<size_t>(a)] < data.ids[static_cast<size_t>(b)];
    });
  }

  // holdout partitions are fixed before the grid loop so that every grid
  // point scores against identical splits
  std::vector<std::pair<std::vector<int64_t>, std::vector<int64_t>>> repeats;
  for (int32_t rep = 0; rep < n_repeats; ++rep) {
    Rng rng = Rng::substream(seed, "grid.holdout", static_cast<uint64_t>(rep));
    std::vector<int64_t> train, hold;
    for (const auto& [key, members] : strata) {
      std::vector<int64_t> rows = members;
      for (size_t i = rows.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.bounded(i));
        std::swap(rows[i - 1], rows[j]);
      }
      int64_t n_s = static_cast<int64_t>(rows.size());
      int64_t n_hold = 0;
      if (n_s >= 2) {
        n_hold = std::llround(holdout_frac * static_cast<double>(n_s));
        n_hold = std::clamp<int64_t>(n_hold, 1, n_s - 1);
      }
      for (int64_t i = 0; i < n_s; ++i) {
        (i < n_hold ? hold : train).push_back(rows[static_cast<size_t>(i)]);
      }
    }
    if (train.empty() || hold.empty()) {
      throw Error(ErrorCode::precondition, "gbdt",
                  "cohort too small for stratified holdouts");
    }
    std::sort(train.begin(), train.end());
    std::sort(hold.begin(), hold.end());
    repeats.emplace_back(std::move(train), std::move(hold));
  }

  std::vector<GbdtParams> points = enumerate_grid(grid, base);
  GridSearchResult result;
  result.table.resize(points.size());

  for (size_t gi = 0; gi < points.size(); ++gi) {
    GridPointScore& score = result.table[gi];
    score.params = points[gi];
    double sum = 0;
    for (const auto& [train_rows, hold_rows] : repeats) {
      // every stratum keeps at least one training row, so all classes survive
      DiagnosisDataset train_set = subset(data, train_rows);
      DiagnosisDataset hold_set = subset(data, hold_rows);
      GbdtModel m = train_gbdt(train_set, points[gi]);
      double f1 = macro_f1_of(m, hold_set);
      score.per_repeat.push_back(f1);
      sum += f1;
    }
    score.mean_macro_f1 = sum / static_cast<double>(n_repeats);
  }

  size_t best = 0;
  for (size_t gi = 1; gi < points.size(); ++gi) {
    if (result.table[gi].mean_macro_f1 > result.table[best].mean_macro_f1) {
      best = gi;  // strict: ties keep the earliest grid point
    }
  }
  result.best = result.table[best].params;
  return result;
}

// --- persistence -------------------------------------------------------------------

namespace {

std::string schema_hash(const std::vector<std::string>& feature_names) {
  std::string joined;
  for (const auto& f : feature_names) {
    joined += f;
    joined.push_back('\n');
  }
  return fnv1a64_hex(joined);
}

}  // namespace

void save_model(const GbdtModel& m, const std::string& path) {
  nlohmann::ordered_json j;
  j["format"] = "marrowbench.gbdt";
  j["format_version"] = kModelFormatVersion;
  j["classes"] = m.class_names;
  j["features"] = m.feature_names;
  j["feature_schema_hash"] = schema_hash(m.feature_names);
  j["base_scores"] = m.base_scores;
  j["params"] = {{"n_iterations", m.params.n_iterations},
                 {"learning_rate", m.params.learning_rate},
                 {"max_leaves", m.params.max_leaves},
                 {"min_samples_leaf", m.params.min_samples_leaf},
                 {"l2", m.params.l2},
                 {"max_bins", m.params.max_bins}};
  nlohmann::ordered_json iters = nlohmann::ordered_json::array();
  for (const auto& iter : m.trees) {
    nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
    for (const Tree& t : iter) {
      nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
      for (const TreeNode& n : t.nodes) {
        nodes.push_back({n.feature, n.threshold, n.missing_left ? 1 : 0, n.left,
                         n.right, n.value});
      }
      per_class.push_back(std::move(nodes));
    }
    iters.push_back(std::move(per_class));
  }
  j["trees"] = std::move(iters);
  write_file_atomic(path, j.dump() + "\n");
}

GbdtModel load_model(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::schema, "model", std::string("bad json: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "marrowbench.gbdt") {
      throw Error(ErrorCode::schema, "model", "not a diagnosis model file");
    }
    if (j.at("format_version").get<std::string>() != kModelFormatVersion) {
      throw Error(ErrorCode::schema, "model",
                  "unsupported model format_version " +
                      j["format_version"].get<std::string>());
    }
    GbdtModel m;
    m.class_names = j.at("classes").get<std::vector<std::string>>();
    m.feature_names = j.at("features").get<std::vector<std::string>>();
    m.base_scores = j.at("base_scores").get<std::vector<double>>();
    const auto& p = j.at("params");
    m.params.n_iterations = p.at("n_iterations").get<int32_t>();
    m.params.learning_rate = p.at("learning_rate").get<double>();
    m.params.max_leaves = p.at("max_leaves").get<int32_t>();
    m.params.min_samples_leaf = p.at("min_samples_leaf").get<int32_t>();
    m.params.l2 = p.at("l2").get<double>();
    m.params.max_bins = p.at("max_bins").get<int32_t>();
    if (j.at("feature_schema_hash").get<std::string>() !=
        schema_hash(m.feature_names)) {
      throw Error(ErrorCode::schema, "model", "feature schema hash mismatch");
    }
    for (const auto& iter : j.at("trees")) {
      std::vector<Tree> per_class;
      for (const auto& tnodes : iter) {
        Tree t;
        for (const auto& n : tnodes) {
          if (!n.is_array() || n.size() != 6) {
            throw Error(ErrorCode::schema, "model", "bad tree node");
          }
          TreeNode node;
          node.feature = n[0].get<int32_t>();
          node.threshold = n[1].get<double>();
          node.missing_left = n[2].get<int>() != 0;
          node.left = n[3].get<int32_t>();
          node.right = n[4].get<int32_t>();
          node.value = n[5].get<double>();
          t.nodes.push_back(node);
        }
        per_class.push_back(std::move(t));
      }
      if (per_class.size() != m.class_names.size()) {
        throw Error(ErrorCode::schema, "model", "tree count mismatch");
      }
      m.trees.push_back(std::move(per_class));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, "model", std::string("bad model: ") + e.what());
  }
}

}  // namespace marrowbench
