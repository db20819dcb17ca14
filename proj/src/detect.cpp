#include "marrowbench/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "marrowbench/error.hpp"

namespace marrowbench {

double iou(const BoundingBox& a, const BoundingBox& b) {
  double ax2 = a.x + a.w, ay2 = a.y + a.h;
  double bx2 = b.x + b.w, by2 = b.y + b.h;
  double iw = std::min(ax2, bx2) - std::max(a.x, b.x);
  double ih = std::min(ay2, by2) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  double inter = iw * ih;
  double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double f1_score(double precision, double recall) {
  double s = precision + recall;
  if (s <= 0.0) return 0.0;
  return 2.0 * precision * recall / s;
}

namespace {

std::vector<size_t> score_order(const std::vector<Detection>& dets) {
  std::vector<size_t> order(dets.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&dets](size_t a, size_t b) {
    return dets[a].score > dets[b].score;
  });
  return order;
}

}  // namespace

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh,
                           int64_t max_out) {
  std::vector<size_t> order = score_order(dets);
  std::vector<Detection> kept;
  for (size_t cand : order) {
    if (static_cast<int64_t>(kept.size()) >= max_out) break;
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (iou(dets[cand].box, k.box) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(dets[cand]);
  }
  return kept;
}

namespace reference {

// Literal O(n^2) formulation: a box survives when no higher-ranked surviving
// box overlaps it past the threshold.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh,
                           int64_t max_out) {
  std::vector<size_t> order = score_order(dets);
  std::vector<char> alive(dets.size(), 1);
  for (size_t i = 0; i < order.size(); ++i) {
    if (!alive[order[i]]) continue;
    for (size_t j = i + 1; j < order.size(); ++j) {
      if (!alive[order[j]]) continue;
      if (marrowbench::iou(dets[order[i]].box, dets[order[j]].box) > iou_thresh) {
        alive[order[j]] = 0;
      }
    }
  }
  std::vector<Detection> kept;
  for (size_t i : order) {
    if (static_cast<int64_t>(kept.size()) >= max_out) break;
    if (alive[i]) kept.push_back(dets[i]);
  }
  return kept;
}

}  // namespace reference

namespace {

void check_map(const ScoreMap& map) {
  size_t plane = static_cast<size_t>(map.height) * static_cast<size_t>(map.width);
  if (map.height <= 0 || map.width <= 0 || map.scores.size() != plane) {
    throw Error(ErrorCode::precondition, "decode_peaks",
                "score plane shape does not match height*width");
  }
  bool has_w = !map.size_w.empty(), has_h = !map.size_h.empty();
  if (has_w != has_h || (has_w && (map.size_w.size() != plane || map.size_h.size() != plane))) {
    throw Error(ErrorCode::precondition, "decode_peaks",
                "size channels must both be absent or both match the plane");
  }
}

bool is_peak(const ScoreMap& map, int64_t r, int64_t c, const PeakDecodeOptions& opt) {
  double v = map.at(r, c);
  if (v < opt.threshold) return false;
  int64_t r0 = std::max<int64_t>(0, r - opt.radius);
  int64_t r1 = std::min<int64_t>(map.height - 1, r + opt.radius);
  int64_t c0 = std::max<int64_t>(0, c - opt.radius);
  int64_t c1 = std::min<int64_t>(map.width - 1, c + opt.radius);
  for (int64_t rr = r0; rr <= r1; ++rr) {
    for (int64_t cc = c0; cc <= c1; ++cc) {
      if (rr == r && cc == c) continue;
      double u = map.at(rr, cc);
      if (u > v) return false;
      if (u == v && (rr < r || (rr == r && cc < c))) return false;
    }
  }
  return true;
}

Detection peak_to_detection(const ScoreMap& map, int64_t r, int64_t c,
                            const PeakDecodeOptions& opt) {
  double cx = static_cast<double>(c) + 0.5;
  double cy = static_cast<double>(r) + 0.5;
  double w = opt.default_size, h = opt.default_size;
  if (!map.size_w.empty()) {
    size_t i = static_cast<size_t>(r * map.width + c);
    w = map.size_w[i];
    h = map.size_h[i];
  }
  Detection d;
  d.box = {cx - w / 2.0, cy - h / 2.0, w, h};
  d.score = map.at(r, c);
  return d;
}

// Peaks arrive in row-major order; emit them sorted by descending score with
// (row, col) as the tie break, capped at max_peaks.
std::vector<Detection> finish_peaks(const ScoreMap& map,
                                    std::vector<std::pair<int64_t, int64_t>> peaks,
                                    const PeakDecodeOptions& opt) {
  std::stable_sort(peaks.begin(), peaks.end(),
                   [&map](const auto& a, const auto& b) {
                     return map.at(a.first, a.second) > map.at(b.first, b.second);
                   });
  if (opt.max_peaks >= 0 && static_cast<int64_t>(peaks.size()) > opt.max_peaks) {
    peaks.resize(static_cast<size_t>(opt.max_peaks));
  }
  std::vector<Detection> out;
  out.reserve(peaks.size());
  for (auto [r, c] : peaks) out.push_back(peak_to_detection(map, r, c, opt));
  return out;
}

}  // namespace

std::vector<Detection> decode_peaks(const ScoreMap& map, const PeakDecodeOptions& opt) {
  check_map(map);
  std::vector<std::vector<std::pair<int64_t, int64_t>>> per_row(
      static_cast<size_t>(map.height));
#pragma omp parallel for schedule(dynamic, 4)
  for (int64_t r = 0; r < map.height; ++r) {
    auto& row = per_row[static_cast<size_t>(r)];
    for (int64_t c = 0; c < map.width; ++c) {
      if (is_peak(map, r, c, opt)) row.emplace_back(r, c);
    }
  }
  std::vector<std::pair<int64_t, int64_t>> peaks;
  for (const auto& row : per_row) peaks.insert(peaks.end(), row.begin(), row.end());
  return finish_peaks(map, std::move(peaks), opt);
}

namespace reference {

std::vector<Detection> decode_peaks(const ScoreMap& map, const PeakDecodeOptions& opt) {
  check_map(map);
  std::vector<std::pair<int64_t, int64_t>> peaks;
  for (int64_t r = 0; r < map.height; ++r) {
    for (int64_t c = 0; c < map.width; ++c) {
      if (is_peak(map, r, c, opt)) peaks.emplace_back(r, c);
    }
  }
  return finish_peaks(map, std::move(peaks), opt);
}

}  // namespace reference

PrF detection_prf(const DetectionCounts& c) {
  PrF out;
  if (c.tp == 0 && c.fp == 0 && c.fn == 0) {
    out.precision = out.recall = out.f1 = 1.0;
    return out;
  }
  double tp = static_cast<double>(c.tp);
  out.precision = (c.tp + c.fp) > 0 ? tp / static_cast<double>(c.tp + c.fp) : 0.0;
  out.recall = (c.tp + c.fn) > 0 ? tp / static_cast<double>(c.tp + c.fn) : 0.0;
  out.f1 = f1_score(out.precision, out.recall);
  return out;
}

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<BoundingBox>& gts, double iou_min) {
  MatchResult res;
  std::vector<size_t> order = score_order(dets);
  std::vector<char> gt_taken(gts.size(), 0);
  for (size_t di : order) {
    double best = 0.0;
    int64_t best_gt = -1;
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (gt_taken[gi]) continue;
      double v = iou(dets[di].box, gts[gi]);
      if (v >= iou_min && v > best) {
        best = v;
        best_gt = static_cast<int64_t>(gi);
      }
    }
    MatchRecord rec;
    rec.det_index = static_cast<int64_t>(di);
    rec.score = dets[di].score;
    if (best_gt >= 0) {
      gt_taken[static_cast<size_t>(best_gt)] = 1;
      rec.gt_index = best_gt;
      rec.is_tp = true;
      res.counts.tp++;
    } else {
      rec.is_tp = false;
      res.counts.fp++;
    }
    res.records.push_back(rec);
  }
  for (size_t gi = 0; gi < gts.size(); ++gi) {
    if (!gt_taken[gi]) {
      res.unmatched_gts.push_back(static_cast<int64_t>(gi));
      res.counts.fn++;
    }
  }
  return res;
}

double average_precision(const std::vector<MatchRecord>& records, int64_t n_gt) {
  if (n_gt == 0) return records.empty() ? 1.0 : 0.0;
  const size_t n = records.size();
  std::vector<double> prec(n);
  int64_t tp = 0;
  for (size_t k = 0; k < n; ++k) {
    if (records[k].is_tp) ++tp;
    prec[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  // precision envelope: best precision achieved at this rank or later
  for (size_t k = n; k-- > 1;) {
    prec[k - 1] = std::max(prec[k - 1], prec[k]);
  }
  double sum = 0.0;
  for (size_t k = 0; k < n; ++k) {
    if (records[k].is_tp) sum += prec[k] / static_cast<double>(n_gt);
  }
  return sum;
}

double average_precision(const MatchResult& result) {
  return average_precision(result.records, result.counts.tp + result.counts.fn);
}

}  // namespace marrowbench
