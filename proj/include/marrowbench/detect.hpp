#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace marrowbench {

// Axis-aligned box, top-left corner plus size, in pixels.
struct BoundingBox {
  double x = 0, y = 0, w = 0, h = 0;

  double area() const { return (w > 0 && h > 0) ? w * h : 0.0; }
};

// Intersection over union. Degenerate boxes have zero area; an empty union
// yields 0 rather than NaN.
double iou(const BoundingBox& a, const BoundingBox& b);

// Harmonic mean of precision and recall, 0 when both are 0.
double f1_score(double precision, double recall);

struct Detection {
  BoundingBox box;
  double score = 0;
};

// Greedy non-maximum suppression. Candidates are visited in descending score
// order (ties keep input order); a candidate is suppressed when its IoU with
// any already-kept box exceeds iou_thresh strictly. At most max_out boxes are
// returned, in visit order.
std::vector<Detection> nms(const std::vector<Detection>& dets,
                           double iou_thresh = 0.3, int64_t max_out = 544);

// Dense score map, row-major. Size channels are either empty or shaped like
// the score plane; when present they give per-pixel box width and height.
struct ScoreMap {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> scores;
  std::vector<double> size_w;
  std::vector<double> size_h;

  double at(int64_t r, int64_t c) const {
    return scores[static_cast<size_t>(r * width + c)];
  }
};

struct PeakDecodeOptions {
  double threshold = 0.5;
  int64_t radius = 10;        // Chebyshev window radius
  double default_size = 96.0; // box side used when no size channels exist
  int64_t max_peaks = 544;
};

// Local-maximum decoding: a pixel is a peak when its score reaches the
// threshold and no pixel in the Chebyshev window beats it; among equal scores
// the lexicographically smallest (row, col) wins. Boxes are centred on the
// pixel centre. Output is sorted by descending score, ties by (row, col).
std::vector<Detection> decode_peaks(const ScoreMap& map,
                                    const PeakDecodeOptions& opt = {});

namespace reference {
// Serial implementations kept for equivalence tests and benchmarks.
std::vector<Detection> nms(const std::vector<Detection>& dets,
                           double iou_thresh = 0.3, int64_t max_out = 544);
std::vector<Detection> decode_peaks(const ScoreMap& map,
                                    const PeakDecodeOptions& opt = {});
}  // namespace reference

struct DetectionCounts {
  int64_t tp = 0, fp = 0, fn = 0;
};

struct PrF {
  double precision = 0, recall = 0, f1 = 0;
};

// When nothing was expected and nothing was predicted the task was solved
// perfectly; any other zero denominator scores 0.
PrF detection_prf(const DetectionCounts& c);

struct MatchRecord {
  int64_t det_index = -1;  // index into the detection list
  int64_t gt_index = -1;   // matched ground-truth index, -1 for a false positive
  double score = 0;
  bool is_tp = false;
};

struct MatchResult {
  DetectionCounts counts;
  std::vector<MatchRecord> records;     // descending score, ties by det index
  std::vector<int64_t> unmatched_gts;   // false negatives
};

// Greedy matching at a minimum IoU: detections in descending score order each
// claim the still-unmatched ground truth with the highest IoU >= iou_min
// (ties to the lowest ground-truth index).
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<BoundingBox>& gts,
                             double iou_min = 0.5);

// All-points interpolated average precision over a ranked record list.
// records must be sorted by descending score; n_gt counts all ground truths.
double average_precision(const std::vector<MatchRecord>& records, int64_t n_gt);
double average_precision(const MatchResult& result);

}  // namespace marrowbench
