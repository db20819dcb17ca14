#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "marrowbench/bootstrap.hpp"
#include "marrowbench/classify.hpp"
#include "marrowbench/detect.hpp"
#include "marrowbench/gbdt.hpp"
#include "marrowbench/rng.hpp"

// Parallel kernels against their serial reference twins on identical inputs.
// Both variants must produce identical outputs; the tests assert that, this
// tool measures the speedup.

namespace {

using namespace marrowbench;

std::vector<Detection> make_detections(int64_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<Detection> dets;
  dets.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    Detection d;
    d.box.x = rng.next_double() * 2048.0;
    d.box.y = rng.next_double() * 2048.0;
    d.box.w = 40.0 + rng.next_double() * 80.0;
    d.box.h = 40.0 + rng.next_double() * 80.0;
    d.score = rng.next_double();
    dets.push_back(d);
  }
  return dets;
}

ScoreMap make_score_map(int64_t side, uint64_t seed) {
  Rng rng(seed);
  ScoreMap m;
  m.height = side;
  m.width = side;
  m.scores.resize(static_cast<size_t>(side * side));
  for (double& s : m.scores) s = rng.next_double();
  return m;
}

PredictionSet make_predictions(int64_t rows, int32_t k, uint64_t seed) {
  Rng rng(seed);
  PredictionSet p;
  p.n_classes = k;
  p.truth.reserve(static_cast<size_t>(rows));
  p.scores.reserve(static_cast<size_t>(rows) * static_cast<size_t>(k));
  for (int64_t i = 0; i < rows; ++i) {
    p.truth.push_back(static_cast<int32_t>(rng.bounded(static_cast<uint64_t>(k))));
    for (int32_t c = 0; c < k; ++c) p.scores.push_back(rng.next_double());
  }
  return p;
}

ClusteredSample make_sample(int64_t n_clusters, int64_t per_cluster) {
  ClusteredSample s;
  int64_t next = 0;
  for (int64_t c = 0; c < n_clusters; ++c) {
    s.cluster_ids.push_back("c" + std::to_string(c));
    std::vector<int64_t> items;
    for (int64_t i = 0; i < per_cluster; ++i) items.push_back(next++);
    s.clusters.push_back(items);
  }
  return s;
}

DiagnosisDataset make_dataset(int64_t rows, int64_t features, uint64_t seed) {
  Rng rng(seed);
  DiagnosisDataset d;
  d.class_names = {"ALL", "AML", "CML"};
  for (int64_t f = 0; f < features; ++f) {
    d.feature_names.push_back("f" + std::to_string(f));
  }
  for (int64_t r = 0; r < rows; ++r) {
    d.ids.push_back("p" + std::to_string(r));
    d.subtypes.push_back("");
    int32_t label = static_cast<int32_t>(rng.bounded(3));
    d.labels.push_back(label);
    for (int64_t f = 0; f < features; ++f) {
      d.x.push_back(rng.next_gauss() + (f % 3 == label ? 1.5 : 0.0));
    }
  }
  return d;
}

void bm_nms(benchmark::State& state) {
  auto dets = make_detections(2000, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nms(dets, 0.3, 544));
  }
}
BENCHMARK(bm_nms);

void bm_nms_reference(benchmark::State& state) {
  auto dets = make_detections(2000, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::nms(dets, 0.3, 544));
  }
}
BENCHMARK(bm_nms_reference);

void bm_decode_peaks(benchmark::State& state) {
  auto map = make_score_map(512, 11);
  PeakDecodeOptions opt;
  opt.threshold = 0.98;
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode_peaks(map, opt));
  }
}
BENCHMARK(bm_decode_peaks);

void bm_decode_peaks_reference(benchmark::State& state) {
  auto map = make_score_map(512, 11);
  PeakDecodeOptions opt;
  opt.threshold = 0.98;
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::decode_peaks(map, opt));
  }
}
BENCHMARK(bm_decode_peaks_reference);

void bm_confusion(benchmark::State& state) {
  auto preds = make_predictions(100000, 33, 13);
  for (auto _ : state) {
    benchmark::DoNotOptimize(confusion(preds));
  }
}
BENCHMARK(bm_confusion);

void bm_confusion_reference(benchmark::State& state) {
  auto preds = make_predictions(100000, 33, 13);
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::confusion(preds));
  }
}
BENCHMARK(bm_confusion_reference);

void bm_bootstrap_replicates(benchmark::State& state) {
  auto sample = make_sample(60, 25);
  Rng rng(17);
  std::vector<double> values(static_cast<size_t>(sample.total_items()));
  for (double& v : values) v = rng.next_gauss();
  StatisticFn stat = [&values](const std::vector<int64_t>& idx) {
    double sum = 0;
    for (int64_t i : idx) sum += values[static_cast<size_t>(i)];
    return sum / static_cast<double>(idx.size());
  };
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        bootstrap_replicates(sample, stat, 500, 5, ResampleMode::two_level));
  }
}
BENCHMARK(bm_bootstrap_replicates);

void bm_bootstrap_replicates_reference(benchmark::State& state) {
  auto sample = make_sample(60, 25);
  Rng rng(17);
  std::vector<double> values(static_cast<size_t>(sample.total_items()));
  for (double& v : values) v = rng.next_gauss();
  StatisticFn stat = [&values](const std::vector<int64_t>& idx) {
    double sum = 0;
    for (int64_t i : idx) sum += values[static_cast<size_t>(i)];
    return sum / static_cast<double>(idx.size());
  };
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::bootstrap_replicates(
        sample, stat, 500, 5, ResampleMode::two_level));
  }
}
BENCHMARK(bm_bootstrap_replicates_reference);

void bm_train_gbdt(benchmark::State& state) {
  auto data = make_dataset(240, 24, 23);
  GbdtParams params;
  params.n_iterations = 30;
  params.max_leaves = 8;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_gbdt(data, params));
  }
}
BENCHMARK(bm_train_gbdt);

void bm_train_gbdt_reference(benchmark::State& state) {
  auto data = make_dataset(240, 24, 23);
  GbdtParams params;
  params.n_iterations = 30;
  params.max_leaves = 8;
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::train_gbdt(data, params));
  }
}
BENCHMARK(bm_train_gbdt_reference);

}  // namespace

BENCHMARK_MAIN();
