#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "astro/errors.hpp"
#include "astro/ingest.hpp"
#include "astro/metrics.hpp"
#include "astro/model.hpp"
#include "astro/score_set.hpp"
#include "astro/threshold.hpp"

// Batch inference, thresholding, confusion counts and the metric suite, plus
// the single-window latency measurement protocol.
namespace astro {

struct EvalResult {
  ScoreSet scores;
  std::vector<int> predictions;
  ConfusionCounts counts;
  MetricReport report;
};

// End-to-end evaluation: score the windows, threshold at tau, count, report.
inline EvalResult evaluate(AstroModel& model, const WindowStream& windows,
                           const std::vector<size_t>& ids, double tau) {
  EvalResult r;
  r.scores = model.score_windows(windows, ids);
  r.predictions = apply_threshold(r.scores, tau);
  r.counts = confusion(r.predictions, r.scores.labels);
  r.report = metrics(r.counts);
  return r;
}

// Metrics for a pre-scored set (lets external classifier outputs flow through
// the same reporting path).
inline EvalResult evaluate_scores(const ScoreSet& scores, double tau) {
  EvalResult r;
  r.scores = scores;
  r.predictions = apply_threshold(r.scores, tau);
  r.counts = confusion(r.predictions, r.scores.labels);
  r.report = metrics(r.counts);
  return r;
}

struct LatencyReport {
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double mean_ms = 0.0;
  size_t trials = 0;
  size_t warmup = 0;
};

// Wall-clock time of single-window forward passes (batch size 1), cycling
// through the provided windows. The first `warmup` passes are excluded;
// percentiles are nearest-rank over the measured passes. Single-threaded,
// steady-state, data loading excluded.
inline LatencyReport measure_latency(AstroModel& model, const WindowStream& windows,
                                     size_t n_trials = 1000, size_t warmup = 50) {
  if (windows.size() == 0)
    throw ValidationError("measure_latency: no windows available, provide data");
  if (n_trials == 0) throw ValidationError("measure_latency: zero trials requested");

  std::vector<double> samples;
  samples.reserve(n_trials);
  const size_t total = warmup + n_trials;
  for (size_t i = 0; i < total; ++i) {
    WindowBatch b = windows.gather({i % windows.size()});
    const auto t0 = std::chrono::steady_clock::now();
    volatile double sink = model.forward(b.x)[0];
    const auto t1 = std::chrono::steady_clock::now();
    (void)sink;
    if (i >= warmup)
      samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(samples.begin(), samples.end());
  auto pct = [&](double q) {
    const size_t idx = std::min(samples.size() - 1,
                                static_cast<size_t>(q * static_cast<double>(samples.size())));
    return samples[idx];
  };
  LatencyReport r;
  r.p50_ms = pct(0.50);
  r.p95_ms = pct(0.95);
  double sum = 0.0;
  for (double s : samples) sum += s;
  r.mean_ms = sum / static_cast<double>(samples.size());
  r.trials = n_trials;
  r.warmup = warmup;
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j{{"accuracy", r.accuracy},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"f1", r.f1}};
  if (r.latency_p50_ms) j["latency_p50_ms"] = *r.latency_p50_ms;
  if (r.latency_p95_ms) j["latency_p95_ms"] = *r.latency_p95_ms;
  return j;
}

inline nlohmann::json to_json(const ConfusionCounts& c) {
  return nlohmann::json{{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
}

// One-line CSV row (plus header) for run aggregation.
inline std::string metrics_csv(const MetricReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "accuracy,precision,recall,f1\n"
     << r.accuracy << ',' << r.precision << ',' << r.recall << ',' << r.f1 << '\n';
  return os.str();
}

// Predictions export: origin_index, score, predicted label.
inline void save_predictions(const std::string& path, const ScoreSet& scores,
                             const std::vector<int>& predictions) {
  std::ofstream out(path);
  if (!out) throw ValidationError("predictions: cannot write '" + path + "'");
  out << "origin_index,score,label\n";
  out << std::setprecision(17);
  for (size_t i = 0; i < scores.size(); ++i) {
    const size_t origin = i < scores.origin_indices.size() ? scores.origin_indices[i] : i;
    out << origin << ',' << scores.scores[i] << ',' << predictions[i] << '\n';
  }
}

}  // namespace astro
