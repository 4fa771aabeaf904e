#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "astro/errors.hpp"

namespace astro {

struct ConfusionCounts {
  size_t tp = 0, tn = 0, fp = 0, fn = 0;
  size_t total() const { return tp + tn + fp + fn; }
};

inline ConfusionCounts confusion(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size())
    throw ValidationError("confusion: prediction length " + std::to_string(pred.size()) +
                          " != truth length " + std::to_string(truth.size()));
  ConfusionCounts c;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (truth[i]) {
      pred[i] ? ++c.tp : ++c.fn;
    } else {
      pred[i] ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

struct MetricReport {
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  std::optional<double> latency_p50_ms, latency_p95_ms;
};

// Accuracy/precision/recall/F1 from the counts; every 0/0 case maps to 0,
// the conservative convention for detection dashboards.
inline MetricReport metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw ValidationError("metrics: empty confusion counts");
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  MetricReport r;
  r.accuracy = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
  r.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  r.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

inline double f1_score(const std::vector<int>& pred, const std::vector<int>& truth) {
  return metrics(confusion(pred, truth)).f1;
}

}  // namespace astro
