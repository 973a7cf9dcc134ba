// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/metrics.hpp"

#include <stdexcept>

namespace masan {

ConfusionCounts confusion_from(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("confusion_from: length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == 1, t = truth[i] == 1;
    if (p && t)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (t)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

MetricsRow metrics_from(const ConfusionCounts& c, std::string run, std::uint64_t seed) {
  MetricsRow r;
  r.run = std::move(run);
  r.seed = seed;
  r.counts = c;
  const auto total = c.total();
  r.accuracy = total ? static_cast<double>(c.tp + c.tn) / static_cast<double>(total) : 0.0;
  if (c.tp + c.fp == 0)
    r.precision_undefined = true;
  else
    r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn == 0)
    r.recall_undefined = true;
  else
    r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return r;
}

namespace {
template <typename F>
double mean_of(const std::vector<MetricsRow>& rows, F f) {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rows) s += f(r);
  return s / static_cast<double>(rows.size());
}
}  // namespace

double MetricsReport::mean_accuracy() const { return mean_of(rows, [](const MetricsRow& r) { return r.accuracy; }); }
double MetricsReport::mean_precision() const { return mean_of(rows, [](const MetricsRow& r) { return r.precision; }); }
double MetricsReport::mean_recall() const { return mean_of(rows, [](const MetricsRow& r) { return r.recall; }); }

}  // namespace masan
