// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace masan {

/// Binary confusion counts with class 1 (AD-like) as the positive class.
struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::int64_t total() const { return tp + fp + fn + tn; }
};

ConfusionCounts confusion_from(std::span<const int> predicted, std::span<const int> truth);

/// One evaluation. precision/recall are 0 with the matching flag set when
/// their denominator is empty.
struct MetricsRow {
  std::string run;
  std::uint64_t seed = 0;
  std::string task = "AD-vs-rest";
  ConfusionCounts counts;
  double accuracy = 0, precision = 0, recall = 0;
  bool precision_undefined = false;
  bool recall_undefined = false;
};

MetricsRow metrics_from(const ConfusionCounts& c, std::string run = "", std::uint64_t seed = 0);

struct MetricsReport {
  std::vector<MetricsRow> rows;

  double mean_accuracy() const;
  double mean_precision() const;
  double mean_recall() const;
};

}  // namespace masan
