// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace masan {

struct GradcheckLine {
  std::string family;
  double max_relative_error = 0.0;
  int points = 0;
  double tolerance = 1e-3;
  bool passed() const { return max_relative_error < tolerance; }
};

/// Compares tape gradients with central differences for every differentiable
/// op family. Each point draws fresh random inputs and a random cotangent.
std::vector<GradcheckLine> run_gradcheck_suite(std::uint64_t seed, int points = 5);

}  // namespace masan
