// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "masan/tensor.hpp"

namespace masan {

using Extents3 = std::array<std::int64_t, 3>;

/// Grid of non-overlapping cells over (D, H, W). Extents that do not divide
/// evenly are zero-padded at the high-index end.
struct GridSpec {
  std::array<int, 3> grid{4, 4, 4};

  std::int64_t cell_count() const { return std::int64_t{grid[0]} * grid[1] * grid[2]; }
  /// Row-major cell index: z-major, then y, then x.
  std::int64_t cell_index(int gz, int gy, int gx) const { return (std::int64_t{gz} * grid[1] + gy) * grid[2] + gx; }
  void validate() const;
};

/// Ordered patches, one per grid cell, plus what is needed to undo the split.
/// Each patch carries the leading axes of its source: [C,d,h,w] for volumes,
/// [T,C,d,h,w] for series.
struct PatchSet {
  std::vector<Tensor> patches;
  Extents3 original_extents{};
  Extents3 padded_extents{};
  GridSpec grid;

  Extents3 patch_extents() const;
};

Extents3 padded_extents_for(const Extents3& extents, const GridSpec& spec);

PatchSet partition3d(const Tensor& volume, const GridSpec& spec);
Tensor reassemble3d(const PatchSet& ps);

/// Series [T,C,D,H,W]; the time axis is never split.
PatchSet partition4d(const Tensor& series, const GridSpec& spec);
Tensor reassemble4d(const PatchSet& ps);

}  // namespace masan
