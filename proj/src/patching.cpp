// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/patching.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace masan {

void GridSpec::validate() const {
  for (int g : grid)
    if (g < 1) throw std::invalid_argument("grid components must be >= 1");
}

Extents3 PatchSet::patch_extents() const {
  return {padded_extents[0] / grid.grid[0], padded_extents[1] / grid.grid[1], padded_extents[2] / grid.grid[2]};
}

Extents3 padded_extents_for(const Extents3& extents, const GridSpec& spec) {
  Extents3 p{};
  for (int i = 0; i < 3; ++i) {
    const std::int64_t g = spec.grid[i];
    p[i] = (extents[i] + g - 1) / g * g;
  }
  return p;
}

namespace {

// Both partition flavours reduce to: `lead` leading slabs of a D×H×W volume.
PatchSet split(const Tensor& src, std::size_t spatial_axis, const GridSpec& spec) {
  spec.validate();
  const Extents3 ext{src.dim(spatial_axis), src.dim(spatial_axis + 1), src.dim(spatial_axis + 2)};
  for (int i = 0; i < 3; ++i)
    if (ext[i] < spec.grid[i])
      throw std::invalid_argument("volume " + shape_str(src.shape()) + " is smaller than the " +
                                  std::to_string(spec.grid[0]) + "x" + std::to_string(spec.grid[1]) + "x" +
                                  std::to_string(spec.grid[2]) + " grid");
  PatchSet ps;
  ps.grid = spec;
  ps.original_extents = ext;
  ps.padded_extents = padded_extents_for(ext, spec);
  const Extents3 pe = ps.patch_extents();

  std::int64_t lead = 1;
  Shape patch_shape;
  for (std::size_t d = 0; d < spatial_axis; ++d) {
    lead *= src.dim(d);
    patch_shape.push_back(src.dim(d));
  }
  patch_shape.insert(patch_shape.end(), pe.begin(), pe.end());

  const float* s = src.data().data();
  const std::int64_t vol = ext[0] * ext[1] * ext[2];
  for (int gz = 0; gz < spec.grid[0]; ++gz)
    for (int gy = 0; gy < spec.grid[1]; ++gy)
      for (int gx = 0; gx < spec.grid[2]; ++gx) {
        Tensor patch(patch_shape);
        float* p = patch.data().data();
        for (std::int64_t l = 0; l < lead; ++l)
          for (std::int64_t z = 0; z < pe[0]; ++z) {
            const std::int64_t iz = gz * pe[0] + z;
            if (iz >= ext[0]) continue;
            for (std::int64_t y = 0; y < pe[1]; ++y) {
              const std::int64_t iy = gy * pe[1] + y;
              if (iy >= ext[1]) continue;
              for (std::int64_t x = 0; x < pe[2]; ++x) {
                const std::int64_t ix = gx * pe[2] + x;
                if (ix >= ext[2]) continue;
                p[((l * pe[0] + z) * pe[1] + y) * pe[2] + x] = s[l * vol + (iz * ext[1] + iy) * ext[2] + ix];
              }
            }
          }
        ps.patches.push_back(std::move(patch));
      }
  return ps;
}

Tensor merge(const PatchSet& ps, std::size_t spatial_axis) {
  ps.grid.validate();
  if (static_cast<std::int64_t>(ps.patches.size()) != ps.grid.cell_count())
    throw std::invalid_argument("patch set holds " + std::to_string(ps.patches.size()) + " patches for " +
                                std::to_string(ps.grid.cell_count()) + " grid cells");
  const Extents3 pe = ps.patch_extents();
  for (int i = 0; i < 3; ++i)
    if (pe[i] * ps.grid.grid[i] != ps.padded_extents[i] || ps.original_extents[i] > ps.padded_extents[i])
      throw std::invalid_argument("patch set extents are inconsistent with its grid");
  const Shape& first = ps.patches.front().shape();
  if (first.size() != spatial_axis + 3) throw std::invalid_argument("patch rank does not match the requested layout");
  for (const Tensor& p : ps.patches)
    if (p.shape() != first) throw std::invalid_argument("inconsistent patch shapes in patch set");
  for (int i = 0; i < 3; ++i)
    if (first[spatial_axis + i] != pe[i]) throw std::invalid_argument("patch extents do not match patch set metadata");

  const Extents3& ext = ps.original_extents;
  Shape out_shape(first.begin(), first.begin() + static_cast<std::ptrdiff_t>(spatial_axis));
  std::int64_t lead = 1;
  for (auto e : out_shape) lead *= e;
  out_shape.insert(out_shape.end(), ext.begin(), ext.end());
  Tensor out(out_shape);
  float* o = out.data().data();
  const std::int64_t vol = ext[0] * ext[1] * ext[2];
  std::size_t k = 0;
  for (int gz = 0; gz < ps.grid.grid[0]; ++gz)
    for (int gy = 0; gy < ps.grid.grid[1]; ++gy)
      for (int gx = 0; gx < ps.grid.grid[2]; ++gx, ++k) {
        const float* p = ps.patches[k].data().data();
        for (std::int64_t l = 0; l < lead; ++l)
          for (std::int64_t z = 0; z < pe[0]; ++z) {
            const std::int64_t iz = gz * pe[0] + z;
            if (iz >= ext[0]) continue;
            for (std::int64_t y = 0; y < pe[1]; ++y) {
              const std::int64_t iy = gy * pe[1] + y;
              if (iy >= ext[1]) continue;
              for (std::int64_t x = 0; x < pe[2]; ++x) {
                const std::int64_t ix = gx * pe[2] + x;
                if (ix >= ext[2]) continue;
                o[l * vol + (iz * ext[1] + iy) * ext[2] + ix] = p[((l * pe[0] + z) * pe[1] + y) * pe[2] + x];
              }
            }
          }
      }
  return out;
}

}  // namespace

PatchSet partition3d(const Tensor& volume, const GridSpec& spec) {
  if (volume.ndim() != 4) throw std::invalid_argument("partition3d: expected [C,D,H,W], got " + shape_str(volume.shape()));
  return split(volume, 1, spec);
}

Tensor reassemble3d(const PatchSet& ps) { return merge(ps, 1); }

PatchSet partition4d(const Tensor& series, const GridSpec& spec) {
  if (series.ndim() != 5)
    throw std::invalid_argument("partition4d: expected [T,C,D,H,W], got " + shape_str(series.shape()));
  return split(series, 2, spec);
}

Tensor reassemble4d(const PatchSet& ps) { return merge(ps, 2); }

}  // namespace masan
