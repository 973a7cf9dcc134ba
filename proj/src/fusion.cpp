// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/fusion.hpp"

#include <cmath>
#include <stdexcept>

#include "masan/ops.hpp"

namespace masan {

namespace {

void require_same(const FeatureMap& a, const FeatureMap& b, const char* op) {
  if (a.features.shape() != b.features.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.features.shape()) + " vs " +
                                shape_str(b.features.shape()));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const Tensor y = matmul(x, w);
  return add(y, expand(reshape(b, {1, b.dim(0)}), y.shape()));
}

}  // namespace

QkvParams make_qkv_params(const std::string& prefix, std::int64_t region_width, std::int64_t dk, ParameterStore& store,
                          Rng& rng) {
  QkvParams p;
  p.wq = store.uniform(prefix + ".wq", {region_width, dk}, region_width, rng);
  p.wk = store.uniform(prefix + ".wk", {region_width, dk}, region_width, rng);
  p.wv = store.uniform(prefix + ".wv", {region_width, region_width}, region_width, rng);
  return p;
}

GateParams make_gate_params(const std::string& prefix, std::int64_t channels, int reduction, ParameterStore& store,
                            Rng& rng) {
  if (reduction < 1 || channels % reduction != 0)
    throw std::invalid_argument("gate reduction ratio " + std::to_string(reduction) + " must be >= 1 and divide " +
                                std::to_string(channels) + " channels");
  const std::int64_t hidden = channels / reduction;
  GateParams g;
  g.reduction = reduction;
  g.ch_w1 = store.uniform(prefix + ".channel.w1", {channels, hidden}, channels, rng);
  g.ch_b1 = store.constant(prefix + ".channel.b1", {hidden}, 0.0f);
  g.ch_w2 = store.uniform(prefix + ".channel.w2", {hidden, channels}, hidden, rng);
  g.ch_b2 = store.constant(prefix + ".channel.b2", {channels}, 0.0f);
  g.sp_w = store.uniform(prefix + ".spatial.w", {1, 1, 3, 3, 3}, 27, rng);
  g.sp_b = store.constant(prefix + ".spatial.b", {1}, 0.0f);
  return g;
}

QkvProjection project_qkv(const RegionFeatures& rf, const QkvParams& p) {
  const Tensor& x = rf.regions;
  if (x.ndim() < 2) throw std::invalid_argument("project_qkv: regions need at least [R,F]");
  // Rank 5 is an unbatched [R,C,d,h,w]; rank 6 is batched; 2/3 are already flat.
  const bool batched = x.ndim() == 6 || x.ndim() == 3;
  const std::int64_t N = batched ? x.dim(0) : 1;
  const std::int64_t R = batched ? x.dim(1) : x.dim(0);
  const std::int64_t F = static_cast<std::int64_t>(x.numel()) / (N * R);
  if (p.wq.dim(0) != F || p.wk.dim(0) != F || p.wv.dim(0) != F || p.wq.dim(1) != p.wk.dim(1))
    throw std::invalid_argument("project_qkv: region width " + std::to_string(F) + " does not match projections " +
                                shape_str(p.wq.shape()) + ", " + shape_str(p.wk.shape()) + ", " +
                                shape_str(p.wv.shape()));
  const Tensor flat = reshape(x, {N * R, F});
  auto project = [&](const Tensor& w) {
    const Tensor y = matmul(flat, w);
    return batched ? reshape(y, {N, R, w.dim(1)}) : reshape(y, {R, w.dim(1)});
  };
  return {project(p.wq), project(p.wk), project(p.wv)};
}

RegionAttention region_self_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool scaled) {
  if (q.ndim() != k.ndim() || q.ndim() != v.ndim() || (q.ndim() != 2 && q.ndim() != 3))
    throw std::invalid_argument("region_self_attention: q, k, v must all be [R,d] or [N,R,d]");
  const bool batched = q.ndim() == 3;
  auto lift = [&](const Tensor& t) { return batched ? t : reshape(t, {1, t.dim(0), t.dim(1)}); };
  const Tensor q3 = lift(q), k3 = lift(k), v3 = lift(v);
  if (q3.dim(1) != k3.dim(1) || q3.dim(1) != v3.dim(1) || q3.dim(0) != k3.dim(0) || q3.dim(0) != v3.dim(0))
    throw std::invalid_argument("region_self_attention: region counts differ");
  if (q3.dim(2) != k3.dim(2)) throw std::invalid_argument("region_self_attention: query/key widths differ");
  Tensor logits = matmul(q3, permute(k3, {0, 2, 1}));
  if (scaled) logits = scale(logits, 1.0f / std::sqrt(static_cast<float>(q3.dim(2))));
  Tensor w = softmax(logits, 2);
  Tensor out = matmul(w, v3);
  if (!batched) {
    out = reshape(out, {v.dim(0), v.dim(1)});
    w = reshape(w, {q.dim(0), q.dim(0)});
  }
  return {out, {w}};
}

FeatureMap channel_attention(const FeatureMap& f, const GateParams& g, Tensor* gate_out) {
  const Tensor& x = f.features;
  if (x.ndim() != 5) throw std::invalid_argument("channel_attention: expected [N,C,D,H,W], got " + shape_str(x.shape()));
  const std::int64_t N = x.dim(0), C = x.dim(1);
  if (g.reduction < 1 || C % g.reduction != 0 || g.ch_w1.dim(0) != C)
    throw std::invalid_argument("channel_attention: invalid reduction ratio " + std::to_string(g.reduction) + " for " +
                                std::to_string(C) + " channels");
  const Tensor pooled = reduce(ReduceOp::Max, x, {2, 3, 4});  // [N,C]
  const Tensor hidden = relu(linear(pooled, g.ch_w1, g.ch_b1));
  const Tensor gate = sigmoid(linear(hidden, g.ch_w2, g.ch_b2));
  if (gate_out) *gate_out = gate;
  const Tensor wide = expand(reshape(gate, {N, C, 1, 1, 1}), x.shape());
  return {mul(x, wide), f.modality};
}

FeatureMap spatial_attention(const FeatureMap& f, const GateParams& g, Tensor* gate_out) {
  const Tensor& x = f.features;
  if (x.ndim() != 5) throw std::invalid_argument("spatial_attention: expected [N,C,D,H,W], got " + shape_str(x.shape()));
  const Tensor collapsed = reduce(ReduceOp::Max, x, {1}, true);  // [N,1,D,H,W]
  const Tensor gate = sigmoid(conv3d(collapsed, g.sp_w, g.sp_b, 1, 1));
  if (gate_out) *gate_out = gate;
  return {mul(x, expand(gate, x.shape())), f.modality};
}

FeatureMap t1_guided_fuse(const FeatureMap& f_fmri, const FeatureMap& f_t1s) {
  require_same(f_fmri, f_t1s, "t1_guided_fuse");
  return {add(mul(f_fmri.features, f_t1s.features), f_fmri.features), Modality::Fused};
}

FeatureMap addition_fuse(const FeatureMap& f_fmri, const FeatureMap& f_t1) {
  require_same(f_fmri, f_t1, "addition_fuse");
  return {add(f_fmri.features, f_t1.features), Modality::Fused};
}

Tensor assemble_regions(const Tensor& regions, const GridSpec& grid) {
  if (regions.ndim() != 6 || regions.dim(1) != grid.cell_count())
    throw std::invalid_argument("assemble_regions: expected [N," + std::to_string(grid.cell_count()) +
                                ",C,d,h,w], got " + shape_str(regions.shape()));
  const std::int64_t N = regions.dim(0), C = regions.dim(2), d = regions.dim(3), h = regions.dim(4),
                     w = regions.dim(5);
  const std::int64_t gz = grid.grid[0], gy = grid.grid[1], gx = grid.grid[2];
  const Tensor cells = reshape(regions, {N, gz, gy, gx, C, d, h, w});
  const Tensor moved = permute(cells, {0, 4, 1, 5, 2, 6, 3, 7});
  return reshape(moved, {N, C, gz * d, gy * h, gx * w});
}

Tensor split_regions(const Tensor& features, const GridSpec& grid) {
  if (features.ndim() != 5) throw std::invalid_argument("split_regions: expected [N,C,D,H,W]");
  const std::int64_t gz = grid.grid[0], gy = grid.grid[1], gx = grid.grid[2];
  const std::int64_t N = features.dim(0), C = features.dim(1);
  if (features.dim(2) % gz || features.dim(3) % gy || features.dim(4) % gx)
    throw std::invalid_argument("split_regions: extents not divisible by grid");
  const std::int64_t d = features.dim(2) / gz, h = features.dim(3) / gy, w = features.dim(4) / gx;
  const Tensor cells = reshape(features, {N, C, gz, d, gy, h, gx, w});
  const Tensor moved = permute(cells, {0, 2, 4, 6, 1, 3, 5, 7});
  return reshape(moved, {N, gz * gy * gx, C, d, h, w});
}

}  // namespace masan
