// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "masan/optim.hpp"
#include "masan/patching.hpp"
#include "masan/rng.hpp"
#include "masan/tensor.hpp"

namespace masan {

enum class Modality { T1, fMRI, Fused };

/// Per-region feature blocks [N,R,C,d,h,w], regions in PatchSet order.
struct RegionFeatures {
  Tensor regions;
};

/// Region features assembled on the bottleneck grid: [N,C,D',H',W'].
struct FeatureMap {
  Tensor features;
  Modality modality = Modality::T1;
};

/// Query/key/value projections applied to flattened regions:
/// wq, wk [F,dk] and wv [F,dv].
struct QkvParams {
  Tensor wq, wk, wv;
};

struct QkvProjection {
  Tensor queries, keys, values;  // [N,R,dk], [N,R,dk], [N,R,dv]
};

/// Row-stochastic region-to-region weights [N,R,R].
struct AttentionWeights {
  Tensor weights;
};

struct RegionAttention {
  Tensor new_regions;  // [N,R,dv]
  AttentionWeights weights;
};

/// Channel gate (bottleneck MLP with ratio `reduction`) and spatial gate
/// (single 3x3x3 convolution over the channel-max map).
struct GateParams {
  int reduction = 4;
  Tensor ch_w1, ch_b1, ch_w2, ch_b2;
  Tensor sp_w, sp_b;
};

QkvParams make_qkv_params(const std::string& prefix, std::int64_t region_width, std::int64_t dk, ParameterStore& store,
                          Rng& rng);
GateParams make_gate_params(const std::string& prefix, std::int64_t channels, int reduction, ParameterStore& store,
                            Rng& rng);

/// Row i of each output depends only on region i. Accepts [R,...] or [N,R,...].
QkvProjection project_qkv(const RegionFeatures& rf, const QkvParams& p);

/// weight_ij = softmax_j(<q_i, k_j>) (optionally divided by sqrt(dk));
/// new_region_i = sum_j weight_ij v_j. Accepts [R,d] or [N,R,d] operands.
RegionAttention region_self_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool scaled = false);

/// Scales each channel by sigmoid(MLP(global max-pool)). `gate_out`, when
/// given, receives the [N,C] gate.
FeatureMap channel_attention(const FeatureMap& f, const GateParams& g, Tensor* gate_out = nullptr);

/// Scales each voxel by sigmoid(conv3d(max over channels)). `gate_out`
/// receives the [N,1,D,H,W] map.
FeatureMap spatial_attention(const FeatureMap& f, const GateParams& g, Tensor* gate_out = nullptr);

/// f_fmri * f_t1s + f_fmri
FeatureMap t1_guided_fuse(const FeatureMap& f_fmri, const FeatureMap& f_t1s);

/// Element-wise sum; the ablation baseline.
FeatureMap addition_fuse(const FeatureMap& f_fmri, const FeatureMap& f_t1);

/// [N,R,C,d,h,w] -> [N,C,gz*d,gy*h,gx*w], region r landing in grid cell r.
Tensor assemble_regions(const Tensor& regions, const GridSpec& grid);
/// Inverse of assemble_regions.
Tensor split_regions(const Tensor& features, const GridSpec& grid);

}  // namespace masan
