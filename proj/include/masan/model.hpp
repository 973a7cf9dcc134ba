// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "masan/autoencoder.hpp"
#include "masan/classifier.hpp"
#include "masan/config.hpp"
#include "masan/data_io.hpp"
#include "masan/fusion.hpp"
#include "masan/optim.hpp"

namespace masan {

/// Stacked subjects: t1 [N,1,D,H,W], fmri [N,T,1,D,H,W].
struct Batch {
  Tensor t1;
  Tensor fmri;
  std::vector<int> labels;
};

Batch make_batch(std::span<const SubjectSample> samples);

enum class ForwardScope { Reconstruction, Full };

struct ForwardResult {
  Tensor l_s, l_f;     // per-modality reconstruction objectives
  Tensor l_reg;        // cross-entropy (Full only)
  Tensor total;        // alpha*l_s + beta*l_f + l_reg, or l_s + l_f for Reconstruction
  double sse_s = 0, sse_f = 0;  // raw squared errors (no sparsity term)
  std::int64_t voxels_s = 0, voxels_f = 0;
  Tensor recon_s, recon_f;  // reconstructions of all patches, concatenated on axis 1
  // `total` re-accumulated in double from the float32 forward values. A
  // finite-difference probe can resolve it where the rounded float cannot.
  double objective = 0.0;
  Prediction prediction;
  FeatureMap f_t1, f_fmri, fused;
  AttentionWeights attention_t1, attention_fmri;
};

/// Per-patch structural and functional autoencoders, region self-attention,
/// T1-guided (or additive) fusion and the MLP head.
class MasanModel {
 public:
  MasanModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  const PatchAutoencoder& spm(std::size_t patch) const { return spm_[patch]; }
  const PatchAutoencoder& fpm(std::size_t patch) const { return fpm_[patch]; }
  Extents3 patch_extents() const { return patch_extents_; }
  std::int64_t region_count() const { return cfg_.grid.cell_count(); }

  ForwardResult forward(const Batch& batch, ForwardScope scope = ForwardScope::Full) const;

  /// Mean |fused feature| per region for each sample: [N,R].
  Tensor region_scores(const FeatureMap& fused) const;

 private:
  RegionFeatures attend(const Tensor& regions, const QkvParams& p, AttentionWeights* aw) const;

  ModelConfig cfg_;
  ParameterStore store_;
  Extents3 patch_extents_{};
  std::vector<PatchAutoencoder> spm_, fpm_;
  QkvParams qkv_t1_, qkv_fmri_, qkv_fused_;
  GateParams gates_;
  Mlp mlp_;
};

}  // namespace masan
