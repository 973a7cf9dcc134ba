// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "masan/ops.hpp"

namespace masan {

Batch make_batch(std::span<const SubjectSample> samples) {
  if (samples.empty()) throw std::invalid_argument("make_batch: no samples");
  const std::int64_t n = static_cast<std::int64_t>(samples.size());
  Shape t1_shape = samples[0].t1.shape();
  Shape fmri_shape = samples[0].fmri.shape();
  Batch b;
  Shape bt1 = t1_shape, bfm = fmri_shape;
  bt1.insert(bt1.begin(), n);
  bfm.insert(bfm.begin(), n);
  b.t1 = Tensor(bt1);
  b.fmri = Tensor(bfm);
  const std::size_t s1 = samples[0].t1.numel(), sf = samples[0].fmri.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& s = samples[i];
    if (s.t1.shape() != t1_shape || s.fmri.shape() != fmri_shape)
      throw std::invalid_argument("make_batch: subject " + s.subject_id + " has mismatched shapes");
    std::copy(s.t1.data().begin(), s.t1.data().end(), b.t1.data().begin() + static_cast<std::ptrdiff_t>(i * s1));
    std::copy(s.fmri.data().begin(), s.fmri.data().end(), b.fmri.data().begin() + static_cast<std::ptrdiff_t>(i * sf));
    b.labels.push_back(s.label);
  }
  return b;
}

namespace {

double abs_sum(const std::vector<Tensor>& ts) {
  double acc = 0.0;
  for (const auto& t : ts)
    for (float v : t.data()) acc += std::fabs(static_cast<double>(v));
  return acc;
}

double mean_nll(const Tensor& probs, std::span<const int> labels) {
  const std::int64_t N = probs.dim(0), C = probs.dim(1);
  double acc = 0.0;
  for (std::int64_t i = 0; i < N; ++i)
    acc -= std::log(std::max(static_cast<double>(probs[i * C + labels[i]]), 1e-12));
  return acc / static_cast<double>(N);
}

// Splits every sample of a batch and stacks patch k of all samples:
// returns R tensors of shape [N, lead..., d, h, w].
std::vector<Tensor> patch_batches(const Tensor& batch, bool series, const GridSpec& grid) {
  const std::int64_t n = batch.dim(0);
  Shape sample_shape(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t sample_size = batch.numel() / static_cast<std::size_t>(n);
  std::vector<Tensor> out;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto first = batch.data().begin() + static_cast<std::ptrdiff_t>(i * sample_size);
    const Tensor sample(sample_shape, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(sample_size)));
    const PatchSet ps = series ? partition4d(sample, grid) : partition3d(sample, grid);
    if (out.empty()) {
      Shape s = ps.patches[0].shape();
      s.insert(s.begin(), n);
      for (std::size_t k = 0; k < ps.patches.size(); ++k) out.emplace_back(s);
    }
    for (std::size_t k = 0; k < ps.patches.size(); ++k) {
      const auto src = ps.patches[k].data();
      std::copy(src.begin(), src.end(), out[k].data().begin() + static_cast<std::ptrdiff_t>(i * src.size()));
    }
  }
  return out;
}

Tensor stack_regions(const std::vector<Tensor>& hs) {
  std::vector<Tensor> lifted;
  lifted.reserve(hs.size());
  for (const Tensor& h : hs) {
    Shape s = h.shape();
    s.insert(s.begin() + 1, 1);
    lifted.push_back(reshape(h, s));
  }
  return concat(lifted, 1);
}

double sum_squares(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

MasanModel::MasanModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.grid.validate();
  Rng rng(seed * 0x9E3779B97F4A7C15ull + 0x5151);
  patch_extents_ = padded_extents_for(cfg_.extents, cfg_.grid);
  for (int i = 0; i < 3; ++i) patch_extents_[i] /= cfg_.grid.grid[i];

  EncoderConfig enc = cfg_.encoder.fitted_to(patch_extents_);
  EncoderConfig spm_cfg = enc, fpm_cfg = enc;
  spm_cfg.input_channels = 1;
  fpm_cfg.input_channels = cfg_.frames;

  const std::int64_t R = cfg_.grid.cell_count();
  if (cfg_.share_patch_params) {
    const PatchAutoencoder s("spm.shared", spm_cfg, store_, rng);
    const PatchAutoencoder f("fpm.shared", fpm_cfg, store_, rng);
    spm_.assign(static_cast<std::size_t>(R), s);
    fpm_.assign(static_cast<std::size_t>(R), f);
  } else {
    char name[32];
    for (std::int64_t k = 0; k < R; ++k) {
      std::snprintf(name, sizeof name, "spm.p%02lld", static_cast<long long>(k));
      spm_.emplace_back(name, spm_cfg, store_, rng);
    }
    for (std::int64_t k = 0; k < R; ++k) {
      std::snprintf(name, sizeof name, "fpm.p%02lld", static_cast<long long>(k));
      fpm_.emplace_back(name, fpm_cfg, store_, rng);
    }
  }

  const std::int64_t t = cfg_.encoder.target_extent;
  const std::int64_t width = std::int64_t{enc.final_channels} * t * t * t;
  qkv_t1_ = make_qkv_params("attn.t1", width, width, store_, rng);
  qkv_fmri_ = make_qkv_params("attn.fmri", width, width, store_, rng);
  if (cfg_.pipeline_order == PipelineOrder::FusionFirst)
    qkv_fused_ = make_qkv_params("attn.fused", width, width, store_, rng);
  // Gates exist in both fusion modes so paired runs share their initial weights.
  gates_ = make_gate_params("gate", enc.final_channels, cfg_.reduction_ratio, store_, rng);
  mlp_ = Mlp("mlp", width * R, cfg_.mlp, store_, rng);
}

RegionFeatures MasanModel::attend(const Tensor& regions, const QkvParams& p, AttentionWeights* aw) const {
  const QkvProjection qkv = project_qkv({regions}, p);
  RegionAttention ra = region_self_attention(qkv.queries, qkv.keys, qkv.values, cfg_.scaled_attention);
  if (aw) *aw = ra.weights;
  return {reshape(ra.new_regions, regions.shape())};
}

ForwardResult MasanModel::forward(const Batch& batch, ForwardScope scope) const {
  const std::int64_t R = region_count();
  const auto t1_patches = patch_batches(batch.t1, false, cfg_.grid);
  const auto fmri_patches = patch_batches(batch.fmri, true, cfg_.grid);

  std::vector<Tensor> rec_s, rec_f, h_s, h_f;
  ForwardResult out;
  for (std::int64_t k = 0; k < R; ++k) {
    const Embedding es = spm_encode(t1_patches[k], spm_[k]);
    const Embedding ef = fpm_encode(fmri_patches[k], fpm_[k]);
    rec_s.push_back(spm_decode(es, spm_[k]));
    rec_f.push_back(fpm_decode(ef, fpm_[k]));
    h_s.push_back(es.h);
    h_f.push_back(ef.h);
    out.sse_s += sum_squares(rec_s.back(), t1_patches[k]);
    out.sse_f += sum_squares(rec_f.back(), fmri_patches[k]);
    out.voxels_s += static_cast<std::int64_t>(t1_patches[k].numel());
    out.voxels_f += static_cast<std::int64_t>(fmri_patches[k].numel());
  }
  const double n = static_cast<double>(batch.t1.dim(0));
  const double lam = cfg_.loss.lambda;
  const double recon_s = out.sse_s / n + lam * abs_sum(h_s);
  const double recon_f = out.sse_f / n + lam * abs_sum(h_f);
  out.recon_s = concat(rec_s, 1);
  out.recon_f = concat(rec_f, 1);
  out.l_s = modality_recon_loss(out.recon_s, concat(t1_patches, 1), concat(h_s, 1), cfg_.loss);
  out.l_f = modality_recon_loss(out.recon_f, concat(fmri_patches, 1), concat(h_f, 1), cfg_.loss);
  if (scope == ForwardScope::Reconstruction) {
    out.total = add(out.l_s, out.l_f);
    out.objective = recon_s + recon_f;
    return out;
  }

  const Tensor regions_s = stack_regions(h_s);
  const Tensor regions_f = stack_regions(h_f);
  auto fuse = [&](const FeatureMap& fmri, const FeatureMap& t1) {
    if (cfg_.fusion_mode == FusionMode::Addition) return addition_fuse(fmri, t1);
    const FeatureMap c = channel_attention(t1, gates_);
    const FeatureMap s = spatial_attention(c, gates_);
    return t1_guided_fuse(fmri, s);
  };

  switch (cfg_.pipeline_order) {
    case PipelineOrder::RegionsFirst: {
      const RegionFeatures as = attend(regions_s, qkv_t1_, &out.attention_t1);
      const RegionFeatures af = attend(regions_f, qkv_fmri_, &out.attention_fmri);
      out.f_t1 = {assemble_regions(as.regions, cfg_.grid), Modality::T1};
      out.f_fmri = {assemble_regions(af.regions, cfg_.grid), Modality::fMRI};
      out.fused = fuse(out.f_fmri, out.f_t1);
      break;
    }
    case PipelineOrder::FusionFirst: {
      out.f_t1 = {assemble_regions(regions_s, cfg_.grid), Modality::T1};
      out.f_fmri = {assemble_regions(regions_f, cfg_.grid), Modality::fMRI};
      const FeatureMap pre = fuse(out.f_fmri, out.f_t1);
      const RegionFeatures af = attend(split_regions(pre.features, cfg_.grid), qkv_fused_, &out.attention_fmri);
      out.fused = {assemble_regions(af.regions, cfg_.grid), Modality::Fused};
      break;
    }
    case PipelineOrder::FusionOnly:
      out.f_t1 = {assemble_regions(regions_s, cfg_.grid), Modality::T1};
      out.f_fmri = {assemble_regions(regions_f, cfg_.grid), Modality::fMRI};
      out.fused = fuse(out.f_fmri, out.f_t1);
      break;
  }

  out.prediction = mlp_forward(out.fused, mlp_);
  out.l_reg = cross_entropy(out.prediction, batch.labels);
  out.total = total_loss(out.l_s, out.l_f, out.l_reg, cfg_.loss);
  out.objective = cfg_.loss.alpha * recon_s + cfg_.loss.beta * recon_f + mean_nll(out.prediction.probs, batch.labels);
  return out;
}

Tensor MasanModel::region_scores(const FeatureMap& fused) const {
  NoGradScope no_grad;
  const Tensor regions = split_regions(fused.features, cfg_.grid);  // [N,R,C,d,h,w]
  return reduce(ReduceOp::Mean, abs(regions), {2, 3, 4, 5});
}

}  // namespace masan
