// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "masan/optim.hpp"
#include "masan/patching.hpp"
#include "masan/rng.hpp"
#include "masan/tensor.hpp"

namespace masan {

/// Patch encoder layout. channel_schedule[0] is the InitConv width and
/// channel_schedule[s] the width after downsample s; the last encoder block
/// narrows to final_channels.
struct EncoderConfig {
  int input_channels = 1;
  std::vector<int> channel_schedule{32, 64, 128, 128};
  int final_channels = 64;
  int num_downsamples = 3;
  int target_extent = 2;

  void validate() const;
  /// Copy with num_downsamples chosen so `patch` reaches target_extent, the
  /// schedule truncated (or its last width repeated) to match.
  EncoderConfig fitted_to(const Extents3& patch) const;
};

/// Sparsity and total-loss weights.
struct LossConfig {
  float lambda = 1e-3f;
  float alpha = 0.5f;
  float beta = 0.5f;
};

/// Bottleneck code of one patch plus the per-stage features the decoder
/// concatenates. skips are ordered shallow to deep.
struct Embedding {
  Tensor h;
  std::vector<Tensor> skips;
  Shape input_shape;
};

/// One patch-level encoder/decoder. Parameters live in a ParameterStore; a
/// PatchAutoencoder only holds handles, so copies share weights.
class PatchAutoencoder {
 public:
  PatchAutoencoder() = default;
  PatchAutoencoder(const std::string& prefix, const EncoderConfig& cfg, ParameterStore& store, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  /// x [N,C,D,H,W] with C == input_channels.
  Embedding encode(const Tensor& x) const;
  /// Returns [N,C,D,H,W] matching the encoded input.
  Tensor decode(const Embedding& e) const;

 private:
  struct Conv {
    Tensor w, b;
    int stride = 1;
    int padding = 1;
    Tensor operator()(const Tensor& x) const;
  };
  struct Norm {
    Tensor gamma, beta;
    Tensor operator()(const Tensor& x) const;
  };
  // [GN, ReLU, Conv] x2 with identity (or 1x1x1 projection) residual.
  struct Block {
    Norm gn0, gn1;
    Conv conv0, conv1;
    bool has_proj = false;
    Conv proj;
    Tensor operator()(const Tensor& x) const;
  };

  static Conv make_conv(const std::string& name, int in, int out, int k, int stride, ParameterStore& store, Rng& rng);
  static Norm make_norm(const std::string& name, int channels, ParameterStore& store);
  static Block make_block(const std::string& name, int in, int out, ParameterStore& store, Rng& rng);

  EncoderConfig cfg_;
  Conv init_;
  std::vector<Conv> down_;
  std::vector<Block> enc_blocks_;
  std::vector<Conv> dec_reduce_;  // index j-1 for decoder stage j
  std::vector<Block> dec_blocks_;
  Conv out_;
};

/// Structural patch [C,D,H,W] or batch [N,C,D,H,W].
Embedding spm_encode(const Tensor& patch, const PatchAutoencoder& net);
Tensor spm_decode(const Embedding& e, const PatchAutoencoder& net);

/// Functional patch [T,C,D,H,W] or batch [N,T,C,D,H,W]; time is folded into
/// the channel axis before InitConv.
Embedding fpm_encode(const Tensor& series_patch, const PatchAutoencoder& net);
Tensor fpm_decode(const Embedding& e, const PatchAutoencoder& net);

/// lambda * sum |h_i|
Tensor sparsity_penalty(const Tensor& h, float lambda);

/// Summed squared error averaged over the batch axis (axis 0), plus the
/// sparsity penalty on h.
Tensor modality_recon_loss(const Tensor& generated, const Tensor& original, const Tensor& h, const LossConfig& cfg);

}  // namespace masan
