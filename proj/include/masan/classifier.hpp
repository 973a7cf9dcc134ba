// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "masan/autoencoder.hpp"
#include "masan/fusion.hpp"
#include "masan/optim.hpp"

namespace masan {

struct MlpConfig {
  std::vector<int> hidden{256, 64};
  int num_classes = 2;
  void validate() const;
};

struct Prediction {
  Tensor logits;  // [N,C]
  Tensor probs;   // softmax(logits) along axis 1
};

struct LossBreakdown {
  float l_s = 0, l_f = 0, l_reg = 0, l_total = 0;
};

/// Fully connected head: ReLU between hidden layers, softmax on the output.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& prefix, std::int64_t input_width, const MlpConfig& cfg, ParameterStore& store, Rng& rng);

  std::int64_t input_width() const { return input_width_; }
  /// x [N,input_width]
  Prediction forward(const Tensor& x) const;

 private:
  std::int64_t input_width_ = 0;
  std::vector<Tensor> weights_, biases_;
};

/// Flattens the fused map per sample and runs the head.
Prediction mlp_forward(const FeatureMap& fused, const Mlp& mlp);

/// Mean over samples of -log p(true class), probabilities clamped at 1e-12.
Tensor cross_entropy(const Prediction& pred, std::span<const int> labels);

/// alpha * L_s + beta * L_f + L_reg
Tensor total_loss(const Tensor& l_s, const Tensor& l_f, const Tensor& l_reg, const LossConfig& cfg);
LossBreakdown total_loss(float l_s, float l_f, float l_reg, const LossConfig& cfg);

}  // namespace masan
