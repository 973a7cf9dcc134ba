// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/classifier.hpp"

#include <stdexcept>

#include "masan/ops.hpp"

namespace masan {

void MlpConfig::validate() const {
  for (int w : hidden)
    if (w < 1) throw std::invalid_argument("MLP hidden widths must be positive");
  if (num_classes < 2) throw std::invalid_argument("MLP needs at least 2 classes");
}

Mlp::Mlp(const std::string& prefix, std::int64_t input_width, const MlpConfig& cfg, ParameterStore& store, Rng& rng)
    : input_width_(input_width) {
  cfg.validate();
  std::int64_t in = input_width;
  std::vector<int> widths = cfg.hidden;
  widths.push_back(cfg.num_classes);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string name = prefix + ".fc" + std::to_string(i);
    weights_.push_back(store.uniform(name + ".w", {in, widths[i]}, in, rng));
    biases_.push_back(store.constant(name + ".b", {widths[i]}, 0.0f));
    in = widths[i];
  }
}

Prediction Mlp::forward(const Tensor& x) const {
  if (x.ndim() != 2 || x.dim(1) != input_width_)
    throw std::invalid_argument("mlp: expected [N," + std::to_string(input_width_) + "], got " + shape_str(x.shape()));
  Tensor y = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    y = matmul(y, weights_[i]);
    y = add(y, expand(reshape(biases_[i], {1, biases_[i].dim(0)}), y.shape()));
    if (i + 1 < weights_.size()) y = relu(y);
  }
  return {y, softmax(y, 1)};
}

Prediction mlp_forward(const FeatureMap& fused, const Mlp& mlp) {
  const Tensor& f = fused.features;
  const std::int64_t n = f.dim(0);
  const std::int64_t width = static_cast<std::int64_t>(f.numel()) / n;
  if (width != mlp.input_width())
    throw std::invalid_argument("mlp_forward: fused width " + std::to_string(width) + " does not match built width " +
                                std::to_string(mlp.input_width()));
  return mlp.forward(reshape(f, {n, width}));
}

Tensor cross_entropy(const Prediction& pred, std::span<const int> labels) {
  return nll_loss(pred.probs, labels, 1e-12f);
}

Tensor total_loss(const Tensor& l_s, const Tensor& l_f, const Tensor& l_reg, const LossConfig& cfg) {
  return add(add(scale(l_s, cfg.alpha), scale(l_f, cfg.beta)), l_reg);
}

LossBreakdown total_loss(float l_s, float l_f, float l_reg, const LossConfig& cfg) {
  const double total = static_cast<double>(cfg.alpha) * l_s + static_cast<double>(cfg.beta) * l_f + l_reg;
  return {l_s, l_f, l_reg, static_cast<float>(total)};
}

}  // namespace masan
