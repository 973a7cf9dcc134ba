// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "masan/autoencoder.hpp"
#include "masan/classifier.hpp"
#include "masan/data_io.hpp"
#include "masan/patching.hpp"

namespace masan {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FusionMode { Attention, Addition };

/// Where region self-attention sits relative to the T1-guided fusion.
enum class PipelineOrder { RegionsFirst, FusionFirst, FusionOnly };

std::string to_string(FusionMode m);
std::string to_string(PipelineOrder o);

/// Everything needed to build a model.
struct ModelConfig {
  Extents3 extents{16, 16, 16};
  int frames = 4;
  GridSpec grid;
  EncoderConfig encoder;  // input_channels/num_downsamples are derived per modality
  MlpConfig mlp;
  LossConfig loss;
  FusionMode fusion_mode = FusionMode::Attention;
  PipelineOrder pipeline_order = PipelineOrder::FusionOnly;
  bool share_patch_params = false;
  bool scaled_attention = false;
  int reduction_ratio = 4;
};

/// Declarative run description. Defaults are the desk-scale setup; the
/// encoder widths are narrower than the full-size network so a run fits on
/// one CPU core.
struct ExperimentConfig {
  std::uint64_t seed = 0;

  // cohort
  int n_per_class = 60;
  Extents3 extents{16, 16, 16};
  int frames = 4;
  GridSpec grid;
  std::vector<int> signal_patches{21, 22};
  float signal_strength = 1.0f;
  float noise_sigma = 0.3f;
  double train_fraction = 0.7;

  // model
  std::vector<int> channel_schedule{8, 16};
  int final_channels = 8;
  int target_extent = 2;
  std::vector<int> mlp_hidden{256, 64};
  int num_classes = 2;
  FusionMode fusion_mode = FusionMode::Attention;
  PipelineOrder pipeline_order = PipelineOrder::FusionOnly;
  bool share_patch_params = false;
  bool scaled_attention = false;
  int reduction_ratio = 4;

  // objective + optimizer
  float lambda = 1e-3f;
  float alpha = 0.5f;
  float beta = 0.5f;
  float lr = 1e-3f;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  int pretrain_steps = 200;
  int train_steps = 300;
  int batch_size = 4;

  void validate() const;
  SyntheticSpec synthetic_spec() const;
  ModelConfig model_config() const;

  /// Canonical key=value form; keys sorted.
  std::map<std::string, std::string> to_kv() const;
  std::string to_text() const;
  /// FNV-1a 64 of to_text(), hex.
  std::string fingerprint() const;

  /// Applies key=value pairs; unknown keys or malformed values throw ConfigError.
  void apply(const std::map<std::string, std::string>& kv);
  void apply(const std::string& key, const std::string& value);
};

/// Reads `key = value` lines; `#` starts a comment.
std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);

/// Parses and validates; any problem throws ConfigError.
ExperimentConfig config_from_text(const std::string& text);

/// Keys whose values differ between two configs.
std::vector<std::string> differing_keys(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace masan
