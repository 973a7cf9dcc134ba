// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "masan/model.hpp"
#include "masan/optim.hpp"

namespace masan {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Parameters by name, optimizer moments, and the config that built them.
///
/// On disk ("MCK1", little-endian):
///   u32 config_len, config text (key=value lines)
///   u32 n_params, then per parameter: u32 name_len, name, u32 ndim, u32 extents
///   u64 adam_t, u32 has_moments
///   payload: every parameter's f32 values in directory order, then (if
///   has_moments) m and v for each parameter in the same order.
struct Checkpoint {
  std::string config_text;
  std::vector<NamedTensor> params;
  AdamState adam;

  std::string fingerprint() const;
};

Checkpoint make_checkpoint(const MasanModel& model, const ExperimentConfig& cfg, const AdamState& adam);
/// Copies checkpoint values into a model built from a compatible config.
void restore(MasanModel& model, const Checkpoint& ckpt);
/// Builds the model described by the checkpoint's config and restores it.
MasanModel model_from(const Checkpoint& ckpt);
ExperimentConfig config_of(const Checkpoint& ckpt);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace masan
