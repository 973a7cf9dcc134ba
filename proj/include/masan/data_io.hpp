// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "masan/metrics.hpp"
#include "masan/patching.hpp"
#include "masan/tensor.hpp"

namespace masan {

struct SubjectSample {
  Tensor t1;    // [1,D,H,W]
  Tensor fmri;  // [T,1,D,H,W]
  int label = 0;  // 0 = NC-like, 1 = AD-like
  std::string subject_id;
};

/// Planted-signal cohort description. Class-1 subjects have T1 intensity
/// lowered by signal_strength inside signal_patches and a stronger
/// oscillation in the fMRI series there.
struct SyntheticSpec {
  std::uint64_t seed = 0;
  int n_per_class = 60;
  Extents3 extents{16, 16, 16};
  int frames = 4;
  GridSpec grid;
  std::vector<int> signal_patches{21, 22};
  float signal_strength = 1.0f;
  float noise_sigma = 0.3f;

  void validate() const;
};

/// Subjects alternate class 0 / class 1; subject i is generated from its own
/// stream derived from (seed, i).
std::vector<SubjectSample> generate_synthetic_cohort(const SyntheticSpec& spec);

enum class VolumeErrorKind { Io, BadMagic, TruncatedPayload, ExtentOverflow, TrailingBytes };

class VolumeError : public std::runtime_error {
 public:
  VolumeError(VolumeErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  VolumeErrorKind kind() const { return kind_; }

 private:
  VolumeErrorKind kind_;
};

/// MVL1: "MVL1", u32 ndim, ndim x u32 extents, row-major f32 payload, all
/// little-endian.
void save_volume(const Tensor& t, const std::filesystem::path& path);
Tensor load_volume(const std::filesystem::path& path);

struct TrainTestSplit {
  std::vector<SubjectSample> train, test;
};

/// Stratified by label, deterministic under seed; both halves keep cohort order.
TrainTestSplit split_train_test(const std::vector<SubjectSample>& cohort, double fraction, std::uint64_t seed);

/// Binary PGM (P5) of one slice of a [D,H,W] (or [1,D,H,W]) volume, min-max
/// scaled to 0..255; constant slices map to 0.
void export_pgm_slice(const Tensor& volume, int axis, std::int64_t index, const std::filesystem::path& path);

/// header "run,seed,task,accuracy,precision,recall", 4 decimals per metric.
void export_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace masan
