// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "masan/checkpoint.hpp"
#include "masan/config.hpp"
#include "masan/data_io.hpp"
#include "masan/metrics.hpp"
#include "masan/model.hpp"

namespace masan {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepRecord {
  std::string phase;  // "pretrain" or "train"
  int step = 0;
  float total = 0, l_s = 0, l_f = 0, l_reg = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepRecord> trace;
  std::vector<std::uint64_t> batch_hashes;  // one per optimizer step
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Adam on L_s + L_f over `cohort` for cfg.pretrain_steps.
TrainResult pretrain_autoencoders(const ExperimentConfig& cfg, const std::vector<SubjectSample>& cohort,
                                  const StepCallback& on_step = {});

/// Adam on alpha*L_s + beta*L_f + L_reg over `train` for cfg.train_steps,
/// starting from `init` when given (fresh optimizer moments either way).
TrainResult train_end_to_end(const ExperimentConfig& cfg, const std::vector<SubjectSample>& train,
                             const Checkpoint* init = nullptr, const StepCallback& on_step = {});

struct Evaluation {
  MetricsRow row;
  std::vector<int> predicted;
  std::vector<int> truth;
};

/// Class-1 positive accuracy / precision / recall on `test`.
Evaluation evaluate(const Checkpoint& ckpt, const std::vector<SubjectSample>& test, const std::string& run = "");

/// Mean squared reconstruction error over both modalities.
double reconstruction_mse(const MasanModel& model, const std::vector<SubjectSample>& cohort);

/// Cohort generation, 70/30 split, pretraining, end-to-end training and
/// evaluation for one seed.
struct RunOutcome {
  ExperimentConfig config;
  TrainResult pretrain;
  TrainResult train;
  Evaluation evaluation;
  TrainTestSplit split;
};
RunOutcome run_experiment(const ExperimentConfig& cfg, const StepCallback& on_step = {});

struct AblationArm {
  ExperimentConfig config;
  TrainResult train;
  Evaluation evaluation;
  double seconds = 0;  // wall time of training plus evaluation
};

struct AblationSeed {
  std::uint64_t seed = 0;
  TrainResult pretrain;
  TrainTestSplit split;
  double pretrain_seconds = 0;  // wall time of cohort generation plus pretraining
  AblationArm attention, addition;
  bool identical_batches = false;
  std::vector<std::string> config_differences;
};

struct AblationResult {
  std::vector<AblationSeed> seeds;
  MetricsReport report() const;  // two rows per seed: attention then addition
  double mean_delta_accuracy() const;
  double mean_delta_precision() const;
  double mean_delta_recall() const;
};

/// Trains both fusion modes per seed from one shared pretrained checkpoint,
/// on identical data and batches.
AblationResult run_ablation(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                            const StepCallback& on_step = {});

struct EmbeddingMap {
  std::vector<float> region_scores;  // one per grid cell
  Tensor volume;                     // [1,D,H,W], constant within each cell
};

/// Mean |fused feature| per region, painted into a full-extent volume. When
/// `out_prefix` is non-empty writes <prefix>.mvl and a mid-axial <prefix>.pgm.
EmbeddingMap export_embedding_map(const Checkpoint& ckpt, const SubjectSample& sample,
                                  const std::filesystem::path& out_prefix = {});
EmbeddingMap embedding_map(const MasanModel& model, const SubjectSample& sample);

void write_loss_trace(const std::vector<StepRecord>& trace, const std::filesystem::path& path);

/// Writes each subject as <id>_t1.mvl / <id>_fmri.mvl plus labels.csv.
void write_cohort(const std::vector<SubjectSample>& cohort, const std::filesystem::path& dir);

std::uint64_t batch_hash(std::span<const SubjectSample> batch);

}  // namespace masan
