// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "masan/ops.hpp"

namespace masan {

namespace {

constexpr std::uint64_t kPretrainStream = 0x70726574ull;
constexpr std::uint64_t kTrainStream = 0x74726169ull;
constexpr std::size_t kEvalBatch = 8;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// Epoch-wise reshuffled minibatches; a batch may straddle two epochs.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch, std::uint64_t seed) : n_(n), batch_(std::min(batch, n)), rng_(seed) {}

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    while (out.size() < batch_) {
      if (pos_ == order_.size()) {
        order_.resize(n_);
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        rng_.shuffle(order_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::size_t n_, batch_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

AdamOptions adam_options(const ExperimentConfig& cfg) {
  return {cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
}

TrainResult optimize(const ExperimentConfig& cfg, MasanModel& model, const std::vector<SubjectSample>& data, int steps,
                     ForwardScope scope, const char* phase, std::uint64_t stream, const StepCallback& on_step) {
  if (data.empty()) throw std::invalid_argument(std::string(phase) + ": empty cohort");
  TrainResult result;
  AdamState adam;
  const AdamOptions opt = adam_options(cfg);
  BatchSampler sampler(data.size(), static_cast<std::size_t>(cfg.batch_size), cfg.seed ^ stream);
  for (int step = 0; step < steps; ++step) {
    std::vector<SubjectSample> picked;
    for (std::size_t i : sampler.next()) picked.push_back(data[i]);
    result.batch_hashes.push_back(batch_hash(picked));
    const Batch batch = make_batch(picked);

    Tape tape;
    ForwardResult fr;
    {
      TapeScope recording(tape);
      fr = model.forward(batch, scope);
    }
    StepRecord rec{phase, step, fr.total.item(), fr.l_s.item(), fr.l_f.item(),
                   scope == ForwardScope::Full ? fr.l_reg.item() : 0.0f};
    if (!std::isfinite(rec.total))
      throw TrainingDiverged(std::string(phase) + ": loss became non-finite at step " + std::to_string(step));
    result.trace.push_back(rec);
    if (on_step) on_step(rec);

    model.params().zero_grad();
    tape.backward(fr.total);
    adam_step(model.params(), adam, opt);
  }
  result.checkpoint = make_checkpoint(model, cfg, adam);
  return result;
}

}  // namespace

std::uint64_t batch_hash(std::span<const SubjectSample> batch) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& s : batch) {
    for (unsigned char c : s.subject_id) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    h ^= 0xff;
    h *= 0x100000001b3ull;
  }
  return h;
}

TrainResult pretrain_autoencoders(const ExperimentConfig& cfg, const std::vector<SubjectSample>& cohort,
                                  const StepCallback& on_step) {
  cfg.validate();
  MasanModel model(cfg.model_config(), cfg.seed);
  return optimize(cfg, model, cohort, cfg.pretrain_steps, ForwardScope::Reconstruction, "pretrain", kPretrainStream,
                  on_step);
}

TrainResult train_end_to_end(const ExperimentConfig& cfg, const std::vector<SubjectSample>& train,
                             const Checkpoint* init, const StepCallback& on_step) {
  cfg.validate();
  MasanModel model(cfg.model_config(), cfg.seed);
  if (init) restore(model, *init);
  return optimize(cfg, model, train, cfg.train_steps, ForwardScope::Full, "train", kTrainStream, on_step);
}

Evaluation evaluate(const Checkpoint& ckpt, const std::vector<SubjectSample>& test, const std::string& run) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test split");
  const ExperimentConfig cfg = config_of(ckpt);
  const MasanModel model = model_from(ckpt);
  NoGradScope no_grad;
  Evaluation ev;
  for (std::size_t i = 0; i < test.size(); i += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, test.size() - i);
    const Batch b = make_batch(std::span(test).subspan(i, n));
    const ForwardResult fr = model.forward(b);
    const Tensor& p = fr.prediction.probs;
    const std::int64_t C = p.dim(1);
    for (std::size_t r = 0; r < n; ++r) {
      int best = 0;
      for (std::int64_t c = 1; c < C; ++c)
        if (p[r * C + c] > p[r * C + best]) best = static_cast<int>(c);
      ev.predicted.push_back(best);
      ev.truth.push_back(b.labels[r]);
    }
  }
  ev.row = metrics_from(confusion_from(ev.predicted, ev.truth), run.empty() ? to_string(cfg.fusion_mode) : run,
                        cfg.seed);
  return ev;
}

double reconstruction_mse(const MasanModel& model, const std::vector<SubjectSample>& cohort) {
  NoGradScope no_grad;
  double sse = 0.0;
  std::int64_t voxels = 0;
  for (std::size_t i = 0; i < cohort.size(); i += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, cohort.size() - i);
    const ForwardResult fr = model.forward(make_batch(std::span(cohort).subspan(i, n)), ForwardScope::Reconstruction);
    sse += fr.sse_s + fr.sse_f;
    voxels += fr.voxels_s + fr.voxels_f;
  }
  return voxels ? sse / static_cast<double>(voxels) : 0.0;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  RunOutcome out;
  out.config = cfg;
  const auto cohort = generate_synthetic_cohort(cfg.synthetic_spec());
  out.split = split_train_test(cohort, cfg.train_fraction, cfg.seed);
  out.pretrain = pretrain_autoencoders(cfg, out.split.train, on_step);
  out.train = train_end_to_end(cfg, out.split.train, &out.pretrain.checkpoint, on_step);
  out.evaluation = evaluate(out.train.checkpoint, out.split.test);
  return out;
}

MetricsReport AblationResult::report() const {
  MetricsReport r;
  for (const auto& s : seeds) {
    r.rows.push_back(s.attention.evaluation.row);
    r.rows.push_back(s.addition.evaluation.row);
  }
  return r;
}

namespace {
template <typename F>
double mean_delta(const std::vector<AblationSeed>& seeds, F metric) {
  if (seeds.empty()) return 0.0;
  double s = 0.0;
  for (const auto& x : seeds) s += metric(x.attention.evaluation.row) - metric(x.addition.evaluation.row);
  return s / static_cast<double>(seeds.size());
}
}  // namespace

double AblationResult::mean_delta_accuracy() const {
  return mean_delta(seeds, [](const MetricsRow& r) { return r.accuracy; });
}
double AblationResult::mean_delta_precision() const {
  return mean_delta(seeds, [](const MetricsRow& r) { return r.precision; });
}
double AblationResult::mean_delta_recall() const {
  return mean_delta(seeds, [](const MetricsRow& r) { return r.recall; });
}

AblationResult run_ablation(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                            const StepCallback& on_step) {
  AblationResult result;
  for (std::uint64_t seed : seeds) {
    AblationSeed s;
    s.seed = seed;
    s.attention.config = cfg;
    s.attention.config.seed = seed;
    s.attention.config.fusion_mode = FusionMode::Attention;
    s.addition.config = s.attention.config;
    s.addition.config.fusion_mode = FusionMode::Addition;
    s.attention.config.validate();
    s.config_differences = differing_keys(s.attention.config, s.addition.config);

    const auto t0 = Clock::now();
    const auto cohort = generate_synthetic_cohort(s.attention.config.synthetic_spec());
    s.split = split_train_test(cohort, cfg.train_fraction, seed);
    s.pretrain = pretrain_autoencoders(s.attention.config, s.split.train, on_step);
    s.pretrain_seconds = seconds_since(t0);
    for (AblationArm* arm : {&s.attention, &s.addition}) {
      const auto t1 = Clock::now();
      arm->train = train_end_to_end(arm->config, s.split.train, &s.pretrain.checkpoint, on_step);
      arm->evaluation = evaluate(arm->train.checkpoint, s.split.test);
      arm->seconds = seconds_since(t1);
    }
    s.identical_batches = s.attention.train.batch_hashes == s.addition.train.batch_hashes;
    result.seeds.push_back(std::move(s));
  }
  return result;
}

EmbeddingMap embedding_map(const MasanModel& model, const SubjectSample& sample) {
  const ModelConfig& cfg = model.config();
  if (sample.t1.shape() != Shape{1, cfg.extents[0], cfg.extents[1], cfg.extents[2]})
    throw std::invalid_argument("embedding map: subject shape " + shape_str(sample.t1.shape()) +
                                " does not match the model");
  NoGradScope no_grad;
  const ForwardResult fr = model.forward(make_batch(std::span(&sample, 1)));
  const Tensor scores = model.region_scores(fr.fused);
  EmbeddingMap map;
  map.region_scores.assign(scores.data().begin(), scores.data().end());

  PatchSet ps;
  ps.grid = cfg.grid;
  ps.original_extents = cfg.extents;
  ps.padded_extents = padded_extents_for(cfg.extents, cfg.grid);
  const Extents3 pe = ps.patch_extents();
  for (float s : map.region_scores) ps.patches.emplace_back(Shape{1, pe[0], pe[1], pe[2]}, s);
  map.volume = reassemble3d(ps);
  return map;
}

EmbeddingMap export_embedding_map(const Checkpoint& ckpt, const SubjectSample& sample,
                                  const std::filesystem::path& out_prefix) {
  const MasanModel model = model_from(ckpt);
  EmbeddingMap map = embedding_map(model, sample);
  if (!out_prefix.empty()) {
    save_volume(map.volume, out_prefix.string() + ".mvl");
    export_pgm_slice(map.volume, 0, map.volume.dim(1) / 2, out_prefix.string() + ".pgm");
  }
  return map;
}

void write_loss_trace(const std::vector<StepRecord>& trace, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "phase step total l_s l_f l_reg\n";
  char buf[256];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%s %d %.9g %.9g %.9g %.9g\n", r.phase.c_str(), r.step, r.total, r.l_s, r.l_f,
                  r.l_reg);
    os << buf;
  }
}

void write_cohort(const std::vector<SubjectSample>& cohort, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream labels(dir / "labels.csv", std::ios::binary | std::ios::trunc);
  if (!labels) throw std::runtime_error("cannot write to '" + dir.string() + "'");
  labels << "subject_id,label\n";
  for (const auto& s : cohort) {
    save_volume(s.t1, dir / (s.subject_id + "_t1.mvl"));
    save_volume(s.fmri, dir / (s.subject_id + "_fmri.mvl"));
    labels << s.subject_id << ',' << s.label << '\n';
  }
}

}  // namespace masan
