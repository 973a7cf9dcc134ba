// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "masan/checkpoint.hpp"
#include "masan/harness.hpp"
#include "test_util.hpp"

using namespace masan;
using masan::test::scratch_dir;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.n_per_class = 4;
  c.extents = {8, 8, 8};
  c.frames = 2;
  c.grid.grid = {2, 2, 2};
  c.signal_patches = {1};
  c.channel_schedule = {2, 4};
  c.final_channels = 4;
  c.target_extent = 2;
  c.mlp_hidden = {6};
  c.reduction_ratio = 2;
  c.pretrain_steps = 3;
  c.train_steps = 3;
  c.batch_size = 2;
  return c;
}

std::vector<SubjectSample> tiny_cohort(const ExperimentConfig& c) { return generate_synthetic_cohort(c.synthetic_spec()); }

}  // namespace

TEST_CASE("checkpoint save and load reproduce the forward pass bit-exactly") {
  const auto dir = scratch_dir("harness_ckpt");
  const ExperimentConfig cfg = tiny_config();
  const auto cohort = tiny_cohort(cfg);
  const TrainResult pre = pretrain_autoencoders(cfg, cohort);
  save_checkpoint(pre.checkpoint, dir / "a.ckpt");
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.fingerprint() == pre.checkpoint.fingerprint());
  CHECK(back.adam.t == pre.checkpoint.adam.t);
  CHECK(config_of(back).to_text() == cfg.to_text());

  const MasanModel m1 = model_from(pre.checkpoint), m2 = model_from(back);
  const Batch batch = make_batch(std::span<const SubjectSample>(cohort).subspan(0, 3));
  NoGradScope off;
  const ForwardResult a = m1.forward(batch), b = m2.forward(batch);
  CHECK(a.total.bit_equal(b.total));
  CHECK(a.prediction.probs.bit_equal(b.prediction.probs));
  CHECK(a.recon_s.bit_equal(b.recon_s));

  // Re-saving gives identical bytes.
  save_checkpoint(back, dir / "b.ckpt");
  std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());

  // A model built from another config refuses the checkpoint.
  ExperimentConfig other = cfg;
  other.final_channels = 2;
  MasanModel wrong(other.model_config(), 0);
  CHECK_THROWS(restore(wrong, pre.checkpoint));
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  CHECK_THROWS(load_checkpoint(dir / "junk.ckpt"));
}

TEST_CASE("zero pretraining steps returns the initial parameters") {
  ExperimentConfig cfg = tiny_config();
  cfg.pretrain_steps = 0;
  const TrainResult r = pretrain_autoencoders(cfg, tiny_cohort(cfg));
  CHECK(r.trace.empty());
  const MasanModel init(cfg.model_config(), cfg.seed);
  const MasanModel restored = model_from(r.checkpoint);
  for (const auto& p : init.params().params()) CHECK(restored.params().get(p.name).bit_equal(p.value));
}

TEST_CASE("pretraining lowers reconstruction error and traces both losses") {
  ExperimentConfig cfg = tiny_config();
  cfg.pretrain_steps = 30;
  cfg.lr = 1e-2f;
  const auto cohort = tiny_cohort(cfg);
  const double before = reconstruction_mse(MasanModel(cfg.model_config(), cfg.seed), cohort);
  int seen = 0;
  const TrainResult r = pretrain_autoencoders(cfg, cohort, [&](const StepRecord&) { ++seen; });
  CHECK(seen == 30);
  REQUIRE(r.trace.size() == 30);
  CHECK(r.batch_hashes.size() == 30);
  for (const auto& s : r.trace) {
    CHECK(s.phase == "pretrain");
    CHECK(s.l_reg == 0.0f);
    CHECK(s.total == doctest::Approx(s.l_s + s.l_f).epsilon(1e-5));
  }
  CHECK(reconstruction_mse(model_from(r.checkpoint), cohort) < before);
}

TEST_CASE("runs are deterministic under a fixed seed") {
  const ExperimentConfig cfg = tiny_config();
  const RunOutcome a = run_experiment(cfg), b = run_experiment(cfg);
  CHECK(a.train.checkpoint.fingerprint() == b.train.checkpoint.fingerprint());
  CHECK(a.train.batch_hashes == b.train.batch_hashes);
  CHECK(a.evaluation.predicted == b.evaluation.predicted);
  REQUIRE(a.train.trace.size() == b.train.trace.size());
  for (std::size_t i = 0; i < a.train.trace.size(); ++i) CHECK(a.train.trace[i].total == b.train.trace[i].total);
  CHECK(a.split.train.size() + a.split.test.size() == 8);
  ExperimentConfig other = cfg;
  other.seed = 1;
  CHECK(run_experiment(other).train.checkpoint.fingerprint() != a.train.checkpoint.fingerprint());
}

TEST_CASE("ablation arms share data and batches and differ only in fusion mode") {
  const AblationResult r = run_ablation(tiny_config(), {0, 1});
  REQUIRE(r.seeds.size() == 2);
  for (const auto& s : r.seeds) {
    CHECK(s.identical_batches);
    CHECK(s.attention.train.batch_hashes == s.addition.train.batch_hashes);
    CHECK(s.config_differences == std::vector<std::string>{"fusion_mode"});
    CHECK(s.attention.evaluation.truth == s.addition.evaluation.truth);
  }
  const MetricsReport rep = r.report();
  REQUIRE(rep.rows.size() == 4);
  CHECK(rep.rows[0].run == "attention");
  CHECK(rep.rows[1].run == "addition");
  const double d = (rep.rows[0].accuracy - rep.rows[1].accuracy + rep.rows[2].accuracy - rep.rows[3].accuracy) / 2;
  CHECK(r.mean_delta_accuracy() == doctest::Approx(d));
}

TEST_CASE("embedding map is constant within each grid cell") {
  const auto dir = scratch_dir("harness_embed");
  const ExperimentConfig cfg = tiny_config();
  const auto cohort = tiny_cohort(cfg);
  const MasanModel model(cfg.model_config(), cfg.seed);
  const Checkpoint ckpt = make_checkpoint(model, cfg, AdamState{});
  const EmbeddingMap m = export_embedding_map(ckpt, cohort[1], dir / "map");
  REQUIRE(m.region_scores.size() == 8);
  CHECK(m.volume.shape() == Shape{1, 8, 8, 8});
  for (std::int64_t z = 0; z < 8; ++z)
    for (std::int64_t y = 0; y < 8; ++y)
      for (std::int64_t x = 0; x < 8; ++x) {
        const int cell = static_cast<int>((z / 4) * 4 + (y / 4) * 2 + x / 4);
        CHECK(m.volume[static_cast<std::size_t>((z * 8 + y) * 8 + x)] == m.region_scores[static_cast<std::size_t>(cell)]);
      }
  for (float s : m.region_scores) CHECK(s >= 0.0f);
  CHECK(std::filesystem::exists(dir / "map.mvl"));
  CHECK(std::filesystem::exists(dir / "map.pgm"));
  CHECK(load_volume(dir / "map.mvl").bit_equal(m.volume));

  // A model whose fused features vanish scores every region zero.
  MasanModel silent(cfg.model_config(), cfg.seed);
  for (auto& p : silent.params().params())
    if (p.name.find(".out.") != std::string::npos || p.name.find("qkv") != std::string::npos ||
        p.name.find("init") != std::string::npos)
      for (auto& v : p.value.data()) v = 0.0f;
  SubjectSample zero = cohort[0];
  zero.t1 = Tensor(zero.t1.shape());
  zero.fmri = Tensor(zero.fmri.shape());
  const EmbeddingMap z = embedding_map(silent, zero);
  for (float s : z.region_scores) CHECK(s == 0.0f);
}

TEST_CASE("loss trace file format") {
  const auto dir = scratch_dir("harness_trace");
  std::vector<StepRecord> t{{"pretrain", 0, 3.5f, 2.0f, 1.5f, 0.0f}, {"train", 1, 1.25f, 1.0f, 0.5f, 0.5f}};
  write_loss_trace(t, dir / "trace.txt");
  std::ifstream is(dir / "trace.txt");
  std::stringstream ss;
  ss << is.rdbuf();
  CHECK(ss.str() == "phase step total l_s l_f l_reg\npretrain 0 3.5 2 1.5 0\ntrain 1 1.25 1 0.5 0.5\n");
}

TEST_CASE("non-finite loss stops training with a diverged error") {
  const ExperimentConfig cfg = tiny_config();
  auto cohort = tiny_cohort(cfg);
  for (auto& s : cohort) s.t1[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    (void)pretrain_autoencoders(cfg, cohort);
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    CHECK(std::string(e.what()) == "pretrain: loss became non-finite at step 0");
  }
}
