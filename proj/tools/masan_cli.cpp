// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Exit codes: 0 success, 1 configuration or usage
// error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "masan/checkpoint.hpp"
#include "masan/gradcheck_suite.hpp"
#include "masan/harness.hpp"

namespace fs = std::filesystem;
using namespace masan;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> overrides;
  std::string out = ".";
  bool quiet = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config_path, "key=value configuration file");
  sub->add_option("-s,--seed", c.seed, "experiment seed (overrides the config)")
      ->each([&c](const std::string&) { c.seed_set = true; });
  sub->add_option("--set", c.overrides, "override a config key, e.g. --set train_steps=50");
  sub->add_option("-o,--out", c.out, "output directory");
  sub->add_flag("-q,--quiet", c.quiet, "suppress per-step loss lines");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config_path.empty()) cfg.apply(read_kv_file(c.config_path));
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.apply(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed_set) cfg.seed = c.seed;
  cfg.validate();
  return cfg;
}

StepCallback progress(const Common& c) {
  if (c.quiet) return {};
  return [](const StepRecord& r) {
    if (r.step % 25 == 0)
      std::fprintf(stderr, "[%s] step %4d  loss %.6f  (l_s %.6f  l_f %.6f  l_reg %.6f)\n", r.phase.c_str(), r.step,
                   r.total, r.l_s, r.l_f, r.l_reg);
  };
}

void print_row(const MetricsRow& r) {
  std::printf("%s seed=%llu accuracy=%.4f precision=%.4f%s recall=%.4f%s (tp=%lld fp=%lld fn=%lld tn=%lld)\n",
              r.run.c_str(), static_cast<unsigned long long>(r.seed), r.accuracy, r.precision,
              r.precision_undefined ? " [undefined]" : "", r.recall, r.recall_undefined ? " [undefined]" : "",
              static_cast<long long>(r.counts.tp), static_cast<long long>(r.counts.fp),
              static_cast<long long>(r.counts.fn), static_cast<long long>(r.counts.tn));
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--seeds expects a comma-separated list of integers, got '" + text + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("--seeds is empty");
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masan: multiscale autoencoder with structural-functional attention (desk scale)"};
  app.require_subcommand(1);

  Common c;
  std::string checkpoint_path;
  std::string seeds_text = "0,1,2,3,4";
  int subject = -1;
  int points = 5;

  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort as MVL1 volumes");
  auto* pretrain = app.add_subcommand("pretrain", "pretrain the per-patch autoencoders");
  auto* train = app.add_subcommand("train", "pretrain, train end to end and evaluate");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its test split");
  auto* ablate = app.add_subcommand("ablate", "attention vs addition fusion over several seeds");
  auto* viz = app.add_subcommand("viz", "export the fused-embedding weight map");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  for (auto* s : {synth, pretrain, train, eval, ablate, viz, grad}) add_common(s, c);
  for (auto* s : {eval, viz}) s->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  ablate->add_option("--seeds", seeds_text, "comma-separated seeds");
  viz->add_option("--subject", subject, "test-split index (default: first class-1 subject)");
  grad->add_option("--points", points, "random points per op family")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const fs::path out = c.out;
    if (*grad) {
      const auto lines = run_gradcheck_suite(c.seed_set ? c.seed : 0, points);
      bool ok = true;
      for (const auto& l : lines) {
        std::printf("%-20s max_rel_err=%.3e points=%d %s\n", l.family.c_str(), l.max_relative_error, l.points,
                    l.passed() ? "ok" : "FAIL");
        ok = ok && l.passed();
      }
      return ok ? 0 : 2;
    }

    ExperimentConfig cfg;
    if (*eval || *viz) {
      // The checkpoint carries its own configuration.
      const Checkpoint ckpt = load_checkpoint(checkpoint_path);
      cfg = config_of(ckpt);
      const auto cohort = generate_synthetic_cohort(cfg.synthetic_spec());
      const auto split = split_train_test(cohort, cfg.train_fraction, cfg.seed);
      fs::create_directories(out);
      if (*eval) {
        const Evaluation ev = evaluate(ckpt, split.test);
        print_row(ev.row);
        export_metrics_csv(MetricsReport{{ev.row}}, out / "metrics.csv");
        return 0;
      }
      std::size_t idx = 0;
      if (subject >= 0) {
        if (static_cast<std::size_t>(subject) >= split.test.size())
          throw ConfigError("--subject out of range (test split has " + std::to_string(split.test.size()) + ")");
        idx = static_cast<std::size_t>(subject);
      } else {
        while (idx + 1 < split.test.size() && split.test[idx].label != 1) ++idx;
      }
      const EmbeddingMap map = export_embedding_map(ckpt, split.test[idx], out / "embedding");
      std::printf("subject %s (label %d)\n", split.test[idx].subject_id.c_str(), split.test[idx].label);
      for (std::size_t r = 0; r < map.region_scores.size(); ++r)
        std::printf("region %2zu score %.6f\n", r, map.region_scores[r]);
      return 0;
    }

    cfg = resolve(c);
    fs::create_directories(out);
    if (*synth) {
      write_cohort(generate_synthetic_cohort(cfg.synthetic_spec()), out);
      std::ofstream(out / "config.txt", std::ios::binary) << cfg.to_text();
      return 0;
    }
    if (*pretrain) {
      const auto cohort = generate_synthetic_cohort(cfg.synthetic_spec());
      const auto split = split_train_test(cohort, cfg.train_fraction, cfg.seed);
      const TrainResult r = pretrain_autoencoders(cfg, split.train, progress(c));
      save_checkpoint(r.checkpoint, out / "pretrain.ckpt");
      write_loss_trace(r.trace, out / "pretrain_trace.txt");
      std::printf("reconstruction MSE: %.6f\n", reconstruction_mse(model_from(r.checkpoint), split.train));
      return 0;
    }
    if (*train) {
      const RunOutcome r = run_experiment(cfg, progress(c));
      save_checkpoint(r.train.checkpoint, out / "model.ckpt");
      std::vector<StepRecord> trace = r.pretrain.trace;
      trace.insert(trace.end(), r.train.trace.begin(), r.train.trace.end());
      write_loss_trace(trace, out / "loss_trace.txt");
      export_metrics_csv(MetricsReport{{r.evaluation.row}}, out / "metrics.csv");
      print_row(r.evaluation.row);
      return 0;
    }
    if (*ablate) {
      const AblationResult r = run_ablation(cfg, parse_seeds(seeds_text), progress(c));
      for (const auto& s : r.seeds) {
        if (!s.identical_batches) throw std::runtime_error("ablation arms consumed different batches");
        if (s.config_differences != std::vector<std::string>{"fusion_mode"})
          throw std::runtime_error("ablation arms differ in more than fusion_mode");
        print_row(s.attention.evaluation.row);
        print_row(s.addition.evaluation.row);
      }
      export_metrics_csv(r.report(), out / "ablation.csv");
      std::printf("mean delta (attention - addition): accuracy %+.4f precision %+.4f recall %+.4f\n",
                  r.mean_delta_accuracy(), r.mean_delta_precision(), r.mean_delta_recall());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
