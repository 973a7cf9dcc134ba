// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "masan/config.hpp"
#include "masan/metrics.hpp"

using namespace masan;

TEST_CASE("metrics from confusion counts") {
  ConfusionCounts c;
  c.tp = 8;
  c.fp = 2;
  c.fn = 1;
  c.tn = 9;
  const MetricsRow r = metrics_from(c, "x", 1);
  CHECK(r.accuracy == doctest::Approx(0.85));
  CHECK(r.precision == doctest::Approx(0.8));
  CHECK(r.recall == doctest::Approx(0.8889).epsilon(1e-4));
  CHECK_FALSE(r.precision_undefined);
  CHECK_FALSE(r.recall_undefined);

  ConfusionCounts none;
  none.tn = 5;
  const MetricsRow d = metrics_from(none);
  CHECK(d.accuracy == 1.0);
  CHECK(d.precision == 0.0);
  CHECK(d.recall == 0.0);
  CHECK(d.precision_undefined);
  CHECK(d.recall_undefined);

  const int pred[] = {1, 1, 0, 0, 1}, truth[] = {1, 0, 0, 1, 1};
  const ConfusionCounts k = confusion_from(pred, truth);
  CHECK(k.tp == 2);
  CHECK(k.fp == 1);
  CHECK(k.fn == 1);
  CHECK(k.tn == 1);
  const int shorter[] = {1};
  CHECK_THROWS(confusion_from(shorter, truth));

  MetricsReport rep;
  rep.rows = {r, metrics_from(none)};
  CHECK(rep.mean_accuracy() == doctest::Approx(0.925));
}

TEST_CASE("config text round-trips and applies overrides") {
  ExperimentConfig base;
  const ExperimentConfig same = config_from_text(base.to_text());
  CHECK(same.to_text() == base.to_text());
  CHECK(same.fingerprint() == base.fingerprint());
  CHECK(differing_keys(base, same).empty());

  const ExperimentConfig c = config_from_text(
      "# comment line\n"
      "seed = 12\n"
      "fusion_mode = addition   # trailing comment\n"
      "extents = 8, 8, 8\n"
      "mlp_hidden = 32,16\n"
      "scaled_attention = true\n");
  CHECK(c.seed == 12);
  CHECK(c.fusion_mode == FusionMode::Addition);
  CHECK(c.extents == Extents3{8, 8, 8});
  CHECK(c.mlp_hidden == std::vector<int>{32, 16});
  CHECK(c.scaled_attention);
  CHECK(differing_keys(base, c) ==
        std::vector<std::string>{"extents", "fusion_mode", "mlp_hidden", "scaled_attention", "seed"});
  CHECK(c.fingerprint() != base.fingerprint());
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(config_from_text("no_such_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(config_from_text("seed = abc\n"), ConfigError);
  CHECK_THROWS_AS(config_from_text("lr = 1e-3x\n"), ConfigError);
  CHECK_THROWS_AS(config_from_text("fusion_mode = concat\n"), ConfigError);
  CHECK_THROWS_AS(config_from_text("extents = 8,8\n"), ConfigError);
  CHECK_THROWS_AS(config_from_text("train_fraction = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(config_from_text("batch_size = 0\n"), ConfigError);
  CHECK_THROWS_AS(config_from_text("scaled_attention = maybe\n"), ConfigError);
  CHECK_THROWS_AS(config_from_text("just a line without equals\n"), ConfigError);
  try {
    (void)config_from_text("seed = abc\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("seed") != std::string::npos);
  }
  CHECK_THROWS(read_kv_file("/nonexistent/masan.cfg"));
}
