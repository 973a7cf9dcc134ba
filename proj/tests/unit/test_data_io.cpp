// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "masan/data_io.hpp"
#include "masan/patching.hpp"
#include "test_util.hpp"

using namespace masan;
using masan::test::random_tensor;
using masan::test::scratch_dir;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os << bytes;
}

// Mean T1 intensity over the cells listed in `cells`, computed by partitioning.
double cell_mean(const Tensor& t1, const std::vector<int>& cells, const GridSpec& g) {
  const PatchSet ps = partition3d(t1, g);
  double s = 0.0;
  std::size_t n = 0;
  for (int k : cells)
    for (float v : ps.patches[static_cast<std::size_t>(k)].data()) {
      s += v;
      ++n;
    }
  return s / static_cast<double>(n);
}

std::vector<int> background_cells(const SyntheticSpec& spec) {
  std::vector<int> out;
  for (int k = 0; k < spec.grid.cell_count(); ++k)
    if (std::find(spec.signal_patches.begin(), spec.signal_patches.end(), k) == spec.signal_patches.end())
      out.push_back(k);
  return out;
}

VolumeErrorKind load_error_kind(const std::filesystem::path& p) {
  try {
    (void)load_volume(p);
  } catch (const VolumeError& e) {
    return e.kind();
  }
  FAIL("load_volume accepted a malformed file");
  return VolumeErrorKind::Io;
}

}  // namespace

TEST_CASE("synthetic cohort shape and determinism") {
  SyntheticSpec spec;
  spec.seed = 5;
  spec.n_per_class = 4;
  const auto a = generate_synthetic_cohort(spec), b = generate_synthetic_cohort(spec);
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].label == static_cast<int>(i % 2));
    CHECK(a[i].t1.shape() == Shape{1, 16, 16, 16});
    CHECK(a[i].fmri.shape() == Shape{4, 1, 16, 16, 16});
    CHECK(a[i].t1.bit_equal(b[i].t1));
    CHECK(a[i].fmri.bit_equal(b[i].fmri));
    CHECK(a[i].subject_id == b[i].subject_id);
  }
  CHECK(a[0].subject_id == "sub-0000");
  spec.seed = 6;
  CHECK_FALSE(generate_synthetic_cohort(spec)[0].t1.bit_equal(a[0].t1));
  // Subject i does not depend on the cohort size.
  spec.seed = 5;
  spec.n_per_class = 2;
  CHECK(generate_synthetic_cohort(spec)[3].t1.bit_equal(a[3].t1));
}

TEST_CASE("cells without planted signal are identically distributed across classes") {
  // signal_strength must be positive, so the null case is checked on a cell
  // that carries no signal.
  SyntheticSpec spec;
  spec.seed = 9;
  spec.n_per_class = 50;
  const auto cohort = generate_synthetic_cohort(spec);
  const std::vector<int> quiet{5};
  std::vector<double> m[2];
  for (const auto& s : cohort) m[s.label].push_back(cell_mean(s.t1, quiet, spec.grid));
  double mu[2], var[2];
  for (int c = 0; c < 2; ++c) {
    mu[c] = 0.0;
    for (double x : m[c]) mu[c] += x;
    mu[c] /= static_cast<double>(m[c].size());
    var[c] = 0.0;
    for (double x : m[c]) var[c] += (x - mu[c]) * (x - mu[c]);
    var[c] /= static_cast<double>(m[c].size() - 1);
  }
  const double t = (mu[1] - mu[0]) / std::sqrt(var[0] / m[0].size() + var[1] / m[1].size());
  CHECK(std::fabs(t) < 3.0);
  spec.signal_strength = 0.0f;
  CHECK_THROWS(spec.validate());
}

TEST_CASE("planted signal has the configured magnitude and a threshold separates the classes") {
  SyntheticSpec spec;
  spec.seed = 11;
  const auto cohort = generate_synthetic_cohort(spec);
  double sig[2] = {0, 0}, bg[2] = {0, 0};
  int count[2] = {0, 0};
  const auto bg_cells = background_cells(spec);
  std::vector<std::pair<double, int>> scores;
  for (const auto& s : cohort) {
    const double m = cell_mean(s.t1, spec.signal_patches, spec.grid);
    sig[s.label] += m;
    bg[s.label] += cell_mean(s.t1, bg_cells, spec.grid);
    ++count[s.label];
    scores.emplace_back(m, s.label);
  }
  for (int c = 0; c < 2; ++c) {
    sig[c] /= count[c];
    bg[c] /= count[c];
  }
  const double drop = sig[0] - sig[1];
  CHECK(drop > 0.9 * spec.signal_strength);
  CHECK(drop < 1.1 * spec.signal_strength);
  CHECK(std::fabs(bg[0] - bg[1]) < 0.1 * spec.signal_strength);

  // Midpoint threshold on the signal-cell mean.
  const double thr = 0.5 * (sig[0] + sig[1]);
  int correct = 0;
  for (const auto& [m, label] : scores) correct += ((m < thr ? 1 : 0) == label);
  CHECK(static_cast<double>(correct) / static_cast<double>(scores.size()) >= 0.9);

  // The fMRI oscillation is stronger in the signal cells of class 1.
  const auto& s1 = cohort[1];
  const PatchSet p = partition4d(s1.fmri, spec.grid);
  auto swing = [&](int cell) {
    const Tensor& x = p.patches[static_cast<std::size_t>(cell)];
    const std::int64_t per = static_cast<std::int64_t>(x.numel()) / spec.frames;
    double lo = 1e9, hi = -1e9;
    for (int t = 0; t < spec.frames; ++t) {
      double m = 0.0;
      for (std::int64_t i = 0; i < per; ++i) m += x[t * per + i];
      lo = std::min(lo, m / per);
      hi = std::max(hi, m / per);
    }
    return hi - lo;
  };
  CHECK(swing(spec.signal_patches[0]) > swing(0));
  spec.signal_patches = {64};
  CHECK_THROWS(generate_synthetic_cohort(spec));
}

TEST_CASE("volume files round-trip and malformed files are rejected by kind") {
  const auto dir = scratch_dir("data_io_mvl1");
  Rng rng(71);
  for (const Shape& s : {Shape{5}, Shape{1, 3, 4, 5}, Shape{2, 1, 3, 2, 2}}) {
    const Tensor t = random_tensor(s, rng);
    save_volume(t, dir / "v.mvl");
    const Tensor back = load_volume(dir / "v.mvl");
    CHECK(back.shape() == t.shape());
    CHECK(back.bit_equal(t));
  }
  const Tensor t = random_tensor({2, 3, 4}, rng);
  save_volume(t, dir / "good.mvl");
  const std::string good = read_file(dir / "good.mvl");
  CHECK(good.size() == 4 + 4 + 3 * 4 + 24 * 4);
  CHECK(good.substr(0, 4) == "MVL1");

  std::string bad = good;
  bad[0] = 'X';
  write_file(dir / "magic.mvl", bad);
  CHECK(load_error_kind(dir / "magic.mvl") == VolumeErrorKind::BadMagic);
  write_file(dir / "short.mvl", good.substr(0, good.size() - 3));
  CHECK(load_error_kind(dir / "short.mvl") == VolumeErrorKind::TruncatedPayload);
  write_file(dir / "long.mvl", good + "xx");
  CHECK(load_error_kind(dir / "long.mvl") == VolumeErrorKind::TrailingBytes);
  std::string huge = good;
  for (int i = 8; i < 20; ++i) huge[static_cast<std::size_t>(i)] = '\xff';
  write_file(dir / "huge.mvl", huge);
  CHECK(load_error_kind(dir / "huge.mvl") == VolumeErrorKind::ExtentOverflow);
  CHECK(load_error_kind(dir / "missing.mvl") == VolumeErrorKind::Io);
}

TEST_CASE("stratified split") {
  SyntheticSpec spec;
  spec.n_per_class = 50;
  spec.extents = {4, 4, 4};
  spec.frames = 1;
  spec.signal_patches = {0};
  const auto cohort = generate_synthetic_cohort(spec);
  const TrainTestSplit s = split_train_test(cohort, 0.7, 3);
  CHECK(s.train.size() == 70);
  CHECK(s.test.size() == 30);
  int train_pos = 0;
  std::set<std::string> ids;
  for (const auto& x : s.train) {
    train_pos += x.label;
    ids.insert(x.subject_id);
  }
  CHECK(train_pos == 35);
  for (const auto& x : s.test) CHECK(ids.insert(x.subject_id).second);
  CHECK(ids.size() == 100);
  // Cohort order is kept inside each half.
  CHECK(std::is_sorted(s.test.begin(), s.test.end(),
                       [](const SubjectSample& a, const SubjectSample& b) { return a.subject_id < b.subject_id; }));
  const TrainTestSplit again = split_train_test(cohort, 0.7, 3);
  for (std::size_t i = 0; i < s.test.size(); ++i) CHECK(again.test[i].subject_id == s.test[i].subject_id);
  CHECK_THROWS(split_train_test(cohort, 1.0, 3));
  CHECK_THROWS(split_train_test(cohort, 0.0, 3));
}

TEST_CASE("pgm slice export") {
  const auto dir = scratch_dir("data_io_pgm");
  Tensor v({1, 2, 3, 4});
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = static_cast<float>(i);
  export_pgm_slice(v, 0, 1, dir / "a.pgm");
  const std::string a = read_file(dir / "a.pgm");
  const std::string header = "P5\n4 3\n255\n";
  REQUIRE(a.size() == header.size() + 12);
  CHECK(a.substr(0, header.size()) == header);
  CHECK(static_cast<unsigned char>(a[header.size()]) == 0);
  CHECK(static_cast<unsigned char>(a.back()) == 255);

  export_pgm_slice(Tensor({2, 2, 2}, 3.0f), 2, 0, dir / "c.pgm");
  const std::string c = read_file(dir / "c.pgm");
  for (std::size_t i = c.size() - 4; i < c.size(); ++i) CHECK(c[i] == 0);
  CHECK_THROWS(export_pgm_slice(v, 3, 0, dir / "x.pgm"));
  CHECK_THROWS(export_pgm_slice(v, 1, 3, dir / "x.pgm"));
}

TEST_CASE("metrics csv export") {
  const auto dir = scratch_dir("data_io_csv");
  MetricsReport r;
  ConfusionCounts c;
  c.tp = 8;
  c.fp = 2;
  c.fn = 1;
  c.tn = 9;
  r.rows.push_back(metrics_from(c, "attention", 3));
  c = {};
  c.tp = 25;
  c.fp = 4;
  c.fn = 8;
  c.tn = 0;
  r.rows.push_back(metrics_from(c, "addition", 4));
  export_metrics_csv(r, dir / "m.csv");
  const std::string text = read_file(dir / "m.csv");
  CHECK(text ==
        "run,seed,task,accuracy,precision,recall\n"
        "attention,3,AD-vs-rest,0.8500,0.8000,0.8889\n"
        "addition,4,AD-vs-rest,0.6757,0.8621,0.7576\n");
  export_metrics_csv(r, dir / "m2.csv");
  CHECK(read_file(dir / "m2.csv") == text);
}
