// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <set>

#include "masan/gradcheck.hpp"
#include "masan/gradcheck_suite.hpp"
#include "masan/ops.hpp"
#include "masan/optim.hpp"
#include "test_util.hpp"

using namespace masan;
using masan::test::random_tensor;

namespace {

// Runs `steps` Adam updates on f(w) = sum(w^2), recomputing the gradient each step.
std::vector<float> adam_on_square(float w0, float lr, int steps) {
  ParameterStore store;
  Tensor w = store.add("w", Tensor({1}, w0));
  AdamState st;
  AdamOptions opt;
  opt.lr = lr;
  std::vector<float> trace;
  for (int i = 0; i < steps; ++i) {
    store.zero_grad();
    Tape tape;
    {
      TapeScope rec(tape);
      tape.backward(sum(mul(w, w)));
    }
    adam_step(store, st, opt);
    trace.push_back(w[0]);
  }
  return trace;
}

}  // namespace

TEST_CASE("adam: three steps on w^2 follow the scripted oracle") {
  // Oracle in double precision, transcribed from the bias-corrected update rule.
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double w = 1.0, m = 0.0, v = 0.0;
  std::vector<double> want;
  for (int t = 1; t <= 3; ++t) {
    const double g = 2.0 * w;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    w -= lr * mh / (std::sqrt(vh) + eps);
    want.push_back(w);
  }
  const auto got = adam_on_square(1.0f, 0.1f, 3);
  for (int i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
}

TEST_CASE("adam: first step moves by lr against the gradient sign") {
  for (float g : {-3.0f, 0.25f, 40.0f}) {
    ParameterStore store;
    Tensor w = store.add("w", Tensor({2}, 1.0f));
    w.grad()[0] = g;
    w.grad()[1] = g;
    AdamState st;
    adam_step(store, st, AdamOptions{});
    CHECK(w[0] == doctest::Approx(1.0 - 1e-3 * (g > 0 ? 1 : -1)).epsilon(1e-6));
    CHECK(st.t == 1);
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged and t counts steps") {
  ParameterStore store;
  Tensor w = store.add("w", Tensor({3}, {1, -2, 3}));
  const Tensor before = w.clone();
  AdamState st;
  for (int i = 0; i < 4; ++i) {
    store.zero_grad();
    adam_step(store, st, AdamOptions{});
  }
  CHECK(w.bit_equal(before));
  CHECK(st.t == 4);
  for (const auto& m : st.m)
    for (float x : m) CHECK(std::isfinite(x));
}

TEST_CASE("parameter store") {
  ParameterStore store;
  Rng rng(1);
  const Tensor u = store.uniform("a.w", {64, 16}, 64, rng);
  const float bound = std::sqrt(3.0f / 64.0f);
  for (float v : u.data()) CHECK(std::fabs(v) <= bound);
  store.constant("a.b", {16}, 0.5f);
  CHECK(store.size() == 2);
  CHECK(store.value_count() == 64 * 16 + 16);
  CHECK(store.contains("a.b"));
  CHECK(store.get("a.w").same_storage(u));
  CHECK_THROWS(store.constant("a.b", {1}, 0.0f));
  CHECK_THROWS(store.get("missing"));
  std::set<std::string> names;
  for (const auto& p : store.params()) {
    names.insert(p.name);
    CHECK(p.value.grad().size() == p.value.numel());
  }
  CHECK(names.size() == store.size());
}

TEST_CASE("finite differences: basic examples") {
  Rng rng(2);
  const Tensor x = random_tensor({5}, rng);
  const auto f_sum = [](const Tensor& t) {
    double s = 0.0;
    for (float v : t.data()) s += v;
    return s;
  };
  const Tensor ones = finite_diff_gradient(f_sum, x);
  for (float g : ones.data()) CHECK(g == doctest::Approx(1.0).epsilon(1e-6));
  const auto f_sq = [](const Tensor& t) { return static_cast<double>(t[0]) * t[0]; };
  CHECK(finite_diff_gradient(f_sq, Tensor({1}, 3.0f))[0] == doctest::Approx(6.0).epsilon(1e-3));
  const Tensor before = x.clone();
  (void)finite_diff_gradient(f_sum, x);
  CHECK(x.bit_equal(before));
}

TEST_CASE("finite differences agree with backward on a two-layer network") {
  Rng rng(3);
  Tensor x = random_tensor({4, 5}, rng);
  Tensor w1 = random_tensor({5, 6}, rng, 0.5f);
  Tensor w2 = random_tensor({6, 2}, rng, 0.5f);
  w1.set_requires_grad(true);
  const auto loss = [&]() { return sum(matmul(sigmoid(matmul(x, w1)), w2)); };
  Tape tape;
  {
    TapeScope rec(tape);
    tape.backward(loss());
  }
  const auto f = [&](const Tensor& w) {
    NoGradScope off;
    return static_cast<double>(sum(matmul(sigmoid(matmul(x, w)), w2))[0]);
  };
  const Tensor numeric = finite_diff_gradient(f, w1);
  std::vector<double> a, b;
  for (std::size_t i = 0; i < numeric.numel(); ++i) {
    a.push_back(w1.grad()[i]);
    b.push_back(numeric[i]);
  }
  CHECK(relative_error(a, b) < 1e-3);
}

TEST_CASE("relative error") {
  const std::vector<double> z{0.0, 0.0}, a{3.0, 4.0}, b{3.0, 4.5};
  CHECK(relative_error(z, z) == 0.0);
  CHECK(relative_error(a, a) == 0.0);
  CHECK(relative_error(a, b) == doctest::Approx(0.5 / std::sqrt(9.0 + 20.25)));
}

TEST_CASE("gradient suite: every family under 1e-3 at five points") {
  const auto lines = run_gradcheck_suite(7, 5);
  std::set<std::string> families;
  for (const auto& l : lines) {
    INFO(l.family << " max_rel_err=" << l.max_relative_error);
    CHECK(l.points == 5);
    CHECK(l.passed());
    families.insert(l.family);
  }
  for (const char* f : {"conv3d", "group_norm", "upsample_trilinear", "softmax", "attention_path", "channel_gate",
                        "spatial_gate", "mlp", "cross_entropy", "reconstruction_loss", "model_loss"})
    CHECK(families.count(f) == 1);
}
