// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <utility>

#include "masan/classifier.hpp"
#include "masan/config.hpp"
#include "masan/fusion.hpp"
#include "masan/gradcheck.hpp"
#include "masan/model.hpp"
#include "masan/ops.hpp"
#include "masan/rng.hpp"

namespace masan {

namespace {

constexpr std::size_t kCoordsPerTensor = 16;

// Distinct values on a 0.02 lattice, shuffled, none within 0.01 of zero.
// Keeps relu, abs and max away from their kinks under a 1e-3 probe.
Tensor spaced(const Shape& shape, Rng& rng, float step = 0.02f) {
  Tensor t(shape);
  const std::size_t n = t.numel();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  for (std::size_t i = 0; i < n; ++i)
    t[i] = (static_cast<float>(order[i]) - static_cast<float>(n / 2)) * step + 0.5f * step;
  t.set_requires_grad(true);
  return t;
}

Tensor gaussian(const Shape& shape, Rng& rng, float sigma = 1.0f) {
  Tensor t(shape);
  for (auto& v : t.data()) v = sigma * static_cast<float>(rng.normal());
  t.set_requires_grad(true);
  return t;
}

struct Problem {
  Problem(std::function<Tensor()> f, std::vector<Tensor> in, float e = 1e-3f)
      : forward(std::move(f)), inputs(std::move(in)), eps(e) {}

  std::function<Tensor()> forward;
  std::vector<Tensor> inputs;
  float eps;
  // When set, `forward` must return a scalar loss and the probe differentiates
  // this double-precision evaluation of the same loss instead.
  std::function<double()> objective;
};

std::vector<std::size_t> pick(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n <= kCoordsPerTensor) return idx;
  rng.shuffle(idx);
  idx.resize(kCoordsPerTensor);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// One random coordinate per input tensor, probed against the double-precision
// objective. Rounding in the float32 forward makes a single central difference
// noisy at small steps, so the estimate averages several nearby steps.
double check_scalar_loss(Problem& p, Rng& rng) {
  constexpr int K = 8;
  for (auto& t : p.inputs) t.zero_grad();
  Tape tape;
  {
    TapeScope rec(tape);
    tape.backward(p.forward());
  }
  const auto objective = [&] {
    NoGradScope no_grad;
    return p.objective();
  };
  std::vector<double> analytic, numeric;
  for (auto& t : p.inputs) {
    const std::size_t c = rng.below(t.numel());
    double fd = 0.0;
    for (int k = 0; k < K; ++k) {
      const float step = p.eps * (0.5f + static_cast<float>(k) / static_cast<float>(K));
      fd += finite_diff_coordinates(objective, t, std::span(&c, 1), step)[0];
    }
    analytic.push_back(t.grad()[c]);
    numeric.push_back(fd / K);
  }
  return relative_error(analytic, numeric);
}

double check_point(Problem& p, Rng& rng) {
  if (p.objective) return check_scalar_loss(p, rng);
  Tensor cot;
  {
    NoGradScope no_grad;
    const Tensor probe = p.forward();
    cot = Tensor(probe.shape());
    for (auto& v : cot.data()) v = rng.uniform(-1.0f, 1.0f);
  }
  for (auto& t : p.inputs) t.zero_grad();
  Tape tape;
  {
    TapeScope rec(tape);
    Tensor loss = sum(mul(p.forward(), cot));
    tape.backward(loss);
  }
  const auto objective = [&] {
    NoGradScope no_grad;
    const Tensor out = p.forward();
    double acc = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) acc += static_cast<double>(out[i]) * cot[i];
    return acc;
  };
  std::vector<double> analytic, numeric;
  for (auto& t : p.inputs) {
    const auto coords = pick(t.numel(), rng);
    const auto g = t.grad();
    for (std::size_t c : coords) analytic.push_back(g[c]);
    const auto fd = finite_diff_coordinates(objective, t, coords, p.eps);
    numeric.insert(numeric.end(), fd.begin(), fd.end());
  }
  return relative_error(analytic, numeric);
}

// Shifts hidden biases so no pre-activation sits within `margin` of the relu
// kink for this particular input batch.
void clear_relu_kinks(const std::string& prefix, const Tensor& x, std::size_t hidden_layers, ParameterStore& store,
                      float margin = 0.05f) {
  NoGradScope no_grad;
  Tensor y = x;
  for (std::size_t i = 0; i < hidden_layers; ++i) {
    const std::string name = prefix + ".fc" + std::to_string(i);
    const Tensor w = store.get(name + ".w"), b = store.get(name + ".b");
    const Tensor z = matmul(y, w);
    const std::int64_t N = z.dim(0), H = z.dim(1);
    for (std::int64_t j = 0; j < H; ++j) {
      const auto clear = [&](float shift) {
        for (std::int64_t n = 0; n < N; ++n)
          if (std::fabs(z[n * H + j] + b[j] + shift) < margin) return false;
        return true;
      };
      for (int k = 0; k <= 64 && !clear(0.0f); ++k) {
        const float step = margin * static_cast<float>((k + 2) / 2) * (k % 2 ? -1.0f : 1.0f);
        if (clear(step)) b[j] += step;
      }
    }
    y = Tensor(z.shape());
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t j = 0; j < H; ++j) y[n * H + j] = std::max(0.0f, z[n * H + j] + b[j]);
  }
}

using Builder = std::function<Problem(Rng&)>;

struct Family {
  std::string name;
  Builder build;
};

ExperimentConfig toy_config() {
  ExperimentConfig c;
  c.n_per_class = 1;
  c.extents = {8, 8, 8};
  c.frames = 2;
  c.grid.grid = {2, 2, 2};
  c.signal_patches = {1};
  c.channel_schedule = {2, 4};
  c.final_channels = 2;
  c.target_extent = 2;
  c.mlp_hidden = {6};
  c.reduction_ratio = 2;
  c.alpha = 0.7f;
  c.beta = 0.3f;
  c.lambda = 1e-2f;
  return c;
}

Batch toy_batch(const ExperimentConfig& cfg, Rng& rng) {
  SyntheticSpec spec = cfg.synthetic_spec();
  spec.seed = rng.next_u64();
  Batch b = make_batch(generate_synthetic_cohort(spec));
  return b;
}

// A random subset of parameter tensors keeps the probe count bounded.
std::vector<Tensor> sample_parameters(MasanModel& model, Rng& rng, std::size_t count = 6) {
  std::vector<Tensor> in;
  for (auto& p : model.params().params()) in.push_back(p.value);
  rng.shuffle(in);
  in.resize(std::min(in.size(), count));
  return in;
}

std::vector<Family> families() {
  std::vector<Family> f;
  f.push_back({"elementwise", [](Rng& rng) {
                 Tensor a = spaced({3, 7}, rng, 0.05f), b = spaced({3, 7}, rng, 0.05f);
                 return Problem{[=] { return sub(add(mul(relu(a), sigmoid(b)), abs(a)), scale(mul(a, b), 0.5f)); },
                                {a, b}};
               }});
  f.push_back({"matmul", [](Rng& rng) {
                 Tensor a = gaussian({3, 4}, rng), b = gaussian({4, 5}, rng);
                 return Problem{[=] { return matmul(a, b); }, {a, b}};
               }});
  f.push_back({"matmul_batched", [](Rng& rng) {
                 Tensor a = gaussian({2, 3, 4}, rng), b = gaussian({2, 4, 2}, rng);
                 return Problem{[=] { return matmul(a, b); }, {a, b}};
               }});
  f.push_back({"conv3d", [](Rng& rng) {
                 Tensor x = gaussian({2, 2, 4, 5, 3}, rng), w = gaussian({3, 2, 3, 3, 3}, rng, 0.3f),
                        b = gaussian({3}, rng);
                 return Problem{[=] { return conv3d(x, w, b, 1, 1); }, {x, w, b}};
               }});
  f.push_back({"conv3d_stride2", [](Rng& rng) {
                 Tensor x = gaussian({1, 2, 6, 4, 5}, rng), w = gaussian({2, 2, 3, 3, 3}, rng, 0.3f),
                        b = gaussian({2}, rng);
                 return Problem{[=] { return conv3d(x, w, b, 2, 1); }, {x, w, b}};
               }});
  f.push_back({"conv3d_1x1", [](Rng& rng) {
                 Tensor x = gaussian({2, 3, 2, 2, 3}, rng), w = gaussian({2, 3, 1, 1, 1}, rng),
                        b = gaussian({2}, rng);
                 return Problem{[=] { return conv3d(x, w, b, 1, 0); }, {x, w, b}};
               }});
  f.push_back({"group_norm", [](Rng& rng) {
                 Tensor x = gaussian({2, 4, 3, 2, 3}, rng), g = gaussian({4}, rng), b = gaussian({4}, rng);
                 return Problem{[=] { return group_norm(x, 2, g, b); }, {x, g, b}};
               }});
  f.push_back({"upsample_trilinear", [](Rng& rng) {
                 Tensor x = gaussian({1, 2, 2, 3, 2}, rng);
                 return Problem{[=] { return upsample_trilinear2x(x); }, {x}};
               }});
  f.push_back({"softmax", [](Rng& rng) {
                 Tensor a = gaussian({3, 5}, rng), b = gaussian({2, 3, 4}, rng);
                 return Problem{[=] {
                                  return concat({reshape(softmax(a, 1), {15}), reshape(softmax(b, 1), {24})}, 0);
                                },
                                {a, b}};
               }});
  f.push_back({"reduce", [](Rng& rng) {
                 Tensor x = spaced({2, 3, 4}, rng, 0.05f);
                 return Problem{[=] {
                                  return concat({reshape(reduce(ReduceOp::Sum, x, {1}), {8}),
                                                 reshape(reduce(ReduceOp::Mean, x, {0, 2}), {3}),
                                                 reshape(reduce(ReduceOp::Max, x, {2}, true), {6})},
                                                0);
                                },
                                {x}};
               }});
  f.push_back({"shape_ops", [](Rng& rng) {
                 Tensor a = gaussian({2, 3, 1}, rng), b = gaussian({2, 3, 4}, rng);
                 return Problem{[=] {
                                  const Tensor e = expand(a, {2, 3, 4});
                                  const Tensor c = concat({e, b}, 2);
                                  return permute(slice(c, 2, 1, 6), {2, 0, 1});
                                },
                                {a, b}};
               }});
  f.push_back({"attention_path", [](Rng& rng) {
                 ParameterStore store;
                 const QkvParams p = make_qkv_params("q", 6, 3, store, rng);
                 Tensor x = gaussian({2, 4, 6}, rng);
                 return Problem{[=] {
                                  const QkvProjection qkv = project_qkv(RegionFeatures{x}, p);
                                  return region_self_attention(qkv.queries, qkv.keys, qkv.values).new_regions;
                                },
                                {x, p.wq, p.wk, p.wv}};
               }});
  f.push_back({"attention_scaled", [](Rng& rng) {
                 Tensor q = gaussian({2, 3, 4}, rng), k = gaussian({2, 3, 4}, rng), v = gaussian({2, 3, 5}, rng);
                 return Problem{[=] { return region_self_attention(q, k, v, true).new_regions; }, {q, k, v}};
               }});
  f.push_back({"channel_gate", [](Rng& rng) {
                 ParameterStore store;
                 const GateParams g = make_gate_params("g", 4, 2, store, rng);
                 Tensor x = spaced({2, 4, 3, 2, 2}, rng);
                 return Problem{[=] { return channel_attention(FeatureMap{x}, g).features; },
                                {x, g.ch_w1, g.ch_b1, g.ch_w2, g.ch_b2}};
               }});
  f.push_back({"spatial_gate", [](Rng& rng) {
                 ParameterStore store;
                 const GateParams g = make_gate_params("g", 3, 1, store, rng);
                 Tensor x = spaced({2, 3, 3, 2, 3}, rng);
                 return Problem{[=] { return spatial_attention(FeatureMap{x}, g).features; }, {x, g.sp_w, g.sp_b}};
               }});
  f.push_back({"fusion", [](Rng& rng) {
                 Tensor a = gaussian({2, 2, 2, 2, 4}, rng), b = gaussian({2, 2, 2, 2, 4}, rng);
                 GridSpec grid;
                 grid.grid = {2, 1, 2};
                 return Problem{[=] {
                                  const FeatureMap fa{assemble_regions(split_regions(a, grid), grid)};
                                  const Tensor t = t1_guided_fuse(fa, FeatureMap{b}).features;
                                  return add(t, addition_fuse(fa, FeatureMap{b}).features);
                                },
                                {a, b}};
               }});
  f.push_back({"mlp", [](Rng& rng) {
                 ParameterStore store;
                 MlpConfig cfg;
                 cfg.hidden = {7, 5};
                 const Mlp mlp("m", 6, cfg, store, rng);
                 Tensor x = gaussian({3, 6}, rng);
                 clear_relu_kinks("m", x, cfg.hidden.size(), store);
                 std::vector<Tensor> in{x};
                 for (auto& p : store.params()) in.push_back(p.value);
                 return Problem{[=] { return mlp.forward(x).probs; }, in};
               }});
  f.push_back({"cross_entropy", [](Rng& rng) {
                 Tensor z = gaussian({4, 3}, rng);
                 return Problem{[=] {
                                  const Prediction p{z, softmax(z, 1)};
                                  const std::vector<int> labels{0, 2, 1, 2};
                                  return cross_entropy(p, labels);
                                },
                                {z}};
               }});
  f.push_back({"reconstruction_loss", [](Rng& rng) {
                 Tensor g = gaussian({2, 1, 3, 3, 2}, rng), o = gaussian({2, 1, 3, 3, 2}, rng),
                        h = spaced({2, 2, 2, 2, 2}, rng, 0.05f);
                 LossConfig cfg;
                 cfg.lambda = 0.1f;
                 return Problem{[=] { return modality_recon_loss(g, o, h, cfg); }, {g, o, h}, 1e-2f};
               }});
  f.push_back({"model_loss", [](Rng& rng) {
                 ExperimentConfig cfg = toy_config();
                 auto model = std::make_shared<MasanModel>(cfg.model_config(), rng.next_u64());
                 const Batch batch = toy_batch(cfg, rng);
                 Problem p{[=] { return model->forward(batch).total; }, sample_parameters(*model, rng, 20), 1e-4f};
                 p.objective = [=] { return model->forward(batch).objective; };
                 return p;
               }});
  return f;
}

}  // namespace

std::vector<GradcheckLine> run_gradcheck_suite(std::uint64_t seed, int points) {
  std::vector<GradcheckLine> lines;
  Rng rng(seed);
  for (const auto& fam : families()) {
    GradcheckLine line{fam.name, 0.0, points};
    for (int i = 0; i < points; ++i) {
      Problem p = fam.build(rng);
      line.max_relative_error = std::max(line.max_relative_error, check_point(p, rng));
    }
    lines.push_back(line);
  }
  return lines;
}

}  // namespace masan
