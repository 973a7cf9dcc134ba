// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace masan {

Tensor ParameterStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  init.set_requires_grad(true);
  index_[name] = params_.size();
  params_.push_back({name, init});
  return init;
}

Tensor ParameterStore::uniform(const std::string& name, Shape shape, std::int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const float bound = std::sqrt(3.0f / static_cast<float>(fan_in));
  for (float& v : t.data()) v = rng.uniform(-bound, bound);
  return add(name, t);
}

Tensor ParameterStore::constant(const std::string& name, Shape shape, float value) {
  return add(name, Tensor(std::move(shape), value));
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return params_[it->second].value;
}

std::size_t ParameterStore::value_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) {
    p.value.grad();  // untouched parameters still report an explicit zero gradient
    p.value.zero_grad();
  }
}

void adam_step(std::vector<Parameter>& params, AdamState& state, const AdamOptions& opt) {
  if (!(opt.beta1 > 0.0f && opt.beta1 < 1.0f && opt.beta2 > 0.0f && opt.beta2 < 1.0f))
    throw std::invalid_argument("adam_step: betas must lie in (0, 1)");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.numel(), 0.0f);
      state.v.emplace_back(p.value.numel(), 0.0f);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state does not match parameters");
  state.t += 1;
  const double c1 = 1.0 - std::pow(static_cast<double>(opt.beta1), static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(static_cast<double>(opt.beta2), static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k].value;
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.numel()) throw std::invalid_argument("adam_step: moment shape mismatch for " + params[k].name);
    auto w = p.data();
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0f - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0f - opt.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= static_cast<float>(opt.lr * mhat / (std::sqrt(vhat) + opt.eps));
    }
  }
}

}  // namespace masan
