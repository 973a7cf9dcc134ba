// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "masan/rng.hpp"
#include "masan/tensor.hpp"

namespace masan {

/// A named learnable tensor. The gradient lives on `value` (value.grad()).
struct Parameter {
  std::string name;
  Tensor value;
};

/// Owns every Parameter of a model, in creation order.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Tensor init);
  /// Fan-in-scaled uniform init: U(-sqrt(3/fan_in), sqrt(3/fan_in)).
  Tensor uniform(const std::string& name, Shape shape, std::int64_t fan_in, Rng& rng);
  Tensor constant(const std::string& name, Shape shape, float value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor get(const std::string& name) const;

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t value_count() const;

  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

struct AdamOptions {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::int64_t t = 0;
};

/// One bias-corrected Adam update over `params` using their accumulated grads.
void adam_step(std::vector<Parameter>& params, AdamState& state, const AdamOptions& opt);
inline void adam_step(ParameterStore& store, AdamState& state, const AdamOptions& opt) {
  adam_step(store.params(), state, opt);
}

}  // namespace masan
