// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace masan {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

static void validate_shape(const Shape& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one axis");
  for (auto e : shape)
    if (e < 1) throw std::invalid_argument("tensor extents must be >= 1, got " + shape_str(shape));
}

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {
  node_->shape = {1};
  node_->value.assign(1, 0.0f);
}

Tensor::Tensor(Shape shape, float fill) : node_(std::make_shared<detail::Node>()) {
  validate_shape(shape);
  node_->value.assign(static_cast<std::size_t>(numel_of(shape)), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : node_(std::make_shared<detail::Node>()) {
  validate_shape(shape);
  if (static_cast<std::int64_t>(values.size()) != numel_of(shape))
    throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

float Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

std::span<float> Tensor::grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0f);
  return node_->grad;
}

void Tensor::zero_grad() const {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

Tensor Tensor::clone() const {
  Tensor t(node_->shape, node_->value);
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value); }

bool Tensor::bit_equal(const Tensor& other) const {
  return shape() == other.shape() &&
         std::memcmp(node_->value.data(), other.node_->value.data(), numel() * sizeof(float)) == 0;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  loss.grad()[0] = 1.0f;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

}  // namespace masan
