// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace masan {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major float32 array with optional gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same storage, which is what
/// lets the tape route gradients back into parameters. Use clone() for a deep
/// copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0f); }
  static Tensor scalar(float v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  // Tensor is a shared handle: constness applies to the handle, not to the
  // storage, as with a const shared_ptr.
  std::span<float> data() const { return node_->value; }
  float& operator[](std::size_t i) const { return node_->value[i]; }

  /// Value of a one-element tensor.
  float item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer, allocated as zeros on first access.
  std::span<float> grad() const;
  void zero_grad() const;

  Tensor clone() const;
  /// Copy of the values with no gradient tracking.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  bool bit_equal(const Tensor& other) const;

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Ordered record of differentiable operations for reverse-mode accumulation.
class Tape {
 public:
  using Backward = std::function<void()>;

  void record(Backward fn) { steps_.push_back(std::move(fn)); }
  std::size_t size() const { return steps_.size(); }
  void clear() { steps_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and replays the recorded steps in reverse.
  void backward(const Tensor& loss);

 private:
  std::vector<Backward> steps_;
};

/// Installs a tape as the active recorder for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording for the current thread (evaluation passes).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Reverse-mode accumulation of a scalar loss over `tape`.
void backward(const Tensor& loss, Tape& tape);

}  // namespace masan
