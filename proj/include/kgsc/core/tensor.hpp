// Copyright 2026 The kgsc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense row-major double tensors with a reverse-mode tape.
//
// A Tensor is a shared handle to an immutable node. Nodes created while
// gradient recording is enabled and that depend on a grad-tracking input
// remember their inputs and a backward closure; backward() walks that DAG in
// reverse topological order. Parameters are the only nodes whose values are
// mutated after construction, and only by an optimizer.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kgsc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

// Receives the output gradient and one slot per input; a slot is nullptr when
// that input does not track gradients. Implementations accumulate (+=).
using BackwardFn =
    std::function<void(std::span<const double> out_grad, std::span<std::vector<double>*> in_grads)>;

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  std::vector<double>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zeros
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  // Grad-tracking leaf.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  double operator[](std::size_t i) const { return values()[i]; }
  double item() const;

  bool requires_grad() const;
  // Empty span until a backward pass reaches this node.
  std::span<const double> grad() const;

  // Same values, no history.
  Tensor detach() const;

  // Leaf-only mutation (optimizers, checkpoint restore, test hooks).
  std::span<double> mutable_values();
  std::span<double> mutable_grad();
  void zero_grad();

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_op(Shape, std::vector<double>, std::span<const Tensor>, BackwardFn);

  std::shared_ptr<detail::Node> node_;
};

// Builds an op result. History is recorded only when recording is enabled and
// at least one input tracks gradients.
Tensor make_op(Shape shape, std::vector<double> values, std::span<const Tensor> inputs,
               BackwardFn backward);

inline Tensor make_op(Shape shape, std::vector<double> values,
                      std::initializer_list<Tensor> inputs, BackwardFn backward) {
  return make_op(std::move(shape), std::move(values),
                 std::span<const Tensor>(inputs.begin(), inputs.size()), std::move(backward));
}

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Seeds d(loss)/d(loss) = 1 and accumulates into every reachable
// grad-tracking leaf. Intermediate history is released afterwards.
void backward(const Tensor& loss);

}  // namespace kgsc
