// Copyright 2026 The Tamperloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TAMPERLOC_AUTOGRAD_HPP_
#define TAMPERLOC_AUTOGRAD_HPP_

// Minimal reverse-mode automatic differentiation over dense row-major
// tensors. A Var is a shared handle to a graph node; ops build the graph
// eagerly and `backward` walks it in reverse topological order.

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace tamperloc {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape);

namespace ag {

// Disables graph construction on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Tensor storage is 64-byte aligned. Vectorized reductions peel a
// different prefix depending on the buffer address, so unaligned storage
// makes float sums vary from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlignment = 64;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + kAlignment - 1) / kAlignment * kAlignment;
    void* p = std::aligned_alloc(kAlignment, bytes == 0 ? kAlignment : bytes);
    if (p == nullptr) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

template <typename T>
struct Node {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return inputs.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var leaf(Shape shape, const std::vector<T>& values, bool requires_grad = false) {
    return leaf(std::move(shape), Buffer<T>(values.begin(), values.end()), requires_grad);
  }
  static Var leaf(Shape shape, std::initializer_list<T> values, bool requires_grad = false) {
    return leaf(std::move(shape), Buffer<T>(values), requires_grad);
  }
  static Var leaf(Shape shape, Buffer<T> values, bool requires_grad = false) {
    if (static_cast<std::int64_t>(values.size()) != tamperloc::numel(shape)) {
      throw std::invalid_argument("Var::leaf: value count " + std::to_string(values.size()) +
                                  " does not match shape " + shape_string(shape));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
  }
  static Var zeros(Shape shape, bool requires_grad = false) {
    Buffer<T> values(static_cast<std::size_t>(tamperloc::numel(shape)), T(0));
    return leaf(std::move(shape), std::move(values), requires_grad);
  }
  static Var scalar(T v) { return leaf({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t size(std::size_t dim) const { return node_->shape.at(dim); }
  std::size_t ndim() const { return node_->shape.size(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> data() const { return node_->value; }
  std::span<T> mutable_data() { return node_->value; }
  std::vector<T> values() const { return {node_->value.begin(), node_->value.end()}; }
  const Buffer<T>& buffer() const { return node_->value; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  // Drops the gradient buffer; the optimizer skips tensors without one.
  void clear_grad() { node_->grad.clear(); }

  T item() const {
    if (node_->value.size() != 1) throw std::logic_error("Var::item on non-scalar " + shape_string(shape()));
    return node_->value[0];
  }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Builds a result node. When no input needs a gradient (or grad mode is
// off) the result is a detached leaf and `fn` is dropped.
template <typename T>
Var<T> make_result(Shape shape, Buffer<T> values, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward_fn = std::move(fn);
  }
  return Var<T>(std::move(node));
}

// Accumulates d(root)/d(leaf) into every reachable leaf that requires a
// gradient. Intermediate gradients are reset first, so repeated calls on
// separate graphs accumulate only into shared leaves (parameters).
template <typename T>
void backward(const Var<T>& root, T seed = T(1)) {
  if (root.numel() != 1) throw std::logic_error("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), T(0));
  }
  root.node()->ensure_grad();
  root.node()->grad[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
  // Intermediate buffers are no longer needed once leaves are filled.
  for (Node<T>* n : order) {
    if (!n->is_leaf()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

}  // namespace ag
}  // namespace tamperloc

#endif  // TAMPERLOC_AUTOGRAD_HPP_
