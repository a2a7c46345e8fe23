// Copyright 2026 The simtpe Authors.
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

#include "simtpe/tensor.hpp"

#include <atomic>
#include <sstream>

#include "simtpe/error.hpp"

namespace simtpe {
namespace {

thread_local Graph* g_active_graph = nullptr;
std::atomic<std::uint64_t> g_next_id{1};

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> value) {
  if (shape_size(shape) != value.size()) {
    throw InvalidArgument("tensor data length " + std::to_string(value.size()) +
                          " does not match shape " + shape_to_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape) {
  auto n = shape_size(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(new_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) {
  return Tensor(new_node({}, {value}));
}

Tensor Tensor::row(std::vector<double> values) {
  auto n = values.size();
  return Tensor(new_node({1, n}, std::move(values)));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  auto node = new_node(std::move(shape), std::move(values));
  node->requires_grad = true;
  return Tensor(std::move(node));
}

std::size_t Tensor::rows() const {
  return rank() == 2 ? node_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
  switch (rank()) {
    case 0:
      return 1;
    case 1:
      return node_->shape[0];
    default:
      return node_->shape[1];
  }
}

double Tensor::item() const {
  if (size() != 1) {
    throw InvalidArgument("item() on tensor of shape " +
                          shape_to_string(shape()));
  }
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
  return node_->grad;
}

Tensor Tensor::clone_constant() const {
  return constant(shape(), node_->value);
}

void Graph::record(std::shared_ptr<Node> node) {
  nodes_.push_back(std::move(node));
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw InvalidArgument("backward requires a scalar loss");
  }
  Node* root = loss.node();
  if (!root->requires_grad) {
    throw InvalidArgument("loss does not depend on any parameter");
  }
  bool found = false;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->get() == root) {
      found = true;
      break;
    }
  }
  if (!found) throw InvalidArgument("loss was not recorded in this graph");

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& node = **it;
    if (node.grad.empty() || !node.backward_fn) continue;
    node.backward_fn(node);
  }
}

Graph* active_graph() { return g_active_graph; }

GraphScope::GraphScope(Graph& graph) : previous_(g_active_graph) {
  g_active_graph = &graph;
}

GraphScope::~GraphScope() { g_active_graph = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_graph) {
  g_active_graph = nullptr;
}

NoGradScope::~NoGradScope() { g_active_graph = previous_; }

Tensor make_result(Shape shape, std::vector<double> value,
                   std::vector<Tensor> inputs, BackwardFn backward) {
  auto node = new_node(std::move(shape), std::move(value));
  Graph* graph = g_active_graph;
  if (graph == nullptr) return Tensor(std::move(node));
  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  if (!needs_grad) return Tensor(std::move(node));
  node->requires_grad = true;
  node->inputs.reserve(inputs.size());
  for (auto& in : inputs) node->inputs.push_back(in.node_ptr());
  node->backward_fn = std::move(backward);
  graph->record(node);
  return Tensor(std::move(node));
}

}  // namespace simtpe
