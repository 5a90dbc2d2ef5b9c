// Copyright 2026 The trajcomp Authors
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
//
// Minimal dense-network core: named parameter tensors, a static compute
// graph with reverse-accumulation gradients, and an Adam optimizer. Graphs
// are built once and re-executed per sample; all state lives in a Workspace
// so a frozen graph can be evaluated concurrently from multiple workspaces.

#ifndef TRAJCOMP_NDNET_HPP_
#define TRAJCOMP_NDNET_HPP_

#include <map>
#include <string>
#include <vector>

#include "trajcomp/common.hpp"

namespace trajcomp::nd {

// Row-major tensor, rank 1 or 2. Shape {n} is a vector, {r, c} a matrix.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(numel_of(shape)), 0.0f);
  }
  static long numel_of(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
  }
  long numel() const { return static_cast<long>(v.size()); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  float& at(int r, int c) { return v[static_cast<size_t>(r) * cols() + c]; }
  float at(int r, int c) const { return v[static_cast<size_t>(r) * cols() + c]; }
  void zero() { std::fill(v.begin(), v.end(), 0.0f); }
};

std::string shape_str(const std::vector<int>& s);

// Named parameter tensors. Construction from the same seed and the same
// sequence of add() calls is element-wise reproducible.
class ParamSet {
 public:
  explicit ParamSet(std::uint64_t seed) : seed_(seed), rng_(seed) {}

  // Fan-in scaled uniform init; bias tensors (rank 1) start at zero.
  Tensor& add(const std::string& name, std::vector<int> shape);
  Tensor& add_zeros(const std::string& name, std::vector<int> shape);

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<std::string>& names() const { return names_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  Rng rng_;
  std::vector<std::string> names_;
  std::map<std::string, Tensor> index_;
};

enum class Op {
  kInput,      // placeholder
  kParam,      // named parameter tensor
  kLinear,     // x[n] or x[N,n], W[m,n], b[m] -> [m] or [N,m]
  kRelu,       // elementwise rectifier
  kTanh,       // elementwise smooth nonlinearity
  kConcat,     // rank-1 inputs concatenated
  kMeanRows,   // [N,m] -> [m]
  kMaxRows,    // [N,m] -> [m], ties broken by first row
  kTimeEmbed,  // scalar [1] -> sinusoidal features [k]
  kMse,        // (pred, target) -> scalar [1], mean over elements
};

struct Node {
  Op op = Op::kInput;
  std::vector<int> in;      // upstream node ids
  std::vector<int> shape;   // static output shape
  std::string param_name;   // kParam only
  int embed_dim = 0;        // kTimeEmbed only
};

// Static acyclic graph; nodes are appended in topological order by
// construction. Output shapes are computed at build time.
class Graph {
 public:
  int input(std::vector<int> shape);
  int param(ParamSet& params, const std::string& name);
  // Fused y = W x + b. Declares (or reuses) params "<name>.w" [out,in] and
  // "<name>.b" [out]. A matrix input applies the same transform per row.
  int linear(ParamSet& params, int x, const std::string& name, int out_dim,
             bool bias = true);
  // Bias-free linear against an existing kParam node (shared tables).
  int linear_shared(int x, int w_node, int out_dim);
  int relu(int x);
  int tanh(int x);
  int concat(const std::vector<int>& xs);
  int mean_rows(int x);
  int max_rows(int x);
  int time_embed(int t, int dim);
  int mse(int pred, int target);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<int>& inputs() const { return inputs_; }
  const std::vector<int>& shape(int id) const { return nodes_.at(id).shape; }

 private:
  int push(Node n);
  std::vector<Node> nodes_;
  std::vector<int> inputs_;
};

// Per-execution state: forward values and adjoints per node.
struct Workspace {
  std::vector<Tensor> val;
  std::vector<Tensor> grad;
};

// Evaluates every node. `inputs` pair with graph.inputs() in order.
// Returns the workspace value of any node via ws.val[id].
void forward(const Graph& graph, const ParamSet& params,
             const std::vector<Tensor>& inputs, Workspace& ws);

// Reverse accumulation from a scalar loss node. Parameter gradients are
// accumulated into `grads` keyed by parameter name (created on demand).
void backward(const Graph& graph, const ParamSet& params, int loss_node,
              Workspace& ws, std::map<std::string, Tensor>& grads);

// Adaptive-moment optimizer state; moment shapes mirror the ParamSet.
struct OptState {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  long step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// One Adam step over every gradient entry. NaN/Inf gradients abort with a
// diagnostic naming the tensor.
void opt_step(ParamSet& params, const std::map<std::string, Tensor>& grads,
              OptState& state);

}  // namespace trajcomp::nd

#endif  // TRAJCOMP_NDNET_HPP_
