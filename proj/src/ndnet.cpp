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

#include "trajcomp/ndnet.hpp"

#include <algorithm>
#include <cmath>

namespace trajcomp::nd {

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor& ParamSet::add(const std::string& name, std::vector<int> shape) {
  check(!index_.count(name), "ParamSet: duplicate tensor '" + name + "'");
  Tensor t(shape);
  int fan_in = shape.size() == 2 ? shape[1] : shape[0];
  float bound = 1.0f / std::sqrt(static_cast<float>(std::max(fan_in, 1)));
  std::uniform_real_distribution<float> u(-bound, bound);
  for (float& x : t.v) x = u(rng_);
  names_.push_back(name);
  return index_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamSet::add_zeros(const std::string& name, std::vector<int> shape) {
  check(!index_.count(name), "ParamSet: duplicate tensor '" + name + "'");
  names_.push_back(name);
  return index_.emplace(name, Tensor(std::move(shape))).first->second;
}

Tensor& ParamSet::get(const std::string& name) {
  auto it = index_.find(name);
  check(it != index_.end(), "ParamSet: unknown tensor '" + name + "'");
  return it->second;
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  check(it != index_.end(), "ParamSet: unknown tensor '" + name + "'");
  return it->second;
}

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::input(std::vector<int> shape) {
  Node n;
  n.op = Op::kInput;
  n.shape = std::move(shape);
  int id = push(std::move(n));
  inputs_.push_back(id);
  return id;
}

int Graph::param(ParamSet& params, const std::string& name) {
  Node n;
  n.op = Op::kParam;
  n.param_name = name;
  n.shape = params.get(name).shape;
  return push(std::move(n));
}

int Graph::linear(ParamSet& params, int x, const std::string& name,
                  int out_dim, bool bias) {
  // Copy: pushing the param nodes below may reallocate the node vector.
  std::vector<int> xs = shape(x);
  int in_dim = xs.size() == 2 ? xs[1] : xs[0];
  std::string wname = name + ".w";
  std::string bname = name + ".b";
  if (!params.has(wname)) params.add(wname, {out_dim, in_dim});
  int w = param(params, wname);
  Node n;
  n.op = Op::kLinear;
  n.in = {x, w};
  if (bias) {
    if (!params.has(bname)) params.add_zeros(bname, {out_dim});
    n.in.push_back(param(params, bname));
  }
  n.shape = xs.size() == 2 ? std::vector<int>{xs[0], out_dim}
                           : std::vector<int>{out_dim};
  return push(std::move(n));
}

int Graph::linear_shared(int x, int w_node, int out_dim) {
  const auto& ws = shape(w_node);
  const auto& xs = shape(x);
  check(ws.size() == 2 && ws[0] == out_dim, "linear_shared: weight shape");
  check((xs.size() == 1 ? xs[0] : xs[1]) == ws[1],
        "linear_shared: input dimension mismatch");
  Node n;
  n.op = Op::kLinear;
  n.in = {x, w_node};
  n.shape = xs.size() == 2 ? std::vector<int>{xs[0], out_dim}
                           : std::vector<int>{out_dim};
  return push(std::move(n));
}

int Graph::relu(int x) {
  Node n;
  n.op = Op::kRelu;
  n.in = {x};
  n.shape = shape(x);
  return push(std::move(n));
}

int Graph::tanh(int x) {
  Node n;
  n.op = Op::kTanh;
  n.in = {x};
  n.shape = shape(x);
  return push(std::move(n));
}

int Graph::concat(const std::vector<int>& xs) {
  int total = 0;
  for (int x : xs) {
    check(shape(x).size() == 1, "concat: rank-1 inputs only, node " +
                                    std::to_string(x) + " has shape " +
                                    shape_str(shape(x)));
    total += shape(x)[0];
  }
  Node n;
  n.op = Op::kConcat;
  n.in = xs;
  n.shape = {total};
  return push(std::move(n));
}

int Graph::mean_rows(int x) {
  check(shape(x).size() == 2, "mean_rows: matrix input required");
  Node n;
  n.op = Op::kMeanRows;
  n.in = {x};
  n.shape = {shape(x)[1]};
  return push(std::move(n));
}

int Graph::max_rows(int x) {
  check(shape(x).size() == 2, "max_rows: matrix input required");
  Node n;
  n.op = Op::kMaxRows;
  n.in = {x};
  n.shape = {shape(x)[1]};
  return push(std::move(n));
}

int Graph::time_embed(int t, int dim) {
  check(shape(t) == std::vector<int>{1}, "time_embed: scalar input required");
  check(dim % 2 == 0, "time_embed: even dimension required");
  Node n;
  n.op = Op::kTimeEmbed;
  n.in = {t};
  n.embed_dim = dim;
  n.shape = {dim};
  return push(std::move(n));
}

int Graph::mse(int pred, int target) {
  check(shape(pred) == shape(target), "mse: shape mismatch " +
                                          shape_str(shape(pred)) + " vs " +
                                          shape_str(shape(target)));
  Node n;
  n.op = Op::kMse;
  n.in = {pred, target};
  n.shape = {1};
  return push(std::move(n));
}

namespace {

// Sinusoidal features for u in [0,1]: pairs (sin, cos) over a geometric
// frequency ladder.
void time_embed_forward(float u, int dim, Tensor& out) {
  int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    float freq = std::pow(10000.0f, -static_cast<float>(k) / half);
    float arg = u * freq * 2.0f * static_cast<float>(M_PI);
    out.v[2 * k] = std::sin(arg);
    out.v[2 * k + 1] = std::cos(arg);
  }
}

void linear_forward(const Tensor& x, const Tensor& w, const Tensor* b,
                    Tensor& y) {
  int out_dim = w.shape[0];
  int in_dim = w.shape[1];
  int n_rows = x.shape.size() == 2 ? x.shape[0] : 1;
  for (int r = 0; r < n_rows; ++r) {
    const float* xr = x.v.data() + static_cast<size_t>(r) * in_dim;
    float* yr = y.v.data() + static_cast<size_t>(r) * out_dim;
    for (int o = 0; o < out_dim; ++o) {
      const float* wr = w.v.data() + static_cast<size_t>(o) * in_dim;
      double acc = b ? b->v[o] : 0.0;
      for (int i = 0; i < in_dim; ++i) acc += double(wr[i]) * double(xr[i]);
      yr[o] = static_cast<float>(acc);
    }
  }
}

}  // namespace

void forward(const Graph& graph, const ParamSet& params,
             const std::vector<Tensor>& inputs, Workspace& ws) {
  const auto& nodes = graph.nodes();
  check(inputs.size() == graph.inputs().size(),
        "forward: expected " + std::to_string(graph.inputs().size()) +
            " inputs, got " + std::to_string(inputs.size()));
  ws.val.resize(nodes.size());
  size_t input_idx = 0;
  for (size_t id = 0; id < nodes.size(); ++id) {
    const Node& n = nodes[id];
    Tensor& out = ws.val[id];
    if (out.shape != n.shape) out = Tensor(n.shape);
    switch (n.op) {
      case Op::kInput: {
        const Tensor& src = inputs[input_idx++];
        check(src.shape == n.shape,
              "forward: input node " + std::to_string(id) + " expects shape " +
                  shape_str(n.shape) + ", got " + shape_str(src.shape));
        out = src;
        break;
      }
      case Op::kParam:
        out = params.get(n.param_name);
        break;
      case Op::kLinear: {
        const Tensor& x = ws.val[n.in[0]];
        const Tensor& w = ws.val[n.in[1]];
        const Tensor* b = n.in.size() > 2 ? &ws.val[n.in[2]] : nullptr;
        linear_forward(x, w, b, out);
        break;
      }
      case Op::kRelu: {
        const Tensor& x = ws.val[n.in[0]];
        for (long i = 0; i < x.numel(); ++i)
          out.v[i] = x.v[i] > 0.0f ? x.v[i] : 0.0f;
        break;
      }
      case Op::kTanh: {
        const Tensor& x = ws.val[n.in[0]];
        for (long i = 0; i < x.numel(); ++i) out.v[i] = std::tanh(x.v[i]);
        break;
      }
      case Op::kConcat: {
        size_t off = 0;
        for (int src : n.in) {
          const Tensor& x = ws.val[src];
          std::copy(x.v.begin(), x.v.end(), out.v.begin() + off);
          off += x.v.size();
        }
        break;
      }
      case Op::kMeanRows: {
        const Tensor& x = ws.val[n.in[0]];
        int rows = x.shape[0], cols = x.shape[1];
        for (int c = 0; c < cols; ++c) {
          double acc = 0.0;
          for (int r = 0; r < rows; ++r) acc += x.at(r, c);
          out.v[c] = static_cast<float>(acc / rows);
        }
        break;
      }
      case Op::kMaxRows: {
        const Tensor& x = ws.val[n.in[0]];
        int rows = x.shape[0], cols = x.shape[1];
        for (int c = 0; c < cols; ++c) {
          float best = x.at(0, c);
          for (int r = 1; r < rows; ++r) best = std::max(best, x.at(r, c));
          out.v[c] = best;
        }
        break;
      }
      case Op::kTimeEmbed:
        time_embed_forward(ws.val[n.in[0]].v[0], n.embed_dim, out);
        break;
      case Op::kMse: {
        const Tensor& p = ws.val[n.in[0]];
        const Tensor& t = ws.val[n.in[1]];
        double acc = 0.0;
        for (long i = 0; i < p.numel(); ++i) {
          double d = double(p.v[i]) - double(t.v[i]);
          acc += d * d;
        }
        out.v[0] = static_cast<float>(acc / p.numel());
        break;
      }
    }
  }
}

void backward(const Graph& graph, const ParamSet& params, int loss_node,
              Workspace& ws, std::map<std::string, Tensor>& grads) {
  const auto& nodes = graph.nodes();
  check(loss_node >= 0 && loss_node < static_cast<int>(nodes.size()),
        "backward: loss node out of range");
  check(Tensor::numel_of(nodes[loss_node].shape) == 1,
        "backward: loss node " + std::to_string(loss_node) +
            " is not scalar, shape " + shape_str(nodes[loss_node].shape));
  ws.grad.resize(nodes.size());
  for (size_t id = 0; id < nodes.size(); ++id) {
    if (ws.grad[id].shape != nodes[id].shape)
      ws.grad[id] = Tensor(nodes[id].shape);
    else
      ws.grad[id].zero();
  }
  ws.grad[loss_node].v[0] = 1.0f;

  for (int id = loss_node; id >= 0; --id) {
    const Node& n = nodes[id];
    const Tensor& g = ws.grad[id];
    bool any = false;
    for (float x : g.v)
      if (x != 0.0f) {
        any = true;
        break;
      }
    if (!any) continue;
    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kParam: {
        auto it = grads.find(n.param_name);
        if (it == grads.end())
          it = grads.emplace(n.param_name, Tensor(n.shape)).first;
        for (long i = 0; i < g.numel(); ++i) it->second.v[i] += g.v[i];
        break;
      }
      case Op::kLinear: {
        const Tensor& x = ws.val[n.in[0]];
        const Tensor& w = ws.val[n.in[1]];
        Tensor& gx = ws.grad[n.in[0]];
        Tensor& gw = ws.grad[n.in[1]];
        int out_dim = w.shape[0], in_dim = w.shape[1];
        int n_rows = x.shape.size() == 2 ? x.shape[0] : 1;
        for (int r = 0; r < n_rows; ++r) {
          const float* xr = x.v.data() + static_cast<size_t>(r) * in_dim;
          const float* gr = g.v.data() + static_cast<size_t>(r) * out_dim;
          float* gxr = gx.v.data() + static_cast<size_t>(r) * in_dim;
          for (int o = 0; o < out_dim; ++o) {
            float go = gr[o];
            if (go == 0.0f) continue;
            const float* wr = w.v.data() + static_cast<size_t>(o) * in_dim;
            float* gwr = gw.v.data() + static_cast<size_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) {
              gxr[i] += go * wr[i];
              gwr[i] += go * xr[i];
            }
          }
        }
        if (n.in.size() > 2) {
          Tensor& gb = ws.grad[n.in[2]];
          for (int r = 0; r < n_rows; ++r)
            for (int o = 0; o < out_dim; ++o)
              gb.v[o] += g.v[static_cast<size_t>(r) * out_dim + o];
        }
        break;
      }
      case Op::kRelu: {
        const Tensor& x = ws.val[n.in[0]];
        Tensor& gx = ws.grad[n.in[0]];
        for (long i = 0; i < x.numel(); ++i)
          if (x.v[i] > 0.0f) gx.v[i] += g.v[i];
        break;
      }
      case Op::kTanh: {
        const Tensor& y = ws.val[id];
        Tensor& gx = ws.grad[n.in[0]];
        for (long i = 0; i < y.numel(); ++i)
          gx.v[i] += g.v[i] * (1.0f - y.v[i] * y.v[i]);
        break;
      }
      case Op::kConcat: {
        size_t off = 0;
        for (int src : n.in) {
          Tensor& gx = ws.grad[src];
          for (long i = 0; i < gx.numel(); ++i) gx.v[i] += g.v[off + i];
          off += gx.v.size();
        }
        break;
      }
      case Op::kMeanRows: {
        Tensor& gx = ws.grad[n.in[0]];
        int rows = gx.shape[0], cols = gx.shape[1];
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) gx.at(r, c) += g.v[c] / rows;
        break;
      }
      case Op::kMaxRows: {
        const Tensor& x = ws.val[n.in[0]];
        Tensor& gx = ws.grad[n.in[0]];
        int rows = x.shape[0], cols = x.shape[1];
        for (int c = 0; c < cols; ++c) {
          int arg = 0;
          float best = x.at(0, c);
          for (int r = 1; r < rows; ++r)
            if (x.at(r, c) > best) {
              best = x.at(r, c);
              arg = r;
            }
          gx.at(arg, c) += g.v[c];
        }
        break;
      }
      case Op::kTimeEmbed: {
        const float u = ws.val[n.in[0]].v[0];
        Tensor& gx = ws.grad[n.in[0]];
        int half = n.embed_dim / 2;
        double acc = 0.0;
        for (int k = 0; k < half; ++k) {
          float freq = std::pow(10000.0f, -static_cast<float>(k) / half);
          float w = freq * 2.0f * static_cast<float>(M_PI);
          float arg = u * w;
          acc += double(g.v[2 * k]) * std::cos(arg) * w;
          acc -= double(g.v[2 * k + 1]) * std::sin(arg) * w;
        }
        gx.v[0] += static_cast<float>(acc);
        break;
      }
      case Op::kMse: {
        const Tensor& p = ws.val[n.in[0]];
        const Tensor& t = ws.val[n.in[1]];
        Tensor& gp = ws.grad[n.in[0]];
        Tensor& gt = ws.grad[n.in[1]];
        float scale = 2.0f * g.v[0] / p.numel();
        for (long i = 0; i < p.numel(); ++i) {
          float d = p.v[i] - t.v[i];
          gp.v[i] += scale * d;
          gt.v[i] -= scale * d;
        }
        break;
      }
    }
  }
  (void)params;
}

void opt_step(ParamSet& params, const std::map<std::string, Tensor>& grads,
              OptState& state) {
  state.step += 1;
  float bc1 = 1.0f - std::pow(state.beta1, static_cast<float>(state.step));
  float bc2 = 1.0f - std::pow(state.beta2, static_cast<float>(state.step));
  for (const auto& [name, g] : grads) {
    check(all_finite(g.v), "opt_step: non-finite gradient for '" + name +
                               "' at step " + std::to_string(state.step));
    Tensor& p = params.get(name);
    check(p.shape == g.shape, "opt_step: gradient shape mismatch for '" +
                                  name + "': " + shape_str(g.shape) + " vs " +
                                  shape_str(p.shape));
    auto mit = state.m.find(name);
    if (mit == state.m.end()) {
      state.m.emplace(name, Tensor(p.shape));
      state.v.emplace(name, Tensor(p.shape));
      mit = state.m.find(name);
    }
    Tensor& m = mit->second;
    Tensor& v = state.v.at(name);
    for (long i = 0; i < p.numel(); ++i) {
      m.v[i] = state.beta1 * m.v[i] + (1.0f - state.beta1) * g.v[i];
      v.v[i] = state.beta2 * v.v[i] + (1.0f - state.beta2) * g.v[i] * g.v[i];
      float mhat = m.v[i] / bc1;
      float vhat = v.v[i] / bc2;
      p.v[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace trajcomp::nd
