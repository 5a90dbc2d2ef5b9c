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
// Test-only double-precision re-implementation of the graph semantics,
// written independently of the library code. Central finite differences on
// this evaluator serve as the gradient oracle.

#ifndef TRAJCOMP_TESTS_REF_EVAL_HPP_
#define TRAJCOMP_TESTS_REF_EVAL_HPP_

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "trajcomp/ndnet.hpp"

namespace refeval {

using trajcomp::nd::Graph;
using trajcomp::nd::Node;
using trajcomp::nd::Op;
using trajcomp::nd::ParamSet;
using trajcomp::nd::Tensor;

using dvec = std::vector<double>;

inline dvec to_double(const Tensor& t) {
  return dvec(t.v.begin(), t.v.end());
}

// Evaluates node `target` in double precision. `param_override` supplies
// parameter values (so they can be perturbed without touching the ParamSet).
inline double eval_scalar(const Graph& g, const ParamSet& params,
                          const std::vector<Tensor>& inputs, int target,
                          const std::map<std::string, dvec>& param_override) {
  const auto& nodes = g.nodes();
  std::vector<dvec> val(nodes.size());
  size_t input_idx = 0;
  for (size_t id = 0; id <= static_cast<size_t>(target); ++id) {
    const Node& n = nodes[id];
    dvec& out = val[id];
    switch (n.op) {
      case Op::kInput:
        out = to_double(inputs[input_idx++]);
        break;
      case Op::kParam: {
        auto it = param_override.find(n.param_name);
        out = it != param_override.end() ? it->second
                                         : to_double(params.get(n.param_name));
        break;
      }
      case Op::kLinear: {
        const dvec& x = val[n.in[0]];
        const dvec& w = val[n.in[1]];
        const dvec* b = n.in.size() > 2 ? &val[n.in[2]] : nullptr;
        const auto& wshape = nodes[n.in[1]].shape;
        int out_dim = wshape[0], in_dim = wshape[1];
        int rows = static_cast<int>(x.size()) / in_dim;
        out.assign(static_cast<size_t>(rows) * out_dim, 0.0);
        for (int r = 0; r < rows; ++r)
          for (int o = 0; o < out_dim; ++o) {
            double acc = b ? (*b)[o] : 0.0;
            for (int i = 0; i < in_dim; ++i)
              acc += w[static_cast<size_t>(o) * in_dim + i] *
                     x[static_cast<size_t>(r) * in_dim + i];
            out[static_cast<size_t>(r) * out_dim + o] = acc;
          }
        break;
      }
      case Op::kRelu: {
        const dvec& x = val[n.in[0]];
        out.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0 ? x[i] : 0.0;
        break;
      }
      case Op::kTanh: {
        const dvec& x = val[n.in[0]];
        out.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
        break;
      }
      case Op::kConcat: {
        for (int src : n.in)
          out.insert(out.end(), val[src].begin(), val[src].end());
        break;
      }
      case Op::kMeanRows: {
        const dvec& x = val[n.in[0]];
        int rows = nodes[n.in[0]].shape[0], cols = nodes[n.in[0]].shape[1];
        out.assign(cols, 0.0);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c)
            out[c] += x[static_cast<size_t>(r) * cols + c] / rows;
        break;
      }
      case Op::kMaxRows: {
        const dvec& x = val[n.in[0]];
        int rows = nodes[n.in[0]].shape[0], cols = nodes[n.in[0]].shape[1];
        out.assign(cols, 0.0);
        for (int c = 0; c < cols; ++c) {
          double best = x[c];
          for (int r = 1; r < rows; ++r)
            best = std::max(best, x[static_cast<size_t>(r) * cols + c]);
          out[c] = best;
        }
        break;
      }
      case Op::kTimeEmbed: {
        double u = val[n.in[0]][0];
        int half = n.embed_dim / 2;
        out.assign(n.embed_dim, 0.0);
        for (int k = 0; k < half; ++k) {
          // matches the library's float frequency ladder
          double freq = std::pow(10000.0f, -static_cast<float>(k) / half);
          double arg = u * freq * 2.0 * M_PI;
          out[2 * k] = std::sin(arg);
          out[2 * k + 1] = std::cos(arg);
        }
        break;
      }
      case Op::kMse: {
        const dvec& p = val[n.in[0]];
        const dvec& t = val[n.in[1]];
        double acc = 0.0;
        for (size_t i = 0; i < p.size(); ++i) {
          double d = p[i] - t[i];
          acc += d * d;
        }
        out = {acc / static_cast<double>(p.size())};
        break;
      }
    }
  }
  return val[target][0];
}

// Central finite differences of the scalar node w.r.t. one parameter tensor.
inline dvec fd_param_grad(const Graph& g, const ParamSet& params,
                          const std::vector<Tensor>& inputs, int target,
                          const std::string& name, double h = 1e-4) {
  dvec base = to_double(params.get(name));
  dvec grad(base.size());
  std::map<std::string, dvec> ov;
  ov[name] = base;
  for (size_t i = 0; i < base.size(); ++i) {
    ov[name][i] = base[i] + h;
    double fp = eval_scalar(g, params, inputs, target, ov);
    ov[name][i] = base[i] - h;
    double fm = eval_scalar(g, params, inputs, target, ov);
    ov[name][i] = base[i];
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// max(|a-b|) / max(max|b|, floor)
inline double rel_error(const std::vector<float>& a, const dvec& b,
                        double floor = 1e-6) {
  double num = 0.0, den = floor;
  for (size_t i = 0; i < b.size(); ++i) {
    num = std::max(num, std::abs(double(a[i]) - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / den;
}

}  // namespace refeval

#endif  // TRAJCOMP_TESTS_REF_EVAL_HPP_
