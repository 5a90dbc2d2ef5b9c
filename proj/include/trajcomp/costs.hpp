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
// Analytic behavior costs on action trajectories with closed-form gradients:
// a second-difference smoothness penalty on the actions, and a hinge-square
// workspace penalty on the integrated pose trajectory.

#ifndef TRAJCOMP_COSTS_HPP_
#define TRAJCOMP_COSTS_HPP_

#include <vector>

#include "trajcomp/ndnet.hpp"

namespace trajcomp {

enum class CostKind { kSmoothness, kWorkspace };

struct CostFunction {
  CostKind kind = CostKind::kSmoothness;
  float weight = 0.1f;  // gamma_c
  // Workspace parameters; poses live in environment units.
  std::vector<float> pose_min, pose_max;
  std::vector<float> start_pose;
};

// pose_0 = start; pose_{i+1} = pose_i + a_i. Actions are per-step
// displacements in environment units. Output has H+1 rows.
nd::Tensor integrate_actions(const nd::Tensor& actions,
                             const std::vector<float>& start_pose);

// sum_i || a_{i+1} - 2 a_i + a_{i-1} ||^2 over interior steps; requires H>=3.
double smoothness_cost(const nd::Tensor& actions);
nd::Tensor smoothness_grad(const nd::Tensor& actions);

// Hinge-square violation of [pose_min, pose_max] evaluated on the integrated
// pose trajectory; the gradient is back-propagated through the integration
// (transposed cumulative sum).
double workspace_cost(const nd::Tensor& actions,
                      const std::vector<float>& pose_min,
                      const std::vector<float>& pose_max,
                      const std::vector<float>& start_pose);
nd::Tensor workspace_grad(const nd::Tensor& actions,
                          const std::vector<float>& pose_min,
                          const std::vector<float>& pose_max,
                          const std::vector<float>& start_pose);

double cost_value(const CostFunction& cost, const nd::Tensor& actions);
nd::Tensor cost_grad(const CostFunction& cost, const nd::Tensor& actions);

}  // namespace trajcomp

#endif  // TRAJCOMP_COSTS_HPP_
