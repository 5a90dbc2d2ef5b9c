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

#include "trajcomp/costs.hpp"

#include <algorithm>
#include <cmath>

namespace trajcomp {

nd::Tensor integrate_actions(const nd::Tensor& actions,
                             const std::vector<float>& start_pose) {
  check(actions.shape.size() == 2, "integrate_actions: H x d input required");
  int H = actions.shape[0], d = actions.shape[1];
  check(static_cast<int>(start_pose.size()) == d,
        "integrate_actions: start pose dimension mismatch");
  nd::Tensor poses({H + 1, d});
  for (int j = 0; j < d; ++j) poses.at(0, j) = start_pose[j];
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < d; ++j)
      poses.at(i + 1, j) = poses.at(i, j) + actions.at(i, j);
  return poses;
}

double smoothness_cost(const nd::Tensor& actions) {
  int H = actions.shape[0], d = actions.shape[1];
  check(H >= 3, "smoothness_cost: horizon must be >= 3, got " +
                    std::to_string(H));
  double acc = 0.0;
  for (int i = 1; i + 1 < H; ++i)
    for (int j = 0; j < d; ++j) {
      double s = double(actions.at(i + 1, j)) - 2.0 * actions.at(i, j) +
                 actions.at(i - 1, j);
      acc += s * s;
    }
  return acc;
}

nd::Tensor smoothness_grad(const nd::Tensor& actions) {
  int H = actions.shape[0], d = actions.shape[1];
  check(H >= 3, "smoothness_grad: horizon must be >= 3");
  nd::Tensor g({H, d});
  for (int i = 1; i + 1 < H; ++i)
    for (int j = 0; j < d; ++j) {
      float s = actions.at(i + 1, j) - 2.0f * actions.at(i, j) +
                actions.at(i - 1, j);
      g.at(i + 1, j) += 2.0f * s;
      g.at(i, j) += -4.0f * s;
      g.at(i - 1, j) += 2.0f * s;
    }
  return g;
}

namespace {

// dC/dpose for the hinge-square penalty at a single pose entry.
inline float hinge_grad(float p, float lo, float hi) {
  if (p < lo) return 2.0f * (p - lo);
  if (p > hi) return 2.0f * (p - hi);
  return 0.0f;
}

}  // namespace

double workspace_cost(const nd::Tensor& actions,
                      const std::vector<float>& pose_min,
                      const std::vector<float>& pose_max,
                      const std::vector<float>& start_pose) {
  int d = actions.shape[1];
  check(static_cast<int>(pose_min.size()) == d &&
            static_cast<int>(pose_max.size()) == d,
        "workspace_cost: bounds dimension mismatch");
  for (int j = 0; j < d; ++j)
    check(pose_min[j] < pose_max[j], "workspace_cost: pose_min >= pose_max");
  nd::Tensor poses = integrate_actions(actions, start_pose);
  double acc = 0.0;
  for (int i = 0; i < poses.shape[0]; ++i)
    for (int j = 0; j < d; ++j) {
      double under = std::min(double(poses.at(i, j)) - pose_min[j], 0.0);
      double over = std::max(double(poses.at(i, j)) - pose_max[j], 0.0);
      acc += under * under + over * over;
    }
  return acc;
}

nd::Tensor workspace_grad(const nd::Tensor& actions,
                          const std::vector<float>& pose_min,
                          const std::vector<float>& pose_max,
                          const std::vector<float>& start_pose) {
  int H = actions.shape[0], d = actions.shape[1];
  nd::Tensor poses = integrate_actions(actions, start_pose);
  // pose_{i} depends on actions 0..i-1, so the action gradient is the
  // suffix sum of pose gradients.
  nd::Tensor g({H, d});
  std::vector<float> suffix(d, 0.0f);
  for (int i = H; i >= 1; --i) {
    for (int j = 0; j < d; ++j) {
      suffix[j] += hinge_grad(poses.at(i, j), pose_min[j], pose_max[j]);
      g.at(i - 1, j) = suffix[j];
    }
  }
  return g;
}

double cost_value(const CostFunction& cost, const nd::Tensor& actions) {
  switch (cost.kind) {
    case CostKind::kSmoothness:
      return smoothness_cost(actions);
    case CostKind::kWorkspace:
      return workspace_cost(actions, cost.pose_min, cost.pose_max,
                            cost.start_pose);
  }
  fail("unreachable");
}

nd::Tensor cost_grad(const CostFunction& cost, const nd::Tensor& actions) {
  switch (cost.kind) {
    case CostKind::kSmoothness:
      return smoothness_grad(actions);
    case CostKind::kWorkspace:
      return workspace_grad(actions, cost.pose_min, cost.pose_max,
                            cost.start_pose);
  }
  fail("unreachable");
}

}  // namespace trajcomp
