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
// Synthetic multi-task, multi-domain planar manipulation benchmark: a
// point-mass tool approaches a per-task goal keypoint and engages it along a
// task-specific direction. Scenes, expert demonstrations, heterogeneous
// observation rendering, kinematic stepping, and dataset serialization are
// all deterministic given seeds.

#ifndef TRAJCOMP_BENCH_HPP_
#define TRAJCOMP_BENCH_HPP_

#include <array>
#include <string>
#include <vector>

#include "trajcomp/policy.hpp"

namespace trajcomp::bench {

enum class TaskId { kSpatula = 0, kKnife = 1, kHammer = 2, kWrench = 3 };
constexpr int kNumTasks = 4;

std::string task_name(TaskId t);
TaskId task_from_name(const std::string& s);

// Planar geometry of one task family: where the goal keypoint sits relative
// to the object, and along which direction engagement accumulates progress.
struct TaskGeometry {
  std::array<float, 2> goal_offset;
  std::array<float, 2> engage_dir;  // unit vector
  float engage_radius = 0.04f;
  float success_threshold = 0.08f;  // >= comparison
};

const TaskGeometry& task_geometry(TaskId t);

struct BenchConfig {
  float action_max = 0.05f;  // symmetric per-step displacement bound
  int episode_cap = 40;
  int n_tool_points = 64;
  int n_obj_points = 64;
  int grid_c = 2, grid_h = 12, grid_w = 12;
  int state_dim = 7;
  // Seeds below the split are training scenes; at or above are held out.
  std::uint64_t test_seed_start = 1000000;
};

ActionBounds action_bounds(const BenchConfig& cfg);

struct Scene {
  TaskId task = TaskId::kHammer;
  std::uint64_t seed = 0;
  std::array<float, 2> tool{};
  float tool_angle = 0.0f;
  std::array<float, 2> object{};
  float progress = 0.0f;
  int steps = 0;
  bool clipped = false;  // any executed action needed clipping

  // Current goal keypoint; engagement drags it along the engage direction.
  std::array<float, 2> goal_point() const;
};

struct DomainProfile {
  std::string id = "sim";
  Modality modality = Modality::kPointSet;
  float point_jitter = 0.0f;   // stddev of per-coordinate noise
  float drop_fraction = 0.0f;  // per-point invalidation probability, < 1
  float crop_window = 0.0f;    // fraction of workspace cropped away
  float label_noise = 0.0f;    // stddev of action-label corruption
  int demo_budget = 200;
};

DomainProfile sim_profile();
DomainProfile human_profile();
DomainProfile robot_profile();

struct Episode {
  TaskId task = TaskId::kHammer;
  std::string domain;
  std::uint64_t scene_seed = 0;
  std::vector<Observation> observations;  // one per step, pre-action
  nd::Tensor actions;                     // {L, 2}, raw environment units
  bool success = false;

  int length() const { return actions.shape.empty() ? 0 : actions.shape[0]; }
};

// Deterministic given (task, seed); train and test seed ranges are disjoint
// by construction of the callers.
Scene make_scene(TaskId task, std::uint64_t seed, const BenchConfig& cfg);

// Minimum-acceleration approach to the goal keypoint followed by engage
// steps; replaying the actions through step() reaches success.
Episode expert_demo(const Scene& scene, const BenchConfig& cfg);

Observation observe(const Scene& scene, const DomainProfile& profile,
                    const BenchConfig& cfg, Rng& rng);

// Kinematic step: tool advances by the (clipped) action; progress grows by
// the action's engage-direction component while the tool is inside the
// engage radius.
Scene step(const Scene& scene, const std::array<float, 2>& raw_action,
           const BenchConfig& cfg);

bool is_success(const Scene& scene);

struct Dataset {
  std::vector<Episode> episodes;
  DomainProfile profile;
  BenchConfig config;
  std::vector<TaskId> tasks;
  int n_demos_per_task = 0;
  std::uint64_t seed = 0;
};

// n_demos episodes per task, observation-rendered and label-corrupted per
// profile. Reproducible from the manifest parameters alone.
Dataset build_dataset(const DomainProfile& profile,
                      const std::vector<TaskId>& tasks, int n_demos,
                      std::uint64_t seed, const BenchConfig& cfg);

// Length-prefixed binary records plus a JSON manifest at path+".manifest.json".
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace trajcomp::bench

#endif  // TRAJCOMP_BENCH_HPP_
