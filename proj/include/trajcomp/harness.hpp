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
// Experiment harness: training loops over demonstration datasets,
// receding-horizon rollout, held-out evaluation with success/smoothness/
// workspace metrics, and the comparison protocols exported as CSV, text,
// and SVG reports.

#ifndef TRAJCOMP_HARNESS_HPP_
#define TRAJCOMP_HARNESS_HPP_

#include <functional>
#include <string>
#include <vector>

#include "trajcomp/bench.hpp"
#include "trajcomp/compose.hpp"

namespace trajcomp::harness {

struct RunConfig {
  // Training dataset plus optional extra datasets mixed in (data pooling).
  std::string dataset;
  std::vector<std::string> extra_datasets;
  PolicyConfig policy;
  int train_steps = 10000;
  int batch = 64;
  float learning_rate = 1e-4f;
  int log_windows = 20;

  SamplerConfig sampler;  // 16 implicit steps by default
  float alpha = 1.5f;
  float gamma_c = 0.1f;
  float gamma_d = 0.1f;

  int rollout_k = 4;  // executed prefix length, <= policy.H
  // Soft workspace box used by the workspace metric and workspace terms.
  std::vector<float> workspace_min = {0.1f, 0.1f};
  std::vector<float> workspace_max = {0.9f, 0.9f};
  int eval_scenes = 50;
  int eval_repeats = 3;
  std::uint64_t eval_seed_start = 1000000;
  std::vector<bench::TaskId> eval_tasks;  // empty means all four

  std::string out_dir = "out";
  bench::BenchConfig bench;
};

std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);
std::uint64_t config_fingerprint(const RunConfig& cfg);

// Errors on k > H, eval seeds inside the training range, or bad counts.
void validate_run_config(const RunConfig& cfg);

struct TrainResult {
  std::string checkpoint_path;
  std::string loss_curve_path;
  std::vector<float> window_losses;  // mean loss per logged window
  float final_loss = 0.0f;
};

// Builds fixed-horizon training windows: one sample per (episode, start
// offset), observation taken at the window start, actions normalized;
// episodes shorter than H are padded with zero actions.
std::vector<TrainSample> make_training_samples(const bench::Dataset& ds,
                                               int H,
                                               const ActionBounds& bounds);

// Trains a policy on cfg.dataset (+extras), writes checkpoint and loss
// curve under cfg.out_dir. Deterministic given cfg.policy.seed. Dataset vs
// policy modality mismatches error before any training step.
TrainResult train(const RunConfig& cfg);

// A planner maps the current (ground-truth scene, rendered observation) to
// a normalized H-step trajectory. Learned planners ignore the scene; it is
// exposed for oracle planners.
using PlanFn =
    std::function<Trajectory(const bench::Scene&, const Observation&, Rng&)>;

PlanFn policy_planner(const DiffusionPolicy& policy, const TaskLabel& task,
                      const SamplerConfig& sampler);

// Classifier-free guided planner over a single policy.
PlanFn guided_planner(const DiffusionPolicy& policy, const TaskLabel& task,
                      float alpha, const SamplerConfig& sampler);

// Planner over a composition spec rebuilt per replan with the fresh
// observation (and, for pose-anchored cost terms, the current scene)
// injected into every term.
PlanFn composed_planner(std::function<CompositionSpec(
                            const bench::Scene&, const Observation&)>
                            build_spec);

// Ground-truth planner replaying the scripted expert from the current scene.
PlanFn expert_planner(int H, const bench::BenchConfig& cfg);

struct RolloutResult {
  bench::Episode episode;  // executed observations and raw actions
  bool success = false;
  int replans = 0;
  bench::Scene final_scene;
};

// Samples an H-step plan, executes its first k denormalized actions, then
// re-observes and replans; stops at success or the episode cap. k = H is
// open loop, k = 1 replans every step.
RolloutResult rollout(const PlanFn& plan, int H, const ActionBounds& bounds,
                      const bench::Scene& scene0, int k,
                      const bench::DomainProfile& obs_profile,
                      const bench::BenchConfig& cfg, Rng& rng);

// Mean squared second difference of executed actions:
// costs.smoothness_cost / (L - 2). Zero for L < 3.
double smoothness_metric(const nd::Tensor& actions);

// Mean hinge-square violation of integrated poses against the given box.
double workspace_metric(const nd::Tensor& actions,
                        const std::vector<float>& start_pose,
                        const std::vector<float>& pose_min,
                        const std::vector<float>& pose_max);

struct TaskEval {
  bench::TaskId task;
  int episodes = 0;
  double success_rate = 0.0;
  double success_se = 0.0;  // binomial standard error
  double smoothness = 0.0;  // mean over episodes
  double workspace = 0.0;
};

struct EpisodeRecord {
  bench::TaskId task;
  int scene = 0;
  int repeat = 0;
  bool success = false;
  double smoothness = 0.0;
  double workspace = 0.0;
};

struct EvalReport {
  std::vector<TaskEval> per_task;
  TaskEval overall;  // task field meaningless here
  std::vector<EpisodeRecord> episodes;
  std::uint64_t fingerprint = 0;
};

std::string eval_report_to_json(const EvalReport& r);

struct EvalOptions {
  std::vector<bench::TaskId> tasks = {bench::TaskId::kSpatula,
                                      bench::TaskId::kKnife,
                                      bench::TaskId::kHammer,
                                      bench::TaskId::kWrench};
  int n_scenes = 50;
  int repeats = 3;
  std::uint64_t seed_start = 1000000;
  int k = 4;
  bench::DomainProfile obs_profile;  // rendering used during evaluation
  bench::BenchConfig bench;
  std::vector<float> workspace_min = {0.1f, 0.1f};
  std::vector<float> workspace_max = {0.9f, 0.9f};
  std::uint64_t fingerprint = 0;
};

// Held-out evaluation over n_scenes x repeats episodes per task. Scene
// seeds start at seed_start and must lie in the test range; per-episode rng
// streams are derived from (seed_start, task, scene, repeat).
EvalReport evaluate(const PlanFn& plan, int H, const ActionBounds& bounds,
                    const EvalOptions& opt);

// One row of a protocol comparison table.
struct TableRow {
  std::string variant;
  std::string task;  // "all" for aggregates
  double success = 0.0;
  double se = 0.0;
  double smoothness = 0.0;
  double workspace = 0.0;
  int episodes = 0;
};

struct ProtocolReport {
  std::string name;
  std::vector<TableRow> rows;
  std::uint64_t fingerprint = 0;
  std::vector<std::string> artifacts;  // paths written by write_report
};

// CSV plus aligned-text table under out_dir; appends written paths to
// report.artifacts.
void write_report(ProtocolReport& report, const std::string& out_dir);

// Success-vs-x polyline plot.
void write_curve_svg(const std::string& path, const std::string& x_label,
                     const std::vector<double>& xs,
                     const std::vector<double>& ys);

// Top-down plot of an executed episode (tool path, object, goal).
void write_episode_svg(const std::string& path, const bench::Scene& scene0,
                       const bench::Episode& episode,
                       const bench::BenchConfig& cfg);

// Single-policy rows {normal, +smoothness, +workspace} on one task.
ProtocolReport protocol_behavior_table(const RunConfig& cfg,
                                       const std::string& checkpoint,
                                       bench::TaskId task);

// Multitask rows {unconditioned, conditioned, composition alpha}.
ProtocolReport protocol_task_figure(const RunConfig& cfg,
                                    const std::string& mt_checkpoint);

// Rows {human alone, human + sim at gamma_d}, evaluated in the clean domain.
ProtocolReport protocol_domain_figure(const RunConfig& cfg,
                                      const std::string& human_checkpoint,
                                      const std::string& sim_checkpoint);

// Table rows {single-task, MT unconditioned, MT conditioned, MT composition
// at alpha 0.1 and 2}; emits both across-task and across-seed spread.
ProtocolReport protocol_multitask_table(
    const RunConfig& cfg, const std::vector<std::string>& single_checkpoints,
    const std::string& mt_checkpoint);

// Data-pooling baseline vs domain composition, gamma_d sweep
// {0, 0.05, 0.1, 0.2, 0.5}, and open-loop vs receding-horizon rollout.
ProtocolReport protocol_ablation(const RunConfig& cfg,
                                 const std::string& human_checkpoint,
                                 const std::string& sim_checkpoint,
                                 const std::string& pooled_checkpoint);

}  // namespace trajcomp::harness

#endif  // TRAJCOMP_HARNESS_HPP_
