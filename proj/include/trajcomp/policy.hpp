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
// Conditional trajectory-diffusion policy: modality-specific observation
// encoders, a learned task-embedding table with a null-task row, noise
// prediction with classifier-free dropout training, fixed action
// normalization, and single-policy sampling.

#ifndef TRAJCOMP_POLICY_HPP_
#define TRAJCOMP_POLICY_HPP_

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "trajcomp/ndnet.hpp"
#include "trajcomp/schedule.hpp"

namespace trajcomp {

// H x d actions in normalized coordinates, each entry in [-1, 1].
struct Trajectory {
  int H = 0;
  int d = 0;
  nd::Tensor a;  // shape {H, d}

  Trajectory() = default;
  Trajectory(int H_, int d_) : H(H_), d(d_), a({H_, d_}) {}
};

enum class Modality { kState, kPointSet, kGrid };

std::string modality_name(Modality m);

struct StateVec {
  std::vector<float> v;
};

// N points x (x, y, mask, valid). mask 1 marks the tool, 0 the object;
// valid 0 marks padding rows.
struct PointSet {
  static constexpr int kChannels = 4;
  int n = 0;
  nd::Tensor pts;  // shape {n, 4}

  explicit PointSet(int n_ = 0) : n(n_), pts({n_, kChannels}) {}
};

struct GridImage {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;  // c*h*w, values in [0, 1]

  GridImage() = default;
  GridImage(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0f) {}
};

struct Observation {
  std::variant<StateVec, PointSet, GridImage> data;
  int history = 1;

  Modality modality() const {
    if (std::holds_alternative<StateVec>(data)) return Modality::kState;
    if (std::holds_alternative<PointSet>(data)) return Modality::kPointSet;
    return Modality::kGrid;
  }
};

struct TaskLabel {
  int id = -1;
  bool null_task = false;

  static TaskLabel task(int id) { return TaskLabel{id, false}; }
  static TaskLabel null() { return TaskLabel{-1, true}; }
};

struct ActionBounds {
  std::vector<float> lo, hi;  // per action dimension, lo < hi
};

// Affine map between raw action units and [-1,1]^d. Raw values more than
// 10% of the range outside the bounds signal mis-scaled data and error out.
Trajectory normalize(const nd::Tensor& raw, const ActionBounds& bounds);
nd::Tensor denormalize(const Trajectory& tau, const ActionBounds& bounds);

struct PolicyConfig {
  std::string domain_id = "default";
  std::vector<Modality> modalities = {Modality::kPointSet};
  int H = 16;
  int d = 2;
  int T = 100;
  float beta_end = 0.02f;
  int num_tasks = 4;
  float cf_dropout = 0.1f;  // per-sample null-task probability in training
  std::uint64_t seed = 0;

  // Observation geometry.
  int state_dim = 7;
  int n_points = 128;  // total padded point count
  int grid_c = 2, grid_h = 12, grid_w = 12;

  // Network widths.
  int time_dim = 16;
  int task_dim = 16;
  int obs_dim = 64;
  int point_hidden = 32;
  int trunk_hidden = 128;
};

struct TrainSample {
  Observation obs;
  TaskLabel task;
  Trajectory tau0;  // normalized
};

class DiffusionPolicy {
 public:
  DiffusionPolicy(PolicyConfig config, ActionBounds bounds);

  const PolicyConfig& config() const { return config_; }
  const ActionBounds& bounds() const { return bounds_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  nd::ParamSet& params() { return params_; }
  const nd::ParamSet& params() const { return params_; }
  nd::OptState& opt() { return opt_; }

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  // Classifier-free pairing: conditional and unconditional branches share
  // one parameter set, distinguished only by the null-task row.
  bool has_null_branch() const { return classifier_free_; }

  // Fixed-dimension embedding; the point-set path is permutation invariant.
  std::vector<float> encode(const Observation& obs) const;

  // eps prediction; requires a frozen policy.
  nd::Tensor predict_noise(const Trajectory& tau, int t,
                           const Observation& obs, const TaskLabel& task) const;

  // One optimizer step on the MSE noise-prediction objective with
  // classifier-free task dropout; returns the batch loss.
  float train_step(const std::vector<TrainSample>& batch, Rng& rng);

  // Cumulative (null-substituted, total) sample counts across train_step
  // calls; exposes the realized classifier-free dropout rate.
  std::pair<std::uint64_t, std::uint64_t> dropout_counts() const {
    return {dropout_null_, dropout_total_};
  }

  // Reverse diffusion from standard Gaussian noise, clipped to [-1,1].
  Trajectory sample(const Observation& obs, const TaskLabel& task,
                    const SamplerConfig& sampler, Rng& rng) const;

  void save(const std::string& path) const;
  static std::unique_ptr<DiffusionPolicy> load(const std::string& path);

 private:
  struct ModalityNet {
    Modality modality;
    nd::Graph graph;
    int obs_in = -1, traj_in = -1, t_in = -1, task_in = -1, target_in = -1;
    int embed_node = -1, eps_node = -1, loss_node = -1;
  };

  const ModalityNet& net_for(Modality m) const;
  std::vector<nd::Tensor> pack_inputs(const ModalityNet& net,
                                      const Observation& obs,
                                      const Trajectory& tau, int t,
                                      const TaskLabel& task,
                                      const nd::Tensor* target) const;
  nd::Tensor obs_tensor(const Observation& obs) const;
  nd::Tensor task_onehot(const TaskLabel& task) const;
  void build_net(Modality m);

  PolicyConfig config_;
  ActionBounds bounds_;
  NoiseSchedule schedule_;
  nd::ParamSet params_;
  std::vector<ModalityNet> nets_;
  nd::OptState opt_;
  bool frozen_ = false;
  bool classifier_free_ = true;
  std::uint64_t dropout_null_ = 0;
  std::uint64_t dropout_total_ = 0;
  mutable nd::Workspace scratch_;
};

}  // namespace trajcomp

#endif  // TRAJCOMP_POLICY_HPP_
