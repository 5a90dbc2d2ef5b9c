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
// The composition engine: task-level guidance, behavior-level cost
// gradients, and domain-level score summation, plus the composed sampling
// loop over the shared reverse-diffusion machinery.

#ifndef TRAJCOMP_COMPOSE_HPP_
#define TRAJCOMP_COMPOSE_HPP_

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "trajcomp/costs.hpp"
#include "trajcomp/policy.hpp"

namespace trajcomp {

// Classifier-free guidance term: eps(tau|t) + alpha (eps(tau|t,T) - eps(tau|t)).
struct TaskGuidanceTerm {
  const DiffusionPolicy* policy = nullptr;
  Observation obs;
  TaskLabel task;
  float alpha = 1.5f;
};

// Analytic cost gradient mapped from environment units into normalized
// action space through the normalization Jacobian, scaled by gamma_c.
struct BehaviorTerm {
  CostFunction cost;
  float gamma_c = 0.1f;
};

// Another policy's (conditional) score scaled by gamma_D.
struct DomainPolicyTerm {
  const DiffusionPolicy* policy = nullptr;
  Observation obs;
  TaskLabel task;
  float gamma_d = 0.1f;
};

// Closed-form score source for oracle tests and analytic baselines.
struct AnalyticTerm {
  std::function<nd::Tensor(const nd::Tensor&, int)> eps;
  float weight = 1.0f;
  int H = 0, d = 0;
};

using CompositionTerm =
    std::variant<TaskGuidanceTerm, BehaviorTerm, DomainPolicyTerm,
                 AnalyticTerm>;

struct CompositionSpec {
  // Anchor score; a TaskGuidanceTerm or DomainPolicyTerm (or AnalyticTerm in
  // oracle setups). An empty `terms` list degenerates to single-policy
  // sampling.
  CompositionTerm base;
  std::vector<CompositionTerm> terms;
  SamplerConfig sampler;
  // When several task-guidance terms are present, the literal accumulation
  // counts the unconditional score once per task; normalized mode divides
  // the summed task contributions by the task count.
  bool normalize_task_terms = false;
  // ActionBounds shared by every term; required by behavior terms.
  ActionBounds bounds;
  float divergence_guard = 10.0f;
};

nd::Tensor task_score(const DiffusionPolicy& policy, const Trajectory& tau,
                      int t, const Observation& obs, const TaskLabel& task,
                      float alpha);

nd::Tensor behavior_score(const CostFunction& cost, const Trajectory& tau,
                          const ActionBounds& bounds, float gamma_c);

nd::Tensor domain_score(const DiffusionPolicy& policy, const Trajectory& tau,
                        int t, const Observation& obs, const TaskLabel& task,
                        float gamma_d);

// Validates term compatibility (H, d, bounds, schedule T across policies).
void validate_spec(const CompositionSpec& spec);

// Base score plus the weighted sum of all term scores.
nd::Tensor composed_step_direction(const CompositionSpec& spec,
                                   const nd::Tensor& tau, int t);

// Initializes from standard Gaussian noise and runs the configured sampler
// over composed_step_direction. Output is not clipped; callers sampling
// real policies clip to [-1,1] themselves (policy::sample does).
nd::Tensor composed_sample(const CompositionSpec& spec, Rng& rng);

// (H, d) of the composition's base term.
std::pair<int, int> spec_dims(const CompositionSpec& spec);

}  // namespace trajcomp

#endif  // TRAJCOMP_COMPOSE_HPP_
