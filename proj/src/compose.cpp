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

#include "trajcomp/compose.hpp"

#include <cmath>

namespace trajcomp {

nd::Tensor task_score(const DiffusionPolicy& policy, const Trajectory& tau,
                      int t, const Observation& obs, const TaskLabel& task,
                      float alpha) {
  check(policy.has_null_branch(),
        "task_score: policy '" + policy.config().domain_id +
            "' was not trained with classifier-free dropout (no null-task "
            "branch)");
  check(alpha >= 0.0f, "task_score: alpha must be >= 0");
  nd::Tensor cond = policy.predict_noise(tau, t, obs, task);
  if (alpha == 1.0f) return cond;
  nd::Tensor uncond = policy.predict_noise(tau, t, obs, TaskLabel::null());
  if (alpha == 0.0f) return uncond;
  nd::Tensor out(cond.shape);
  for (long i = 0; i < cond.numel(); ++i)
    out.v[i] = uncond.v[i] + alpha * (cond.v[i] - uncond.v[i]);
  return out;
}

nd::Tensor behavior_score(const CostFunction& cost, const Trajectory& tau,
                          const ActionBounds& bounds, float gamma_c) {
  check(gamma_c >= 0.0f, "behavior_score: gamma_c must be >= 0");
  nd::Tensor out({tau.H, tau.d});
  if (gamma_c == 0.0f) return out;
  // Gradient in environment units, mapped into normalized action space
  // through the exact affine Jacobian of the normalization.
  nd::Tensor raw = denormalize(tau, bounds);
  nd::Tensor g = cost_grad(cost, raw);
  for (int i = 0; i < tau.H; ++i)
    for (int j = 0; j < tau.d; ++j)
      out.at(i, j) =
          gamma_c * g.at(i, j) * 0.5f * (bounds.hi[j] - bounds.lo[j]);
  return out;
}

nd::Tensor domain_score(const DiffusionPolicy& policy, const Trajectory& tau,
                        int t, const Observation& obs, const TaskLabel& task,
                        float gamma_d) {
  check(gamma_d >= 0.0f, "domain_score: gamma_d must be >= 0");
  if (gamma_d == 0.0f) return nd::Tensor({tau.H, tau.d});
  nd::Tensor eps = policy.predict_noise(tau, t, obs, task);
  for (float& x : eps.v) x *= gamma_d;
  return eps;
}

namespace {

const DiffusionPolicy* term_policy(const CompositionTerm& term) {
  if (const auto* tg = std::get_if<TaskGuidanceTerm>(&term)) return tg->policy;
  if (const auto* dp = std::get_if<DomainPolicyTerm>(&term)) return dp->policy;
  return nullptr;
}

std::pair<int, int> term_dims(const CompositionTerm& term) {
  if (const auto* p = term_policy(term))
    return {p->config().H, p->config().d};
  if (const auto* a = std::get_if<AnalyticTerm>(&term)) return {a->H, a->d};
  return {0, 0};
}

}  // namespace

std::pair<int, int> spec_dims(const CompositionSpec& spec) {
  auto dims = term_dims(spec.base);
  check(dims.first > 0 && dims.second > 0,
        "spec_dims: base term does not define a trajectory space");
  return dims;
}

void validate_spec(const CompositionSpec& spec) {
  auto [H, d] = spec_dims(spec);
  auto check_term = [&](const CompositionTerm& term, size_t index) {
    if (const auto* p = term_policy(term)) {
      check(p->frozen(), "composition term " + std::to_string(index) +
                             ": policy '" + p->config().domain_id +
                             "' is not frozen");
      check(p->config().H == H && p->config().d == d,
            "composition term " + std::to_string(index) +
                ": trajectory space mismatch (H,d)");
      check(p->bounds().lo == spec.bounds.lo &&
                p->bounds().hi == spec.bounds.hi,
            "composition term " + std::to_string(index) +
                ": action bounds differ from the composition bounds");
      if (const auto* base_p = term_policy(spec.base))
        check(p->schedule().T == base_p->schedule().T,
              "composition term " + std::to_string(index) +
                  ": schedule length mismatch");
    }
    if (const auto* tg = std::get_if<TaskGuidanceTerm>(&term))
      check(tg->alpha >= 0.0f, "composition term " + std::to_string(index) +
                                   ": alpha must be >= 0");
    if (const auto* b = std::get_if<BehaviorTerm>(&term))
      check(b->gamma_c >= 0.0f, "composition term " + std::to_string(index) +
                                    ": gamma_c must be >= 0");
    if (const auto* dp = std::get_if<DomainPolicyTerm>(&term))
      check(dp->gamma_d >= 0.0f, "composition term " + std::to_string(index) +
                                     ": gamma_d must be >= 0");
  };
  check_term(spec.base, 0);
  for (size_t i = 0; i < spec.terms.size(); ++i)
    check_term(spec.terms[i], i + 1);
}

namespace {

nd::Tensor eval_term(const CompositionSpec& spec, const CompositionTerm& term,
                     const nd::Tensor& tau, int t, size_t index) {
  auto [H, d] = spec_dims(spec);
  Trajectory wrapped(H, d);
  wrapped.a = tau;
  try {
    if (const auto* tg = std::get_if<TaskGuidanceTerm>(&term))
      return task_score(*tg->policy, wrapped, t, tg->obs, tg->task, tg->alpha);
    if (const auto* b = std::get_if<BehaviorTerm>(&term))
      return behavior_score(b->cost, wrapped, spec.bounds, b->gamma_c);
    if (const auto* dp = std::get_if<DomainPolicyTerm>(&term))
      return domain_score(*dp->policy, wrapped, t, dp->obs, dp->task,
                          dp->gamma_d);
    const auto& a = std::get<AnalyticTerm>(term);
    nd::Tensor eps = a.eps(tau, t);
    if (a.weight != 1.0f)
      for (float& x : eps.v) x *= a.weight;
    return eps;
  } catch (const Error& e) {
    fail("composition term " + std::to_string(index) + ": " + e.what());
  }
}

bool is_task_term(const CompositionTerm& term) {
  return std::holds_alternative<TaskGuidanceTerm>(term);
}

}  // namespace

nd::Tensor composed_step_direction(const CompositionSpec& spec,
                                   const nd::Tensor& tau, int t) {
  auto [H, d] = spec_dims(spec);
  check(tau.shape == std::vector<int>({H, d}),
        "composed_step_direction: trajectory shape mismatch");

  nd::Tensor dir({H, d});
  nd::Tensor task_acc({H, d});
  int task_count = 0;
  auto accumulate = [&](const CompositionTerm& term, size_t index) {
    nd::Tensor s = eval_term(spec, term, tau, t, index);
    nd::Tensor& target = is_task_term(term) ? task_acc : dir;
    if (is_task_term(term)) ++task_count;
    for (long i = 0; i < s.numel(); ++i) target.v[i] += s.v[i];
  };
  accumulate(spec.base, 0);
  for (size_t i = 0; i < spec.terms.size(); ++i)
    accumulate(spec.terms[i], i + 1);

  float task_scale =
      (spec.normalize_task_terms && task_count > 1)
          ? 1.0f / static_cast<float>(task_count)
          : 1.0f;
  for (long i = 0; i < dir.numel(); ++i)
    dir.v[i] += task_scale * task_acc.v[i];
  check(all_finite(dir.v), "composed_step_direction: non-finite direction");
  return dir;
}

nd::Tensor composed_sample(const CompositionSpec& spec, Rng& rng) {
  validate_spec(spec);
  auto [H, d] = spec_dims(spec);
  const NoiseSchedule* sched = nullptr;
  if (const auto* p = term_policy(spec.base)) sched = &p->schedule();
  NoiseSchedule local;
  if (!sched) {
    // Analytic base terms carry no schedule; synthesize the default one.
    local = build_schedule(100, ScheduleKind::kSquaredCosineCapped, 0.02f);
    sched = &local;
  }
  ScoreFn score = [&](const nd::Tensor& tau, int t) {
    return composed_step_direction(spec, tau, t);
  };
  return run_reverse(*sched, spec.sampler, H, d, score, rng,
                     spec.divergence_guard, "composed direction");
}

}  // namespace trajcomp
