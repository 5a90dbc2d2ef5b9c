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
// Noise schedules, forward corruption, and reverse-step arithmetic for
// ancestral (DDPM-style) training and deterministic-implicit (DDIM-style)
// inference.

#ifndef TRAJCOMP_SCHEDULE_HPP_
#define TRAJCOMP_SCHEDULE_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trajcomp/common.hpp"
#include "trajcomp/ndnet.hpp"

namespace trajcomp {

enum class ScheduleKind { kSquaredCosineCapped };

// Immutable after construction; freely shared across sampling runs.
struct NoiseSchedule {
  int T = 0;
  ScheduleKind kind = ScheduleKind::kSquaredCosineCapped;
  float beta_end = 0.02f;
  std::vector<float> betas;
  std::vector<float> alphas;      // 1 - beta_t
  std::vector<float> alpha_bars;  // running product of alphas

  float alpha_bar_prev(int t) const { return t > 0 ? alpha_bars[t - 1] : 1.0f; }
};

NoiseSchedule build_schedule(int T, ScheduleKind kind, float beta_end);

enum class SamplerMode { kAncestral, kDeterministicImplicit };

struct SamplerConfig {
  SamplerMode mode = SamplerMode::kDeterministicImplicit;
  int steps = 16;          // inference step count, <= schedule T
  float eta = 0.0f;        // stochasticity coefficient for implicit mode
  std::uint64_t seed = 0;
  // Extra Langevin refinement passes per noise level. Zero reproduces the
  // plain reverse chain; composed product sampling benefits from a few.
  int corrector_steps = 0;
  float corrector_scale = 1.0f;
};

// sqrt(abar_t) tau0 + sqrt(1 - abar_t) eps
nd::Tensor forward_noise(const nd::Tensor& tau0, int t, const nd::Tensor& eps,
                         const NoiseSchedule& sched);

// Ancestral update: posterior mean from the predicted noise plus sigma_t
// noise; sigma_0 = 0 so the final step is deterministic.
nd::Tensor reverse_step(const nd::Tensor& tau_t, int t,
                        const nd::Tensor& eps_hat, const NoiseSchedule& sched,
                        Rng& rng);

// Implicit update from schedule step t down to t_prev (t_prev = -1 lands on
// the clean sample). eta = 0 is deterministic.
nd::Tensor implicit_step(const nd::Tensor& tau_t, int t, int t_prev,
                         const nd::Tensor& eps_hat, const NoiseSchedule& sched,
                         float eta, Rng& rng);

// n evenly strided steps, strictly increasing, last = T-1.
std::vector<int> implicit_sample_steps(int T, int n);

// Denoising direction at (tau, t); either a single policy's eps prediction
// or a composed accumulation of term scores.
using ScoreFn = std::function<nd::Tensor(const nd::Tensor& tau, int t)>;

// Shared reverse-diffusion loop: initializes from standard Gaussian noise
// and runs the configured sampler. guard_limit > 0 aborts when the max-norm
// exceeds it (guard_name is included in the diagnostic). The output is not
// clipped; callers own the clipping contract.
nd::Tensor run_reverse(const NoiseSchedule& sched, const SamplerConfig& cfg,
                       int H, int d, const ScoreFn& score, Rng& rng,
                       float guard_limit = 0.0f,
                       const std::string& guard_name = "");

}  // namespace trajcomp

#endif  // TRAJCOMP_SCHEDULE_HPP_
