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

#include "trajcomp/schedule.hpp"

#include <cmath>

namespace trajcomp {

namespace {

double cosine_alpha_bar(double s) {
  double x = std::cos((s + 0.008) / 1.008 * M_PI / 2.0);
  return x * x;
}

constexpr double kBetaCap = 0.999;

}  // namespace

NoiseSchedule build_schedule(int T, ScheduleKind kind, float beta_end) {
  check(T >= 2, "build_schedule: T must be >= 2, got " + std::to_string(T));
  check(beta_end > 0.0f && beta_end < 1.0f,
        "build_schedule: beta_end must lie in (0,1)");
  NoiseSchedule s;
  s.T = T;
  s.kind = kind;
  s.beta_end = beta_end;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double abar = 1.0;
  for (int t = 0; t < T; ++t) {
    double b = 1.0 - cosine_alpha_bar(double(t + 1) / T) /
                         cosine_alpha_bar(double(t) / T);
    b = std::min(b, kBetaCap);
    s.betas[t] = static_cast<float>(b);
    s.alphas[t] = static_cast<float>(1.0 - b);
    abar *= (1.0 - b);
    s.alpha_bars[t] = static_cast<float>(abar);
  }
  return s;
}

nd::Tensor forward_noise(const nd::Tensor& tau0, int t, const nd::Tensor& eps,
                         const NoiseSchedule& sched) {
  check(t >= 0 && t < sched.T, "forward_noise: step out of range");
  check(eps.shape == tau0.shape, "forward_noise: noise shape " +
                                     nd::shape_str(eps.shape) +
                                     " does not match trajectory shape " +
                                     nd::shape_str(tau0.shape));
  float sa = std::sqrt(sched.alpha_bars[t]);
  float sb = std::sqrt(1.0f - sched.alpha_bars[t]);
  nd::Tensor out(tau0.shape);
  for (long i = 0; i < tau0.numel(); ++i)
    out.v[i] = sa * tau0.v[i] + sb * eps.v[i];
  return out;
}

nd::Tensor reverse_step(const nd::Tensor& tau_t, int t,
                        const nd::Tensor& eps_hat, const NoiseSchedule& sched,
                        Rng& rng) {
  check(t >= 0 && t < sched.T, "reverse_step: step out of range");
  check(eps_hat.shape == tau_t.shape, "reverse_step: shape mismatch");
  float abar = sched.alpha_bars[t];
  float alpha = sched.alphas[t];
  float beta = sched.betas[t];
  float eps_coef = beta / std::sqrt(1.0f - abar);
  float inv_sqrt_alpha = 1.0f / std::sqrt(alpha);
  float sigma = 0.0f;
  if (t > 0) {
    float abar_prev = sched.alpha_bar_prev(t);
    sigma = std::sqrt((1.0f - abar_prev) / (1.0f - abar) * beta);
  }
  nd::Tensor out(tau_t.shape);
  for (long i = 0; i < tau_t.numel(); ++i) {
    float mean = inv_sqrt_alpha * (tau_t.v[i] - eps_coef * eps_hat.v[i]);
    out.v[i] = sigma > 0.0f ? mean + sigma * normal_sample(rng) : mean;
  }
  return out;
}

nd::Tensor implicit_step(const nd::Tensor& tau_t, int t, int t_prev,
                         const nd::Tensor& eps_hat, const NoiseSchedule& sched,
                         float eta, Rng& rng) {
  check(t >= 0 && t < sched.T, "implicit_step: step out of range");
  check(t_prev < t, "implicit_step: t_prev must precede t");
  check(eps_hat.shape == tau_t.shape, "implicit_step: shape mismatch");
  float abar = sched.alpha_bars[t];
  float abar_prev = t_prev >= 0 ? sched.alpha_bars[t_prev] : 1.0f;
  float sigma = 0.0f;
  if (eta > 0.0f && t_prev >= 0) {
    sigma = eta * std::sqrt((1.0f - abar_prev) / (1.0f - abar) *
                            (1.0f - abar / abar_prev));
  }
  float x0_coef = 1.0f / std::sqrt(abar);
  float eps_coef = std::sqrt(1.0f - abar);
  float dir_coef = std::sqrt(std::max(0.0f, 1.0f - abar_prev - sigma * sigma));
  float sa_prev = std::sqrt(abar_prev);
  nd::Tensor out(tau_t.shape);
  for (long i = 0; i < tau_t.numel(); ++i) {
    float x0 = x0_coef * (tau_t.v[i] - eps_coef * eps_hat.v[i]);
    float val = sa_prev * x0 + dir_coef * eps_hat.v[i];
    out.v[i] = sigma > 0.0f ? val + sigma * normal_sample(rng) : val;
  }
  return out;
}

std::vector<int> implicit_sample_steps(int T, int n) {
  check(n >= 1 && n <= T, "implicit_sample_steps: need 1 <= n <= T, got n=" +
                              std::to_string(n) + ", T=" + std::to_string(T));
  std::vector<int> steps(n);
  for (int i = 0; i < n; ++i)
    steps[i] = T - 1 - static_cast<int>((long(n - 1 - i) * T) / n);
  return steps;
}


nd::Tensor run_reverse(const NoiseSchedule& sched, const SamplerConfig& cfg,
                       int H, int d, const ScoreFn& score, Rng& rng,
                       float guard_limit, const std::string& guard_name) {
  nd::Tensor tau({H, d});
  for (float& x : tau.v) x = normal_sample(rng);

  auto guard = [&](const nd::Tensor& x, int t) {
    if (guard_limit <= 0.0f) return;
    float m = 0.0f;
    for (float v : x.v) m = std::max(m, std::abs(v));
    if (m > guard_limit)
      fail("run_reverse: divergence at step " + std::to_string(t) +
           " (max-norm " + std::to_string(m) + ")" +
           (guard_name.empty() ? "" : ", dominating term: " + guard_name));
  };

  auto correct = [&](nd::Tensor& x, int t) {
    for (int k = 0; k < cfg.corrector_steps; ++k) {
      nd::Tensor eps = score(x, t);
      float s1ma = std::sqrt(1.0f - sched.alpha_bars[t]);
      float eta = cfg.corrector_scale * (1.0f - sched.alpha_bars[t]);
      float step_coef = 0.5f * eta / s1ma;
      float noise_coef = std::sqrt(eta);
      for (long i = 0; i < x.numel(); ++i)
        x.v[i] += -step_coef * eps.v[i] + noise_coef * normal_sample(rng);
    }
  };

  if (cfg.mode == SamplerMode::kAncestral) {
    for (int t = sched.T - 1; t >= 0; --t) {
      correct(tau, t);
      nd::Tensor eps = score(tau, t);
      tau = reverse_step(tau, t, eps, sched, rng);
      guard(tau, t);
    }
  } else {
    std::vector<int> steps = implicit_sample_steps(sched.T, cfg.steps);
    for (int i = static_cast<int>(steps.size()) - 1; i >= 0; --i) {
      int t = steps[i];
      int t_prev = i > 0 ? steps[i - 1] : -1;
      correct(tau, t);
      nd::Tensor eps = score(tau, t);
      tau = implicit_step(tau, t, t_prev, eps, sched, cfg.eta, rng);
      guard(tau, t);
    }
  }
  return tau;
}

}  // namespace trajcomp
