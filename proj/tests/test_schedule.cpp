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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "trajcomp/schedule.hpp"

using namespace trajcomp;

namespace {

// Independent double-precision rebuild of the capped squared-cosine table.
std::vector<double> ref_betas(int T) {
  auto abar = [](double s) {
    double c = std::cos((s + 0.008) / 1.008 * M_PI / 2.0);
    return c * c;
  };
  std::vector<double> betas(T);
  for (int t = 0; t < T; ++t) {
    double b = 1.0 - abar(double(t + 1) / T) / abar(double(t) / T);
    betas[t] = std::min(b, 0.999);
  }
  return betas;
}

nd::Tensor randn(int H, int d, Rng& rng) {
  nd::Tensor t({H, d});
  for (float& x : t.v) x = normal_sample(rng);
  return t;
}

}  // namespace

TEST_CASE("build_schedule: T=100 tables match the formula and invariants") {
  NoiseSchedule s = build_schedule(100, ScheduleKind::kSquaredCosineCapped,
                                   0.02f);
  REQUIRE(s.betas.size() == 100);
  REQUIRE(s.alpha_bars.size() == 100);
  auto ref = ref_betas(100);
  for (int t = 0; t < 100; ++t) {
    CHECK(s.betas[t] == doctest::Approx(ref[t]).epsilon(1e-6));
    CHECK(s.betas[t] > 0.0f);
    CHECK(s.betas[t] < 1.0f);
    CHECK(s.alphas[t] == doctest::Approx(1.0f - s.betas[t]));
    if (t > 0) CHECK(s.alpha_bars[t] < s.alpha_bars[t - 1]);
    CHECK(std::isfinite(s.alpha_bars[t]));
  }
  CHECK(s.alpha_bars[0] > 0.99f);
  CHECK(s.alpha_bars[0] <= 1.0f);
  CHECK(s.alpha_bars[99] < 0.05f);
  CHECK(s.beta_end == 0.02f);
}

TEST_CASE("build_schedule: T=2 is the minimal valid schedule") {
  NoiseSchedule s = build_schedule(2, ScheduleKind::kSquaredCosineCapped,
                                   0.02f);
  CHECK(s.T == 2);
  CHECK(s.alpha_bars[1] < s.alpha_bars[0]);
}

TEST_CASE("build_schedule: invalid arguments rejected") {
  CHECK_THROWS_AS(build_schedule(1, ScheduleKind::kSquaredCosineCapped, 0.02f),
                  Error);
  CHECK_THROWS_AS(
      build_schedule(100, ScheduleKind::kSquaredCosineCapped, 0.0f), Error);
  CHECK_THROWS_AS(
      build_schedule(100, ScheduleKind::kSquaredCosineCapped, 1.0f), Error);
}

TEST_CASE("SNR is strictly decreasing in t") {
  NoiseSchedule s = build_schedule(100, ScheduleKind::kSquaredCosineCapped,
                                   0.02f);
  double prev = std::numeric_limits<double>::infinity();
  for (int t = 0; t < s.T; ++t) {
    double snr = double(s.alpha_bars[t]) / (1.0 - double(s.alpha_bars[t]));
    CHECK(snr < prev);
    prev = snr;
  }
}

TEST_CASE("forward_noise: boundary behaviors") {
  NoiseSchedule s = build_schedule(100, ScheduleKind::kSquaredCosineCapped,
                                   0.02f);
  Rng rng(1);
  nd::Tensor tau0 = randn(4, 2, rng);
  nd::Tensor eps = randn(4, 2, rng);
  nd::Tensor zero({4, 2});

  SUBCASE("t=0 is a near identity") {
    nd::Tensor out = forward_noise(tau0, 0, eps, s);
    double diff = 0.0, norm = 0.0;
    for (long i = 0; i < tau0.numel(); ++i) {
      diff += (out.v[i] - tau0.v[i]) * double(out.v[i] - tau0.v[i]);
      norm += double(tau0.v[i]) * tau0.v[i];
    }
    CHECK(std::sqrt(diff) < 0.05 * std::sqrt(norm) + 0.05);
  }
  SUBCASE("zero noise scales by sqrt(abar)") {
    int t = 40;
    nd::Tensor out = forward_noise(tau0, t, zero, s);
    float sa = std::sqrt(s.alpha_bars[t]);
    for (long i = 0; i < tau0.numel(); ++i)
      CHECK(out.v[i] == sa * tau0.v[i]);
  }
  SUBCASE("zero signal scales noise by sqrt(1-abar)") {
    int t = 40;
    nd::Tensor out = forward_noise(zero, t, eps, s);
    float sb = std::sqrt(1.0f - s.alpha_bars[t]);
    for (long i = 0; i < eps.numel(); ++i) CHECK(out.v[i] == sb * eps.v[i]);
  }
  SUBCASE("shape mismatch rejected") {
    nd::Tensor bad({3, 2});
    CHECK_THROWS_AS(forward_noise(tau0, 0, bad, s), Error);
  }
}

TEST_CASE("reverse_step: zero prediction at t=0 is the pure mean scaling") {
  NoiseSchedule s = build_schedule(100, ScheduleKind::kSquaredCosineCapped,
                                   0.02f);
  Rng rng(2);
  nd::Tensor tau = randn(4, 2, rng);
  nd::Tensor zero({4, 2});
  nd::Tensor out = reverse_step(tau, 0, zero, s, rng);
  float inv = 1.0f / std::sqrt(s.alphas[0]);
  for (long i = 0; i < tau.numel(); ++i)
    CHECK(out.v[i] == doctest::Approx(inv * tau.v[i]));
}

TEST_CASE("reverse_step: t=0 is deterministic") {
  NoiseSchedule s = build_schedule(100, ScheduleKind::kSquaredCosineCapped,
                                   0.02f);
  Rng r1(3), r2(999);
  nd::Tensor tau = randn(4, 2, r1);
  nd::Tensor eps = randn(4, 2, r1);
  nd::Tensor a = reverse_step(tau, 0, eps, s, r1);
  nd::Tensor b = reverse_step(tau, 0, eps, s, r2);
  CHECK(a.v == b.v);
}

TEST_CASE("reverse_step: matches the hand-computed ancestral update") {
  NoiseSchedule s = build_schedule(2, ScheduleKind::kSquaredCosineCapped,
                                   0.02f);
  Rng rng(4);
  nd::Tensor tau = randn(2, 1, rng);
  nd::Tensor eps = randn(2, 1, rng);
  // Reproduce the injected noise with an identically seeded rng.
  Rng r_step(5), r_ref(5);
  nd::Tensor out = reverse_step(tau, 1, eps, s, r_step);
  double beta = s.betas[1], abar = s.alpha_bars[1], alpha = s.alphas[1];
  double abar_prev = s.alpha_bars[0];
  double sigma = std::sqrt((1.0 - abar_prev) / (1.0 - abar) * beta);
  for (long i = 0; i < tau.numel(); ++i) {
    double mean = (tau.v[i] - beta / std::sqrt(1.0 - abar) * eps.v[i]) /
                  std::sqrt(alpha);
    double want =
        float(mean) + float(sigma) * normal_sample(r_ref);
    CHECK(out.v[i] == doctest::Approx(want).epsilon(1e-5));
  }
}

TEST_CASE("implicit_step: single-jump oracle reconstruction") {
  // Exact in real arithmetic; float32 leaves ~1/sqrt(abar) amplified
  // rounding error at late steps, so the tolerance is 1e-4 relative.
  NoiseSchedule s = build_schedule(100, ScheduleKind::kSquaredCosineCapped,
                                   0.02f);
  Rng rng(6);
  for (int t : {1, 17, 50, 99}) {
    nd::Tensor tau0 = randn(4, 2, rng);
    nd::Tensor eps = randn(4, 2, rng);
    nd::Tensor noisy = forward_noise(tau0, t, eps, s);
    nd::Tensor back = implicit_step(noisy, t, -1, eps, s, 0.0f, rng);
    for (long i = 0; i < tau0.numel(); ++i)
      CHECK(back.v[i] == doctest::Approx(tau0.v[i]).epsilon(1e-4));
  }
}

TEST_CASE("implicit_sample_steps: stride structure") {
  SUBCASE("n=T covers every step") {
    auto steps = implicit_sample_steps(100, 100);
    REQUIRE(steps.size() == 100);
    for (int i = 0; i < 100; ++i) CHECK(steps[i] == i);
  }
  SUBCASE("n=1 is the last step only") {
    auto steps = implicit_sample_steps(100, 1);
    CHECK(steps == std::vector<int>{99});
  }
  SUBCASE("n=16 strictly increasing, even strides, ends at 99") {
    auto steps = implicit_sample_steps(100, 16);
    REQUIRE(steps.size() == 16);
    CHECK(steps.back() == 99);
    for (size_t i = 1; i < steps.size(); ++i) {
      CHECK(steps[i] > steps[i - 1]);
      int stride = steps[i] - steps[i - 1];
      CHECK(stride >= 6);
      CHECK(stride <= 7);
    }
  }
  SUBCASE("n > T rejected") {
    CHECK_THROWS_AS(implicit_sample_steps(10, 11), Error);
  }
}

TEST_CASE("run_reverse: deterministic-implicit mode is bit-reproducible") {
  NoiseSchedule s = build_schedule(100, ScheduleKind::kSquaredCosineCapped,
                                   0.02f);
  SamplerConfig cfg;
  cfg.mode = SamplerMode::kDeterministicImplicit;
  cfg.steps = 16;
  ScoreFn score = [](const nd::Tensor& tau, int) {
    nd::Tensor eps(tau.shape);
    for (long i = 0; i < tau.numel(); ++i) eps.v[i] = 0.3f * tau.v[i];
    return eps;
  };
  Rng r1(7), r2(7);
  nd::Tensor a = run_reverse(s, cfg, 4, 2, score, r1);
  nd::Tensor b = run_reverse(s, cfg, 4, 2, score, r2);
  CHECK(a.v == b.v);
}

TEST_CASE("run_reverse: divergence guard names the dominating term") {
  NoiseSchedule s = build_schedule(100, ScheduleKind::kSquaredCosineCapped,
                                   0.02f);
  SamplerConfig cfg;
  cfg.mode = SamplerMode::kAncestral;
  ScoreFn score = [](const nd::Tensor& tau, int) {
    nd::Tensor eps(tau.shape);
    for (float& x : eps.v) x = -1000.0f;
    return eps;
  };
  Rng rng(8);
  CHECK_THROWS_WITH_AS(run_reverse(s, cfg, 2, 1, score, rng, 10.0f, "runaway"),
                       doctest::Contains("runaway"), Error);
}
