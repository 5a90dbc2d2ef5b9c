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

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "trajcomp/policy.hpp"

using namespace trajcomp;

namespace {

ActionBounds unit_bounds(int d) {
  ActionBounds b;
  b.lo.assign(d, -1.0f);
  b.hi.assign(d, 1.0f);
  return b;
}

// Small state-modality policy; fast to train and sample.
PolicyConfig tiny_state_config() {
  PolicyConfig c;
  c.domain_id = "tiny";
  c.modalities = {Modality::kState};
  c.H = 4;
  c.d = 2;
  c.T = 10;
  c.num_tasks = 2;
  c.state_dim = 3;
  c.time_dim = 8;
  c.task_dim = 4;
  c.obs_dim = 8;
  c.trunk_hidden = 32;
  return c;
}

Observation state_obs(std::vector<float> v) {
  Observation o;
  o.data = StateVec{std::move(v)};
  return o;
}

PointSet random_points(int n, Rng& rng) {
  PointSet ps(n);
  for (int i = 0; i < n; ++i) {
    ps.pts.at(i, 0) = uniform_sample(rng, -1.0f, 1.0f);
    ps.pts.at(i, 1) = uniform_sample(rng, -1.0f, 1.0f);
    ps.pts.at(i, 2) = i % 2 ? 1.0f : 0.0f;
    ps.pts.at(i, 3) = 1.0f;
  }
  return ps;
}

}  // namespace

TEST_CASE("normalize: bounds map to the corners and the midpoint to zero") {
  ActionBounds b;
  b.lo = {0.0f, -2.0f};
  b.hi = {1.0f, 2.0f};
  nd::Tensor raw({3, 2});
  raw.at(0, 0) = 0.0f;
  raw.at(0, 1) = -2.0f;
  raw.at(1, 0) = 1.0f;
  raw.at(1, 1) = 2.0f;
  raw.at(2, 0) = 0.5f;
  raw.at(2, 1) = 0.0f;
  Trajectory tau = normalize(raw, b);
  CHECK(tau.a.at(0, 0) == -1.0f);
  CHECK(tau.a.at(0, 1) == -1.0f);
  CHECK(tau.a.at(1, 0) == 1.0f);
  CHECK(tau.a.at(1, 1) == 1.0f);
  CHECK(tau.a.at(2, 0) == doctest::Approx(0.0f));
  CHECK(tau.a.at(2, 1) == doctest::Approx(0.0f));
}

TEST_CASE("normalize/denormalize: roundtrip within 1e-6") {
  ActionBounds b;
  b.lo = {-0.05f, 0.2f};
  b.hi = {0.05f, 0.8f};
  Rng rng(1);
  nd::Tensor raw({8, 2});
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 2; ++j)
      raw.at(i, j) = uniform_sample(rng, b.lo[j], b.hi[j]);
  nd::Tensor back = denormalize(normalize(raw, b), b);
  for (long i = 0; i < raw.numel(); ++i)
    CHECK(back.v[i] == doctest::Approx(raw.v[i]).epsilon(1e-6));
}

TEST_CASE("normalize: rejects values more than 10% of range out of bounds") {
  ActionBounds b;
  b.lo = {0.0f};
  b.hi = {1.0f};
  nd::Tensor slight({1, 1});
  slight.at(0, 0) = 1.05f;  // inside the 10% slack
  CHECK_NOTHROW(normalize(slight, b));
  nd::Tensor far({1, 1});
  far.at(0, 0) = 1.2f;
  CHECK_THROWS_WITH_AS(normalize(far, b), doctest::Contains("10%"), Error);
  nd::Tensor bad({1, 1});
  bad.at(0, 0) = std::nanf("");
  CHECK_THROWS_AS(normalize(bad, b), Error);
  nd::Tensor wrong({1, 2});
  CHECK_THROWS_AS(normalize(wrong, b), Error);
}

TEST_CASE("encode: point-set embedding is permutation invariant") {
  PolicyConfig c;
  c.modalities = {Modality::kPointSet};
  c.n_points = 8;
  c.point_hidden = 8;
  c.obs_dim = 8;
  c.trunk_hidden = 16;
  c.H = 4;
  DiffusionPolicy policy(c, unit_bounds(c.d));
  Rng rng(2);
  PointSet ps = random_points(8, rng);
  PointSet shuffled(8);
  int perm[8] = {5, 2, 7, 0, 3, 6, 1, 4};
  for (int i = 0; i < 8; ++i)
    for (int k = 0; k < PointSet::kChannels; ++k)
      shuffled.pts.at(i, k) = ps.pts.at(perm[i], k);
  Observation a{ps, 1}, b{shuffled, 1};
  CHECK(policy.encode(a) == policy.encode(b));
  CHECK(policy.encode(a).size() == size_t(c.obs_dim));
}

TEST_CASE("encode: distinct point sets produce distinct embeddings") {
  PolicyConfig c;
  c.modalities = {Modality::kPointSet};
  c.n_points = 8;
  c.point_hidden = 8;
  c.obs_dim = 8;
  c.trunk_hidden = 16;
  c.H = 4;
  DiffusionPolicy policy(c, unit_bounds(c.d));
  Rng rng(3);
  PointSet ps = random_points(8, rng);
  PointSet moved = ps;
  moved.pts.at(0, 0) += 0.5f;
  CHECK(policy.encode({ps, 1}) != policy.encode({moved, 1}));
}

TEST_CASE("encode: all-zero grid embeds deterministically") {
  PolicyConfig c;
  c.modalities = {Modality::kGrid};
  c.grid_c = 2;
  c.grid_h = 4;
  c.grid_w = 4;
  c.obs_dim = 8;
  c.trunk_hidden = 16;
  c.H = 4;
  DiffusionPolicy policy(c, unit_bounds(c.d));
  Observation o;
  o.data = GridImage(2, 4, 4);
  auto e1 = policy.encode(o);
  auto e2 = policy.encode(o);
  CHECK(e1 == e2);
  CHECK(all_finite(e1));
}

TEST_CASE("encode: unsupported modality names both sides") {
  PolicyConfig c;
  c.modalities = {Modality::kPointSet};
  c.n_points = 8;
  DiffusionPolicy policy(c, unit_bounds(c.d));
  Observation o = state_obs({1.0f, 2.0f});
  CHECK_THROWS_WITH_AS(policy.encode(o), doctest::Contains("state"), Error);
  try {
    policy.encode(o);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("pointset") != std::string::npos);
  }
}

TEST_CASE("predict_noise: frozen-only, deterministic, correct shape") {
  DiffusionPolicy policy(tiny_state_config(), unit_bounds(2));
  Observation o = state_obs({0.1f, -0.2f, 0.3f});
  Trajectory tau(4, 2);
  Rng rng(4);
  for (float& x : tau.a.v) x = uniform_sample(rng, -1.0f, 1.0f);

  CHECK_THROWS_WITH_AS(policy.predict_noise(tau, 0, o, TaskLabel::task(0)),
                       doctest::Contains("not frozen"), Error);
  policy.freeze();
  for (int t : {0, 5, 9}) {
    nd::Tensor a = policy.predict_noise(tau, t, o, TaskLabel::task(0));
    nd::Tensor b = policy.predict_noise(tau, t, o, TaskLabel::task(0));
    CHECK(a.shape == std::vector<int>{4, 2});
    CHECK(a.v == b.v);
    CHECK(all_finite(a.v));
  }
  CHECK_THROWS_AS(policy.predict_noise(tau, 10, o, TaskLabel::task(0)), Error);
  CHECK_THROWS_AS(policy.predict_noise(tau, 0, o, TaskLabel::task(5)), Error);
  // Null and conditional branches differ on an untrained table.
  nd::Tensor cond = policy.predict_noise(tau, 5, o, TaskLabel::task(1));
  nd::Tensor uncond = policy.predict_noise(tau, 5, o, TaskLabel::null());
  CHECK(cond.v != uncond.v);
}

TEST_CASE("train_step: frozen policy rejected, empty batch rejected") {
  DiffusionPolicy policy(tiny_state_config(), unit_bounds(2));
  Rng rng(5);
  CHECK_THROWS_AS(policy.train_step({}, rng), Error);
  policy.freeze();
  TrainSample s;
  s.obs = state_obs({0.0f, 0.0f, 0.0f});
  s.task = TaskLabel::task(0);
  s.tau0 = Trajectory(4, 2);
  CHECK_THROWS_WITH_AS(policy.train_step({s}, rng),
                       doctest::Contains("frozen"), Error);
}

TEST_CASE("train_step: realized task dropout rate near the configured 0.1") {
  PolicyConfig c = tiny_state_config();
  c.trunk_hidden = 8;
  c.obs_dim = 4;
  DiffusionPolicy policy(c, unit_bounds(2));
  Rng rng(6);
  std::vector<TrainSample> batch;
  for (int i = 0; i < 50; ++i) {
    TrainSample s;
    s.obs = state_obs({0.1f * i, 0.0f, -0.1f * i});
    s.task = TaskLabel::task(i % 2);
    s.tau0 = Trajectory(4, 2);
    for (float& x : s.tau0.a.v) x = uniform_sample(rng, -0.5f, 0.5f);
    batch.push_back(std::move(s));
  }
  for (int step = 0; step < 240; ++step) policy.train_step(batch, rng);
  auto [nulls, total] = policy.dropout_counts();
  REQUIRE(total >= 10000);
  double rate = double(nulls) / double(total);
  CHECK(rate > 0.08);
  CHECK(rate < 0.12);
}

TEST_CASE("train_step: overfits a single trajectory below 0.05") {
  PolicyConfig c = tiny_state_config();
  c.cf_dropout = 0.0f;
  c.num_tasks = 1;
  DiffusionPolicy policy(c, unit_bounds(2));
  policy.opt().lr = 3e-3f;
  Rng rng(7);
  TrainSample s;
  s.obs = state_obs({0.3f, -0.5f, 0.8f});
  s.task = TaskLabel::task(0);
  s.tau0 = Trajectory(4, 2);
  for (float& x : s.tau0.a.v) x = uniform_sample(rng, -0.8f, 0.8f);
  std::vector<TrainSample> batch(8, s);
  float recent = 1e9f;
  for (int step = 0; step < 5000; ++step) {
    float loss = policy.train_step(batch, rng);
    // average of the last few steps; a single draw is noisy
    recent = 0.95f * recent + 0.05f * loss;
    if (step > 100 && recent < 0.05f) break;
  }
  CHECK(recent < 0.05f);
}

TEST_CASE("checkpoint: save/load roundtrip preserves predictions exactly") {
  DiffusionPolicy policy(tiny_state_config(), unit_bounds(2));
  Rng rng(8);
  TrainSample s;
  s.obs = state_obs({0.2f, 0.4f, -0.6f});
  s.task = TaskLabel::task(1);
  s.tau0 = Trajectory(4, 2);
  for (float& x : s.tau0.a.v) x = uniform_sample(rng, -0.5f, 0.5f);
  for (int i = 0; i < 5; ++i) policy.train_step({s, s}, rng);
  policy.freeze();

  std::string path = "/tmp/test_policy_ckpt.bin";
  policy.save(path);
  auto loaded = DiffusionPolicy::load(path);
  CHECK(loaded->frozen());
  CHECK(loaded->config().domain_id == "tiny");
  Trajectory tau(4, 2);
  for (float& x : tau.a.v) x = uniform_sample(rng, -1.0f, 1.0f);
  for (int t : {0, 5, 9}) {
    nd::Tensor a = policy.predict_noise(tau, t, s.obs, TaskLabel::task(1));
    nd::Tensor b = loaded->predict_noise(tau, t, s.obs, TaskLabel::task(1));
    CHECK(a.v == b.v);
  }
  std::remove(path.c_str());
  std::remove((path + ".manifest.json").c_str());
}

TEST_CASE("checkpoint: wrong version and wrong magic rejected") {
  DiffusionPolicy policy(tiny_state_config(), unit_bounds(2));
  std::string path = "/tmp/test_policy_ver.bin";
  policy.save(path);
  {
    // The format version lives in bytes 4..7; bump it.
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    std::uint32_t v = 999;
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  CHECK_THROWS_WITH_AS(DiffusionPolicy::load(path),
                       doctest::Contains("version"), Error);
  {
    std::ofstream f(path, std::ios::binary);
    f << "not a checkpoint at all";
  }
  CHECK_THROWS_WITH_AS(DiffusionPolicy::load(path),
                       doctest::Contains("not a policy checkpoint"), Error);
  std::remove(path.c_str());
  std::remove((path + ".manifest.json").c_str());
}

TEST_CASE("sample: outputs in [-1,1], seed-reproducible, frozen-only") {
  DiffusionPolicy policy(tiny_state_config(), unit_bounds(2));
  Observation o = state_obs({0.5f, 0.5f, 0.5f});
  SamplerConfig sc;
  sc.steps = 5;
  {
    Rng rng(9);
    CHECK_THROWS_AS(policy.sample(o, TaskLabel::task(0), sc, rng), Error);
  }
  policy.freeze();
  Rng r1(9), r2(9), r3(10);
  Trajectory a = policy.sample(o, TaskLabel::task(0), sc, r1);
  Trajectory b = policy.sample(o, TaskLabel::task(0), sc, r2);
  Trajectory d = policy.sample(o, TaskLabel::task(0), sc, r3);
  CHECK(a.a.v == b.a.v);
  CHECK(a.a.v != d.a.v);
  for (float x : a.a.v) {
    CHECK(x >= -1.0f);
    CHECK(x <= 1.0f);
  }
}
