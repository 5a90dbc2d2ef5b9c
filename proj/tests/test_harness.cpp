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

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "trajcomp/harness.hpp"

using namespace trajcomp;
using namespace trajcomp::harness;

namespace {

// Small benchmark and policy geometry shared by the training tests.
bench::BenchConfig small_bench() {
  bench::BenchConfig b;
  b.n_tool_points = 16;
  b.n_obj_points = 16;
  return b;
}

PolicyConfig small_policy() {
  PolicyConfig p;
  p.domain_id = "smoke";
  p.modalities = {Modality::kPointSet};
  p.H = 8;
  p.d = 2;
  p.T = 10;
  p.num_tasks = 4;
  p.n_points = 32;
  p.point_hidden = 16;
  p.obs_dim = 16;
  p.time_dim = 8;
  p.task_dim = 8;
  p.trunk_hidden = 32;
  return p;
}

std::string write_small_dataset(const std::string& path, int n_demos,
                                std::uint64_t seed) {
  bench::Dataset ds = bench::build_dataset(
      bench::sim_profile(), {bench::TaskId::kHammer}, n_demos, seed,
      small_bench());
  bench::save_dataset(ds, path);
  return path;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
}

RunConfig sample_config() {
  RunConfig cfg;
  cfg.dataset = "/tmp/ds.bin";
  cfg.extra_datasets = {"/tmp/extra.bin"};
  cfg.policy = small_policy();
  cfg.train_steps = 100;
  cfg.alpha = 2.0f;
  cfg.eval_tasks = {bench::TaskId::kKnife};
  cfg.sampler.mode = SamplerMode::kAncestral;
  cfg.bench = small_bench();
  return cfg;
}

}  // namespace

TEST_CASE("run config: JSON roundtrip is exact and fingerprint is stable") {
  RunConfig cfg = sample_config();
  std::string j1 = run_config_to_json(cfg);
  RunConfig back = run_config_from_json(j1);
  std::string j2 = run_config_to_json(back);
  CHECK(j1 == j2);
  CHECK(config_fingerprint(cfg) == config_fingerprint(back));

  RunConfig other = cfg;
  other.alpha = 1.5f;
  CHECK(config_fingerprint(other) != config_fingerprint(cfg));

  CHECK_THROWS_WITH_AS(run_config_from_json("{nope"),
                       doctest::Contains("invalid JSON"), Error);
  CHECK_THROWS_WITH_AS(run_config_from_json("{}"),
                       doctest::Contains("missing"), Error);
}

TEST_CASE("run config: validation rejects inconsistent settings") {
  RunConfig cfg = sample_config();
  CHECK_NOTHROW(validate_run_config(cfg));

  RunConfig bad = cfg;
  bad.rollout_k = bad.policy.H + 1;
  CHECK_THROWS_WITH_AS(validate_run_config(bad), doctest::Contains("[1, H]"),
                       Error);

  bad = cfg;
  bad.eval_seed_start = 10;  // inside the training seed range
  CHECK_THROWS_WITH_AS(validate_run_config(bad),
                       doctest::Contains("training range"), Error);

  bad = cfg;
  bad.eval_scenes = 0;
  CHECK_THROWS_AS(validate_run_config(bad), Error);

  bad = cfg;
  bad.workspace_min = {0.9f, 0.9f};
  bad.workspace_max = {0.1f, 0.1f};
  CHECK_THROWS_WITH_AS(validate_run_config(bad), doctest::Contains("empty"),
                       Error);
}

TEST_CASE("make_training_samples: window counts, padding, normalization") {
  bench::BenchConfig bcfg = small_bench();
  ActionBounds bounds = bench::action_bounds(bcfg);
  bench::Dataset ds = bench::build_dataset(
      bench::sim_profile(), {bench::TaskId::kKnife}, 1, 3, bcfg);
  int L = ds.episodes[0].length();
  REQUIRE(L > 8);

  SUBCASE("long episode yields one window per start offset") {
    auto samples = make_training_samples(ds, 8, bounds);
    CHECK(samples.size() == size_t(L - 8 + 1));
    for (const TrainSample& s : samples) {
      CHECK(s.task.id == int(bench::TaskId::kKnife));
      CHECK(s.tau0.H == 8);
    }
    // first window matches the normalized head of the episode
    nd::Tensor head({8, 2});
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 2; ++j) head.at(i, j) = ds.episodes[0].actions.at(i, j);
    CHECK(samples[0].tau0.a.v == normalize(head, bounds).a.v);
  }

  SUBCASE("short episode is zero padded into a single window") {
    bench::Dataset tiny = ds;
    bench::Episode& ep = tiny.episodes[0];
    nd::Tensor cut({2, 2});
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) cut.at(i, j) = ep.actions.at(i, j);
    ep.actions = cut;
    ep.observations.resize(2);
    auto samples = make_training_samples(tiny, 8, bounds);
    REQUIRE(samples.size() == 1);
    // symmetric bounds map padded zero actions to normalized zero
    for (int i = 2; i < 8; ++i) {
      CHECK(samples[0].tau0.a.at(i, 0) == 0.0f);
      CHECK(samples[0].tau0.a.at(i, 1) == 0.0f);
    }
  }
}

TEST_CASE("rollout: expert planner succeeds and replans as configured") {
  bench::BenchConfig bcfg = small_bench();
  ActionBounds bounds = bench::action_bounds(bcfg);
  bench::Scene scene0 = bench::make_scene(bench::TaskId::kHammer, 2000000,
                                          bcfg);
  PlanFn expert = expert_planner(16, bcfg);

  SUBCASE("receding horizon k=4") {
    Rng rng(1);
    RolloutResult r = rollout(expert, 16, bounds, scene0, 4,
                              bench::sim_profile(), bcfg, rng);
    CHECK(r.success);
    CHECK(r.episode.length() <= bcfg.episode_cap);
    CHECK(r.replans >= r.episode.length() / 4);
    CHECK(int(r.episode.observations.size()) == r.episode.length());
  }
  SUBCASE("k=1 replans before every step") {
    Rng rng(2);
    RolloutResult r = rollout(expert, 16, bounds, scene0, 1,
                              bench::sim_profile(), bcfg, rng);
    CHECK(r.success);
    CHECK(r.replans == r.episode.length());
  }
  SUBCASE("k=H is open loop with one plan per horizon") {
    Rng rng(3);
    RolloutResult r = rollout(expert, 16, bounds, scene0, 16,
                              bench::sim_profile(), bcfg, rng);
    CHECK(r.replans == (r.episode.length() + 15) / 16);
  }
  SUBCASE("planner horizon mismatch is rejected") {
    PlanFn bad = [](const bench::Scene&, const Observation&, Rng&) {
      return Trajectory(4, 2);
    };
    Rng rng(4);
    CHECK_THROWS_WITH_AS(
        rollout(bad, 16, bounds, scene0, 4, bench::sim_profile(), bcfg, rng),
        doctest::Contains("horizon"), Error);
  }
}

TEST_CASE("metrics: agree with the cost definitions") {
  Rng rng(5);
  nd::Tensor a({9, 2});
  for (float& x : a.v) x = uniform_sample(rng, -0.05f, 0.05f);
  CHECK(smoothness_metric(a) ==
        doctest::Approx(smoothness_cost(a) / 7.0).epsilon(1e-12));
  std::vector<float> lo = {0.1f, 0.1f}, hi = {0.9f, 0.9f};
  std::vector<float> start = {0.12f, 0.12f};
  CHECK(workspace_metric(a, start, lo, hi) ==
        doctest::Approx(workspace_cost(a, lo, hi, start) / 10.0)
            .epsilon(1e-12));
  nd::Tensor two({2, 2});
  CHECK(smoothness_metric(two) == 0.0);
}

TEST_CASE("evaluate: expert oracle scores a perfect success rate") {
  bench::BenchConfig bcfg = small_bench();
  ActionBounds bounds = bench::action_bounds(bcfg);
  EvalOptions opt;
  opt.tasks = {bench::TaskId::kHammer, bench::TaskId::kWrench};
  opt.n_scenes = 5;
  opt.repeats = 1;
  opt.bench = bcfg;
  opt.fingerprint = 1234;
  PlanFn expert = expert_planner(16, bcfg);
  EvalReport r = evaluate(expert, 16, bounds, opt);
  CHECK(r.overall.success_rate == 1.0);
  CHECK(r.overall.success_se == 0.0);
  CHECK(r.overall.episodes == 10);
  REQUIRE(r.per_task.size() == 2);
  for (const TaskEval& te : r.per_task) {
    CHECK(te.success_rate == 1.0);
    CHECK(te.episodes == 5);
  }
  CHECK(r.episodes.size() == 10);
  CHECK(r.fingerprint == 1234);

  // identical options reproduce the report bit for bit
  EvalReport r2 = evaluate(expert, 16, bounds, opt);
  CHECK(eval_report_to_json(r) == eval_report_to_json(r2));
}

TEST_CASE("evaluate: scene seeds must come from the held-out range") {
  bench::BenchConfig bcfg = small_bench();
  EvalOptions opt;
  opt.bench = bcfg;
  opt.seed_start = 5;
  PlanFn expert = expert_planner(16, bcfg);
  CHECK_THROWS_WITH_AS(evaluate(expert, 16, bench::action_bounds(bcfg), opt),
                       doctest::Contains("training range"), Error);
}

TEST_CASE("evaluate: an untrained policy essentially never succeeds") {
  bench::BenchConfig bcfg = small_bench();
  PolicyConfig pc = small_policy();
  DiffusionPolicy policy(pc, bench::action_bounds(bcfg));
  policy.freeze();
  SamplerConfig sc;
  sc.steps = 4;
  EvalOptions opt;
  opt.tasks = {bench::TaskId::kSpatula};
  opt.n_scenes = 5;
  opt.repeats = 1;
  opt.k = 8;
  opt.bench = bcfg;
  PlanFn plan = policy_planner(policy, TaskLabel::task(0), sc);
  EvalReport r = evaluate(plan, 8, policy.bounds(), opt);
  CHECK(r.overall.success_rate < 0.1);
}

TEST_CASE("train: smoke run is deterministic and logs a loss curve") {
  std::string ds_path = write_small_dataset("/tmp/test_harness_ds.bin", 3, 11);
  RunConfig cfg;
  cfg.dataset = ds_path;
  cfg.policy = small_policy();
  cfg.train_steps = 60;
  cfg.batch = 4;
  cfg.learning_rate = 1e-3f;
  cfg.log_windows = 6;
  cfg.bench = small_bench();
  cfg.out_dir = "/tmp/test_harness_out_a";
  TrainResult a = train(cfg);
  cfg.out_dir = "/tmp/test_harness_out_b";
  TrainResult b = train(cfg);

  CHECK(a.window_losses.size() == 6);
  CHECK(std::filesystem::exists(a.loss_curve_path));
  CHECK(slurp(a.checkpoint_path) == slurp(b.checkpoint_path));
  auto loaded = DiffusionPolicy::load(a.checkpoint_path);
  CHECK(loaded->config().domain_id == "smoke");

  std::filesystem::remove_all("/tmp/test_harness_out_a");
  std::filesystem::remove_all("/tmp/test_harness_out_b");
  std::remove(ds_path.c_str());
  std::remove((ds_path + ".manifest.json").c_str());
}

TEST_CASE("train: modality mismatch fails before any training step") {
  std::string ds_path = write_small_dataset("/tmp/test_harness_mm.bin", 1, 12);
  RunConfig cfg;
  cfg.dataset = ds_path;
  cfg.policy = small_policy();
  cfg.policy.modalities = {Modality::kState};
  cfg.bench = small_bench();
  cfg.out_dir = "/tmp/test_harness_mm_out";
  CHECK_THROWS_WITH_AS(train(cfg), doctest::Contains("no encoder"), Error);
  std::remove(ds_path.c_str());
  std::remove((ds_path + ".manifest.json").c_str());
}

TEST_CASE("train: loss decreases when overfitting one demonstration") {
  std::string ds_path = write_small_dataset("/tmp/test_harness_of.bin", 1, 13);
  RunConfig cfg;
  cfg.dataset = ds_path;
  cfg.policy = small_policy();
  cfg.policy.trunk_hidden = 64;
  cfg.train_steps = 8000;
  cfg.batch = 8;
  cfg.learning_rate = 1e-3f;
  cfg.log_windows = 10;
  cfg.bench = small_bench();
  cfg.out_dir = "/tmp/test_harness_of_out";
  TrainResult r = train(cfg);
  REQUIRE(r.window_losses.size() >= 2);
  CHECK(r.window_losses.back() < r.window_losses.front());
  CHECK(r.window_losses.back() < 0.05f);
  std::filesystem::remove_all("/tmp/test_harness_of_out");
  std::remove(ds_path.c_str());
  std::remove((ds_path + ".manifest.json").c_str());
}
