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

#include "trajcomp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace trajcomp::harness {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config serialization.

namespace {

std::string modality_str(Modality m) { return modality_name(m); }

Modality modality_from_str(const std::string& s) {
  if (s == "state") return Modality::kState;
  if (s == "pointset") return Modality::kPointSet;
  if (s == "grid") return Modality::kGrid;
  fail("unknown modality '" + s + "'");
}

json policy_to_json(const PolicyConfig& p) {
  json m = json::array();
  for (Modality x : p.modalities) m.push_back(modality_str(x));
  return json{{"domain_id", p.domain_id}, {"modalities", m},
              {"H", p.H},                 {"d", p.d},
              {"T", p.T},                 {"beta_end", p.beta_end},
              {"num_tasks", p.num_tasks}, {"cf_dropout", p.cf_dropout},
              {"seed", p.seed},           {"state_dim", p.state_dim},
              {"n_points", p.n_points},   {"grid_c", p.grid_c},
              {"grid_h", p.grid_h},       {"grid_w", p.grid_w},
              {"time_dim", p.time_dim},   {"task_dim", p.task_dim},
              {"obs_dim", p.obs_dim},     {"point_hidden", p.point_hidden},
              {"trunk_hidden", p.trunk_hidden}};
}

PolicyConfig policy_from_json(const json& j) {
  PolicyConfig p;
  p.domain_id = j.at("domain_id");
  p.modalities.clear();
  for (const auto& m : j.at("modalities"))
    p.modalities.push_back(modality_from_str(m.get<std::string>()));
  p.H = j.at("H");
  p.d = j.at("d");
  p.T = j.at("T");
  p.beta_end = j.at("beta_end");
  p.num_tasks = j.at("num_tasks");
  p.cf_dropout = j.at("cf_dropout");
  p.seed = j.at("seed");
  p.state_dim = j.at("state_dim");
  p.n_points = j.at("n_points");
  p.grid_c = j.at("grid_c");
  p.grid_h = j.at("grid_h");
  p.grid_w = j.at("grid_w");
  p.time_dim = j.at("time_dim");
  p.task_dim = j.at("task_dim");
  p.obs_dim = j.at("obs_dim");
  p.point_hidden = j.at("point_hidden");
  p.trunk_hidden = j.at("trunk_hidden");
  return p;
}

json sampler_to_json(const SamplerConfig& s) {
  return json{{"mode", s.mode == SamplerMode::kAncestral ? "ancestral"
                                                         : "implicit"},
              {"steps", s.steps},
              {"eta", s.eta},
              {"seed", s.seed},
              {"corrector_steps", s.corrector_steps},
              {"corrector_scale", s.corrector_scale}};
}

SamplerConfig sampler_from_json(const json& j) {
  SamplerConfig s;
  std::string mode = j.at("mode");
  check(mode == "ancestral" || mode == "implicit",
        "unknown sampler mode '" + mode + "'");
  s.mode = mode == "ancestral" ? SamplerMode::kAncestral
                               : SamplerMode::kDeterministicImplicit;
  s.steps = j.at("steps");
  s.eta = j.at("eta");
  s.seed = j.at("seed");
  s.corrector_steps = j.at("corrector_steps");
  s.corrector_scale = j.at("corrector_scale");
  return s;
}

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) {
  json tasks = json::array();
  for (bench::TaskId t : cfg.eval_tasks) tasks.push_back(bench::task_name(t));
  json j{{"dataset", cfg.dataset},
         {"extra_datasets", cfg.extra_datasets},
         {"policy", policy_to_json(cfg.policy)},
         {"train_steps", cfg.train_steps},
         {"batch", cfg.batch},
         {"learning_rate", cfg.learning_rate},
         {"log_windows", cfg.log_windows},
         {"sampler", sampler_to_json(cfg.sampler)},
         {"alpha", cfg.alpha},
         {"gamma_c", cfg.gamma_c},
         {"gamma_d", cfg.gamma_d},
         {"rollout_k", cfg.rollout_k},
         {"workspace_min", cfg.workspace_min},
         {"workspace_max", cfg.workspace_max},
         {"eval_scenes", cfg.eval_scenes},
         {"eval_repeats", cfg.eval_repeats},
         {"eval_seed_start", cfg.eval_seed_start},
         {"eval_tasks", tasks},
         {"out_dir", cfg.out_dir},
         {"bench",
          json{{"action_max", cfg.bench.action_max},
               {"episode_cap", cfg.bench.episode_cap},
               {"n_tool_points", cfg.bench.n_tool_points},
               {"n_obj_points", cfg.bench.n_obj_points},
               {"grid_c", cfg.bench.grid_c},
               {"grid_h", cfg.bench.grid_h},
               {"grid_w", cfg.bench.grid_w},
               {"state_dim", cfg.bench.state_dim},
               {"test_seed_start", cfg.bench.test_seed_start}}}};
  return j.dump(2);
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("run config: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  try {
    cfg.dataset = j.at("dataset");
    cfg.extra_datasets = j.at("extra_datasets").get<std::vector<std::string>>();
    cfg.policy = policy_from_json(j.at("policy"));
    cfg.train_steps = j.at("train_steps");
    cfg.batch = j.at("batch");
    cfg.learning_rate = j.at("learning_rate");
    cfg.log_windows = j.at("log_windows");
    cfg.sampler = sampler_from_json(j.at("sampler"));
    cfg.alpha = j.at("alpha");
    cfg.gamma_c = j.at("gamma_c");
    cfg.gamma_d = j.at("gamma_d");
    cfg.rollout_k = j.at("rollout_k");
    cfg.workspace_min = j.at("workspace_min").get<std::vector<float>>();
    cfg.workspace_max = j.at("workspace_max").get<std::vector<float>>();
    cfg.eval_scenes = j.at("eval_scenes");
    cfg.eval_repeats = j.at("eval_repeats");
    cfg.eval_seed_start = j.at("eval_seed_start");
    cfg.eval_tasks.clear();
    for (const auto& t : j.at("eval_tasks"))
      cfg.eval_tasks.push_back(bench::task_from_name(t.get<std::string>()));
    cfg.out_dir = j.at("out_dir");
    const json& b = j.at("bench");
    cfg.bench.action_max = b.at("action_max");
    cfg.bench.episode_cap = b.at("episode_cap");
    cfg.bench.n_tool_points = b.at("n_tool_points");
    cfg.bench.n_obj_points = b.at("n_obj_points");
    cfg.bench.grid_c = b.at("grid_c");
    cfg.bench.grid_h = b.at("grid_h");
    cfg.bench.grid_w = b.at("grid_w");
    cfg.bench.state_dim = b.at("state_dim");
    cfg.bench.test_seed_start = b.at("test_seed_start");
  } catch (const json::exception& e) {
    fail(std::string("run config: missing or mistyped field: ") + e.what());
  }
  return cfg;
}

std::uint64_t config_fingerprint(const RunConfig& cfg) {
  return fnv1a(run_config_to_json(cfg));
}

void validate_run_config(const RunConfig& cfg) {
  check(cfg.rollout_k >= 1 && cfg.rollout_k <= cfg.policy.H,
        "run config: rollout_k must be in [1, H]");
  check(cfg.eval_seed_start >= cfg.bench.test_seed_start,
        "run config: evaluation seeds fall inside the training range");
  check(cfg.train_steps >= 1, "run config: train_steps must be >= 1");
  check(cfg.batch >= 1, "run config: batch must be >= 1");
  check(cfg.learning_rate > 0.0f, "run config: learning_rate must be > 0");
  check(cfg.eval_scenes >= 1 && cfg.eval_repeats >= 1,
        "run config: eval counts must be >= 1");
  check(cfg.workspace_min.size() == 2 && cfg.workspace_max.size() == 2,
        "run config: workspace box must be 2-dimensional");
  check(cfg.workspace_min[0] < cfg.workspace_max[0] &&
            cfg.workspace_min[1] < cfg.workspace_max[1],
        "run config: workspace box is empty");
}

// ---------------------------------------------------------------------------
// Training.

std::vector<TrainSample> make_training_samples(const bench::Dataset& ds,
                                               int H,
                                               const ActionBounds& bounds) {
  std::vector<TrainSample> samples;
  for (const bench::Episode& ep : ds.episodes) {
    int L = ep.length();
    check(static_cast<int>(ep.observations.size()) == L,
          "make_training_samples: episode observation count mismatch");
    int last_start = std::max(0, L - H);
    for (int s = 0; s <= last_start; ++s) {
      nd::Tensor window({H, static_cast<int>(ep.actions.shape[1])});
      for (int i = 0; i < H; ++i) {
        if (s + i < L)
          for (int j = 0; j < window.shape[1]; ++j)
            window.at(i, j) = ep.actions.at(s + i, j);
      }
      TrainSample sample;
      sample.obs = ep.observations[s];
      sample.task = TaskLabel::task(static_cast<int>(ep.task));
      sample.tau0 = normalize(window, bounds);
      samples.push_back(std::move(sample));
    }
  }
  check(!samples.empty(), "make_training_samples: dataset has no episodes");
  return samples;
}

namespace {

void check_dataset_compat(const bench::Dataset& ds, const PolicyConfig& pc,
                          const std::string& path) {
  for (const bench::Episode& ep : ds.episodes) {
    check(!ep.observations.empty(), "dataset '" + path + "': empty episode");
    Modality m = ep.observations[0].modality();
    bool known = std::find(pc.modalities.begin(), pc.modalities.end(), m) !=
                 pc.modalities.end();
    check(known, "dataset '" + path + "': modality " + modality_name(m) +
                     " has no encoder in the policy config");
    if (m == Modality::kPointSet) {
      const auto& ps = std::get<PointSet>(ep.observations[0].data);
      check(ps.n == pc.n_points,
            "dataset '" + path + "': point count " + std::to_string(ps.n) +
                " != policy n_points " + std::to_string(pc.n_points));
    } else if (m == Modality::kState) {
      const auto& sv = std::get<StateVec>(ep.observations[0].data);
      check(static_cast<int>(sv.v.size()) == pc.state_dim,
            "dataset '" + path + "': state dim mismatch");
    } else {
      const auto& gi = std::get<GridImage>(ep.observations[0].data);
      check(gi.c == pc.grid_c && gi.h == pc.grid_h && gi.w == pc.grid_w,
            "dataset '" + path + "': grid shape mismatch");
    }
    check(static_cast<int>(ep.task) < pc.num_tasks,
          "dataset '" + path + "': task id exceeds policy num_tasks");
  }
}

}  // namespace

TrainResult train(const RunConfig& cfg) {
  validate_run_config(cfg);
  ActionBounds bounds = bench::action_bounds(cfg.bench);

  std::vector<bench::Dataset> datasets;
  datasets.push_back(bench::load_dataset(cfg.dataset));
  for (const std::string& p : cfg.extra_datasets)
    datasets.push_back(bench::load_dataset(p));
  check_dataset_compat(datasets[0], cfg.policy, cfg.dataset);
  for (size_t i = 1; i < datasets.size(); ++i)
    check_dataset_compat(datasets[i], cfg.policy, cfg.extra_datasets[i - 1]);

  std::vector<TrainSample> samples;
  for (const bench::Dataset& ds : datasets) {
    auto s = make_training_samples(ds, cfg.policy.H, bounds);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()),
                   std::make_move_iterator(s.end()));
  }

  DiffusionPolicy policy(cfg.policy, bounds);
  policy.opt().lr = cfg.learning_rate;
  Rng rng(cfg.policy.seed * 0x9e3779b97f4a7c15ULL + 1);
  std::uniform_int_distribution<size_t> pick(0, samples.size() - 1);

  int window = std::max(1, cfg.train_steps / std::max(1, cfg.log_windows));
  TrainResult result;
  double acc = 0.0;
  int acc_n = 0;
  std::vector<TrainSample> batch;
  for (int step = 0; step < cfg.train_steps; ++step) {
    batch.clear();
    for (int b = 0; b < cfg.batch; ++b) batch.push_back(samples[pick(rng)]);
    float loss = policy.train_step(batch, rng);
    acc += loss;
    acc_n += 1;
    result.final_loss = loss;
    if ((step + 1) % window == 0 || step + 1 == cfg.train_steps) {
      result.window_losses.push_back(static_cast<float>(acc / acc_n));
      acc = 0.0;
      acc_n = 0;
    }
  }

  fs::create_directories(cfg.out_dir);
  result.checkpoint_path =
      (fs::path(cfg.out_dir) / (cfg.policy.domain_id + ".ckpt")).string();
  policy.save(result.checkpoint_path);

  result.loss_curve_path =
      (fs::path(cfg.out_dir) / (cfg.policy.domain_id + "_loss.csv")).string();
  std::ofstream lf(result.loss_curve_path);
  check(lf.good(), "train: cannot write loss curve");
  lf << "window,mean_loss\n";
  for (size_t i = 0; i < result.window_losses.size(); ++i)
    lf << i << "," << result.window_losses[i] << "\n";
  return result;
}

// ---------------------------------------------------------------------------
// Planners and rollout.

PlanFn policy_planner(const DiffusionPolicy& policy, const TaskLabel& task,
                      const SamplerConfig& sampler) {
  return [&policy, task, sampler](const bench::Scene&, const Observation& obs,
                                  Rng& rng) {
    return policy.sample(obs, task, sampler, rng);
  };
}

PlanFn guided_planner(const DiffusionPolicy& policy, const TaskLabel& task,
                      float alpha, const SamplerConfig& sampler) {
  return [&policy, task, alpha, sampler](const bench::Scene& scene,
                                         const Observation& obs, Rng& rng) {
    (void)scene;
    CompositionSpec spec;
    spec.base = TaskGuidanceTerm{&policy, obs, task, alpha};
    spec.sampler = sampler;
    spec.bounds = policy.bounds();
    nd::Tensor raw = composed_sample(spec, rng);
    Trajectory tau(policy.config().H, policy.config().d);
    for (long i = 0; i < raw.numel(); ++i)
      tau.a.v[i] = std::clamp(raw.v[i], -1.0f, 1.0f);
    return tau;
  };
}

PlanFn composed_planner(std::function<CompositionSpec(
                            const bench::Scene&, const Observation&)>
                            build_spec) {
  return [build_spec](const bench::Scene& scene, const Observation& obs,
                      Rng& rng) {
    CompositionSpec spec = build_spec(scene, obs);
    auto [H, d] = spec_dims(spec);
    nd::Tensor raw = composed_sample(spec, rng);
    Trajectory tau(H, d);
    for (long i = 0; i < raw.numel(); ++i)
      tau.a.v[i] = std::clamp(raw.v[i], -1.0f, 1.0f);
    return tau;
  };
}

PlanFn expert_planner(int H, const bench::BenchConfig& cfg) {
  return [H, cfg](const bench::Scene& scene, const Observation&, Rng&) {
    bench::Scene fresh = scene;
    fresh.steps = 0;
    bench::Episode demo = bench::expert_demo(fresh, cfg);
    nd::Tensor window({H, 2});
    int L = demo.length();
    for (int i = 0; i < H && i < L; ++i)
      for (int j = 0; j < 2; ++j) window.at(i, j) = demo.actions.at(i, j);
    return normalize(window, bench::action_bounds(cfg));
  };
}

RolloutResult rollout(const PlanFn& plan, int H, const ActionBounds& bounds,
                      const bench::Scene& scene0, int k,
                      const bench::DomainProfile& obs_profile,
                      const bench::BenchConfig& cfg, Rng& rng) {
  check(k >= 1 && k <= H, "rollout: k must be in [1, H]");
  RolloutResult r;
  r.episode.task = scene0.task;
  r.episode.domain = obs_profile.id;
  r.episode.scene_seed = scene0.seed;

  bench::Scene scene = scene0;
  std::vector<std::array<float, 2>> executed;
  nd::Tensor plan_raw;
  int plan_pos = 0;
  while (scene.steps < cfg.episode_cap && !bench::is_success(scene)) {
    Observation obs = bench::observe(scene, obs_profile, cfg, rng);
    if (plan_pos == 0) {
      Trajectory tau = plan(scene, obs, rng);
      check(tau.H == H, "rollout: planner horizon mismatch");
      plan_raw = denormalize(tau, bounds);
      r.replans += 1;
    }
    std::array<float, 2> a = {plan_raw.at(plan_pos, 0),
                              plan_raw.at(plan_pos, 1)};
    r.episode.observations.push_back(std::move(obs));
    scene = bench::step(scene, a, cfg);
    for (int j = 0; j < 2; ++j)
      a[j] = std::clamp(a[j], -cfg.action_max, cfg.action_max);
    executed.push_back(a);
    plan_pos = (plan_pos + 1) % k;
  }

  int L = static_cast<int>(executed.size());
  r.episode.actions = nd::Tensor({L, 2});
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < 2; ++j) r.episode.actions.at(i, j) = executed[i][j];
  r.success = bench::is_success(scene);
  r.episode.success = r.success;
  r.final_scene = scene;
  return r;
}

// ---------------------------------------------------------------------------
// Metrics and evaluation.

double smoothness_metric(const nd::Tensor& actions) {
  int L = actions.shape.empty() ? 0 : actions.shape[0];
  if (L < 3) return 0.0;
  return smoothness_cost(actions) / (L - 2);
}

double workspace_metric(const nd::Tensor& actions,
                        const std::vector<float>& start_pose,
                        const std::vector<float>& pose_min,
                        const std::vector<float>& pose_max) {
  int L = actions.shape.empty() ? 0 : actions.shape[0];
  if (L == 0) return 0.0;
  return workspace_cost(actions, pose_min, pose_max, start_pose) / (L + 1);
}

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                       std::uint64_t d) {
  std::uint64_t h = a;
  for (std::uint64_t x : {b, c, d}) {
    h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

}  // namespace

EvalReport evaluate(const PlanFn& plan, int H, const ActionBounds& bounds,
                    const EvalOptions& opt) {
  check(opt.seed_start >= opt.bench.test_seed_start,
        "evaluate: scene seeds fall inside the training range");
  check(!opt.tasks.empty(), "evaluate: empty task set");
  EvalReport report;
  report.fingerprint = opt.fingerprint;

  for (bench::TaskId task : opt.tasks) {
    TaskEval te;
    te.task = task;
    int successes = 0;
    double sm = 0.0, ws = 0.0;
    for (int scene_i = 0; scene_i < opt.n_scenes; ++scene_i) {
      bench::Scene scene0 = bench::make_scene(
          task, opt.seed_start + static_cast<std::uint64_t>(scene_i),
          opt.bench);
      for (int rep = 0; rep < opt.repeats; ++rep) {
        Rng rng(mix_seed(opt.seed_start, static_cast<std::uint64_t>(task),
                         static_cast<std::uint64_t>(scene_i),
                         static_cast<std::uint64_t>(rep)));
        RolloutResult rr = rollout(plan, H, bounds, scene0, opt.k,
                                   opt.obs_profile, opt.bench, rng);
        EpisodeRecord rec;
        rec.task = task;
        rec.scene = scene_i;
        rec.repeat = rep;
        rec.success = rr.success;
        rec.smoothness = smoothness_metric(rr.episode.actions);
        rec.workspace = workspace_metric(
            rr.episode.actions, {scene0.tool[0], scene0.tool[1]},
            opt.workspace_min, opt.workspace_max);
        successes += rr.success ? 1 : 0;
        sm += rec.smoothness;
        ws += rec.workspace;
        report.episodes.push_back(rec);
        te.episodes += 1;
      }
    }
    te.success_rate = static_cast<double>(successes) / te.episodes;
    te.success_se = std::sqrt(te.success_rate * (1.0 - te.success_rate) /
                              te.episodes);
    te.smoothness = sm / te.episodes;
    te.workspace = ws / te.episodes;
    report.per_task.push_back(te);
  }

  TaskEval& all = report.overall;
  int successes = 0;
  double sm = 0.0, ws = 0.0;
  for (const EpisodeRecord& rec : report.episodes) {
    successes += rec.success ? 1 : 0;
    sm += rec.smoothness;
    ws += rec.workspace;
    all.episodes += 1;
  }
  all.success_rate = static_cast<double>(successes) / all.episodes;
  all.success_se =
      std::sqrt(all.success_rate * (1.0 - all.success_rate) / all.episodes);
  all.smoothness = sm / all.episodes;
  all.workspace = ws / all.episodes;
  return report;
}

std::string eval_report_to_json(const EvalReport& r) {
  json per_task = json::array();
  auto task_json = [](const TaskEval& te, const std::string& name) {
    return json{{"task", name},
                {"episodes", te.episodes},
                {"success_rate", te.success_rate},
                {"success_se", te.success_se},
                {"smoothness", te.smoothness},
                {"workspace", te.workspace}};
  };
  for (const TaskEval& te : r.per_task)
    per_task.push_back(task_json(te, bench::task_name(te.task)));
  json j{{"fingerprint", r.fingerprint},
         {"per_task", per_task},
         {"overall", task_json(r.overall, "all")}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Report output.

void write_report(ProtocolReport& report, const std::string& out_dir) {
  fs::create_directories(out_dir);
  fs::path csv_path = fs::path(out_dir) / (report.name + ".csv");
  std::ofstream csv(csv_path);
  check(csv.good(), "write_report: cannot open " + csv_path.string());
  csv << "variant,task,success,se,smoothness,workspace,episodes\n";
  for (const TableRow& row : report.rows)
    csv << row.variant << "," << row.task << "," << row.success << ","
        << row.se << "," << row.smoothness << "," << row.workspace << ","
        << row.episodes << "\n";
  report.artifacts.push_back(csv_path.string());

  fs::path txt_path = fs::path(out_dir) / (report.name + ".txt");
  std::ofstream txt(txt_path);
  check(txt.good(), "write_report: cannot open " + txt_path.string());
  txt << report.name << " (config " << std::hex << report.fingerprint
      << std::dec << ")\n";
  txt << std::left << std::setw(28) << "variant" << std::setw(10) << "task"
      << std::right << std::setw(10) << "success" << std::setw(8) << "se"
      << std::setw(12) << "smooth" << std::setw(12) << "workspace"
      << std::setw(6) << "n" << "\n";
  txt << std::setprecision(4) << std::fixed;
  for (const TableRow& row : report.rows)
    txt << std::left << std::setw(28) << row.variant << std::setw(10)
        << row.task << std::right << std::setw(10) << row.success
        << std::setw(8) << row.se << std::setw(12) << row.smoothness
        << std::setw(12) << row.workspace << std::setw(6) << row.episodes
        << "\n";
  report.artifacts.push_back(txt_path.string());
}

void write_curve_svg(const std::string& path, const std::string& x_label,
                     const std::vector<double>& xs,
                     const std::vector<double>& ys) {
  check(xs.size() == ys.size() && !xs.empty(), "write_curve_svg: bad series");
  const int W = 480, Hh = 320, m = 50;
  double xmin = *std::min_element(xs.begin(), xs.end());
  double xmax = *std::max_element(xs.begin(), xs.end());
  if (xmax == xmin) xmax = xmin + 1.0;
  auto px = [&](double x) { return m + (x - xmin) / (xmax - xmin) * (W - 2 * m); };
  auto py = [&](double y) { return Hh - m - y * (Hh - 2 * m); };
  std::ofstream f(path);
  check(f.good(), "write_curve_svg: cannot open " + path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
    << Hh << "'>\n";
  f << "<rect width='100%' height='100%' fill='white'/>\n";
  f << "<line x1='" << m << "' y1='" << Hh - m << "' x2='" << W - m
    << "' y2='" << Hh - m << "' stroke='black'/>\n";
  f << "<line x1='" << m << "' y1='" << m << "' x2='" << m << "' y2='"
    << Hh - m << "' stroke='black'/>\n";
  f << "<text x='" << W / 2 << "' y='" << Hh - 12
    << "' text-anchor='middle' font-size='13'>" << x_label << "</text>\n";
  f << "<text x='14' y='" << Hh / 2
    << "' font-size='13' transform='rotate(-90 14 " << Hh / 2
    << ")' text-anchor='middle'>success rate</text>\n";
  f << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
  for (size_t i = 0; i < xs.size(); ++i)
    f << px(xs[i]) << "," << py(ys[i]) << " ";
  f << "'/>\n";
  for (size_t i = 0; i < xs.size(); ++i) {
    f << "<circle cx='" << px(xs[i]) << "' cy='" << py(ys[i])
      << "' r='3' fill='steelblue'/>\n";
    f << "<text x='" << px(xs[i]) << "' y='" << Hh - m + 16
      << "' text-anchor='middle' font-size='11'>" << xs[i] << "</text>\n";
  }
  f << "</svg>\n";
}

void write_episode_svg(const std::string& path, const bench::Scene& scene0,
                       const bench::Episode& episode,
                       const bench::BenchConfig& cfg) {
  (void)cfg;
  const int W = 400;
  auto px = [&](float x) { return x * W; };
  auto py = [&](float y) { return (1.0f - y) * W; };
  std::ofstream f(path);
  check(f.good(), "write_episode_svg: cannot open " + path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
    << W << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  std::array<float, 2> goal = scene0.goal_point();
  f << "<circle cx='" << px(scene0.object[0]) << "' cy='"
    << py(scene0.object[1]) << "' r='10' fill='lightgray' stroke='black'/>\n";
  f << "<circle cx='" << px(goal[0]) << "' cy='" << py(goal[1])
    << "' r='5' fill='none' stroke='green'/>\n";
  f << "<polyline fill='none' stroke='crimson' stroke-width='1.5' points='";
  float x = scene0.tool[0], y = scene0.tool[1];
  f << px(x) << "," << py(y) << " ";
  for (int i = 0; i < episode.length(); ++i) {
    x += episode.actions.at(i, 0);
    y += episode.actions.at(i, 1);
    f << px(x) << "," << py(y) << " ";
  }
  f << "'/>\n";
  f << "<circle cx='" << px(scene0.tool[0]) << "' cy='" << py(scene0.tool[1])
    << "' r='4' fill='crimson'/>\n</svg>\n";
}

// ---------------------------------------------------------------------------
// Protocols.

namespace {

std::unique_ptr<DiffusionPolicy> load_variant(const std::string& path,
                                              const std::string& variant) {
  if (!fs::exists(path))
    fail("protocol: missing checkpoint for variant '" + variant + "': " +
         path);
  return DiffusionPolicy::load(path);
}

EvalOptions eval_options(const RunConfig& cfg,
                         const std::vector<bench::TaskId>& tasks) {
  EvalOptions opt;
  opt.tasks = tasks.empty()
                  ? std::vector<bench::TaskId>{bench::TaskId::kSpatula,
                                               bench::TaskId::kKnife,
                                               bench::TaskId::kHammer,
                                               bench::TaskId::kWrench}
                  : tasks;
  opt.n_scenes = cfg.eval_scenes;
  opt.repeats = cfg.eval_repeats;
  opt.seed_start = cfg.eval_seed_start;
  opt.k = cfg.rollout_k;
  opt.obs_profile = bench::sim_profile();
  opt.bench = cfg.bench;
  opt.workspace_min = cfg.workspace_min;
  opt.workspace_max = cfg.workspace_max;
  opt.fingerprint = config_fingerprint(cfg);
  return opt;
}

TableRow row_from(const TaskEval& te, const std::string& variant,
                  const std::string& task) {
  TableRow row;
  row.variant = variant;
  row.task = task;
  row.success = te.success_rate;
  row.se = te.success_se;
  row.smoothness = te.smoothness;
  row.workspace = te.workspace;
  row.episodes = te.episodes;
  return row;
}

void append_report(ProtocolReport& out, const EvalReport& r,
                   const std::string& variant, bool per_task_rows) {
  if (per_task_rows)
    for (const TaskEval& te : r.per_task)
      out.rows.push_back(row_from(te, variant, bench::task_name(te.task)));
  out.rows.push_back(row_from(r.overall, variant, "all"));
}

// Recomputes the overall block of a report stitched together from
// single-task evaluations.
void finish_overall(EvalReport& sum) {
  int successes = 0;
  double sm = 0.0, ws = 0.0;
  for (const EpisodeRecord& rec : sum.episodes) {
    successes += rec.success ? 1 : 0;
    sm += rec.smoothness;
    ws += rec.workspace;
  }
  sum.overall.episodes = static_cast<int>(sum.episodes.size());
  check(sum.overall.episodes > 0, "evaluation produced no episodes");
  sum.overall.success_rate =
      static_cast<double>(successes) / sum.overall.episodes;
  sum.overall.success_se =
      std::sqrt(sum.overall.success_rate * (1 - sum.overall.success_rate) /
                sum.overall.episodes);
  sum.overall.smoothness = sm / sum.overall.episodes;
  sum.overall.workspace = ws / sum.overall.episodes;
}

// Evaluates each task under its own planner and stitches one report.
EvalReport eval_per_task(const std::vector<bench::TaskId>& tasks,
                         const std::function<PlanFn(bench::TaskId)>& make_plan,
                         int H, const ActionBounds& bounds,
                         const EvalOptions& base_opt) {
  EvalReport sum;
  for (bench::TaskId task : tasks) {
    EvalOptions one = base_opt;
    one.tasks = {task};
    EvalReport r = evaluate(make_plan(task), H, bounds, one);
    sum.per_task.push_back(r.per_task[0]);
    sum.episodes.insert(sum.episodes.end(), r.episodes.begin(),
                        r.episodes.end());
  }
  finish_overall(sum);
  sum.fingerprint = base_opt.fingerprint;
  return sum;
}

// Guidance variant of a multitask policy, each episode conditioned on its
// own task label.
EvalReport eval_guided_all_tasks(const DiffusionPolicy& policy, float alpha,
                                 const RunConfig& cfg,
                                 const EvalOptions& base_opt) {
  return eval_per_task(
      base_opt.tasks,
      [&](bench::TaskId task) {
        TaskLabel label = TaskLabel::task(static_cast<int>(task));
        return alpha == 1.0f
                   ? policy_planner(policy, label, cfg.sampler)
                   : guided_planner(policy, label, alpha, cfg.sampler);
      },
      cfg.policy.H, policy.bounds(), base_opt);
}

// Standard deviation of per-group success means.
double group_sd(const std::vector<EpisodeRecord>& recs,
                const std::function<int(const EpisodeRecord&)>& key) {
  std::map<int, std::pair<int, int>> groups;  // key -> (successes, total)
  for (const EpisodeRecord& r : recs) {
    auto& g = groups[key(r)];
    g.first += r.success ? 1 : 0;
    g.second += 1;
  }
  if (groups.size() < 2) return 0.0;
  std::vector<double> means;
  for (const auto& [k, g] : groups)
    means.push_back(static_cast<double>(g.first) / g.second);
  double mu = 0.0;
  for (double m : means) mu += m / means.size();
  double var = 0.0;
  for (double m : means) var += (m - mu) * (m - mu) / (means.size() - 1);
  return std::sqrt(var);
}

}  // namespace

ProtocolReport protocol_behavior_table(const RunConfig& cfg,
                                       const std::string& checkpoint,
                                       bench::TaskId task) {
  auto policy = load_variant(checkpoint, "normal");
  TaskLabel label = TaskLabel::task(static_cast<int>(task));
  EvalOptions opt = eval_options(cfg, {task});

  ProtocolReport out;
  out.name = "behavior_table";
  out.fingerprint = opt.fingerprint;

  PlanFn normal = policy_planner(*policy, label, cfg.sampler);
  append_report(out, evaluate(normal, cfg.policy.H, policy->bounds(), opt),
                "normal", false);

  const DiffusionPolicy* p = policy.get();
  PlanFn smooth = composed_planner(
      [p, label, &cfg](const bench::Scene&, const Observation& obs) {
        CompositionSpec spec;
        spec.base = TaskGuidanceTerm{p, obs, label, 1.0f};
        CostFunction c;
        c.kind = CostKind::kSmoothness;
        spec.terms.push_back(BehaviorTerm{c, cfg.gamma_c});
        spec.sampler = cfg.sampler;
        spec.bounds = p->bounds();
        return spec;
      });
  append_report(out, evaluate(smooth, cfg.policy.H, policy->bounds(), opt),
                "+smoothness", false);

  PlanFn workspace = composed_planner(
      [p, label, &cfg](const bench::Scene& scene, const Observation& obs) {
        CompositionSpec spec;
        spec.base = TaskGuidanceTerm{p, obs, label, 1.0f};
        CostFunction c;
        c.kind = CostKind::kWorkspace;
        c.pose_min = cfg.workspace_min;
        c.pose_max = cfg.workspace_max;
        c.start_pose = {scene.tool[0], scene.tool[1]};
        spec.terms.push_back(BehaviorTerm{c, cfg.gamma_c});
        spec.sampler = cfg.sampler;
        spec.bounds = p->bounds();
        return spec;
      });
  append_report(out, evaluate(workspace, cfg.policy.H, policy->bounds(), opt),
                "+workspace", false);

  write_report(out, cfg.out_dir);
  bench::Scene demo_scene = bench::make_scene(task, cfg.eval_seed_start,
                                              cfg.bench);
  Rng rng(7);
  RolloutResult rr = rollout(normal, cfg.policy.H, policy->bounds(),
                             demo_scene, cfg.rollout_k, bench::sim_profile(),
                             cfg.bench, rng);
  std::string svg =
      (fs::path(cfg.out_dir) / "behavior_episode.svg").string();
  write_episode_svg(svg, demo_scene, rr.episode, cfg.bench);
  out.artifacts.push_back(svg);
  return out;
}

ProtocolReport protocol_task_figure(const RunConfig& cfg,
                                    const std::string& mt_checkpoint) {
  auto policy = load_variant(mt_checkpoint, "multitask");
  EvalOptions opt = eval_options(cfg, cfg.eval_tasks);

  ProtocolReport out;
  out.name = "task_figure";
  out.fingerprint = opt.fingerprint;

  struct Variant {
    std::string name;
    float alpha;
  };
  std::ostringstream comp_name;
  comp_name << "composition_a" << cfg.alpha;
  std::vector<Variant> variants = {{"unconditioned", 0.0f},
                                   {"conditioned", 1.0f},
                                   {comp_name.str(), cfg.alpha}};
  for (const Variant& v : variants)
    append_report(out, eval_guided_all_tasks(*policy, v.alpha, cfg, opt),
                  v.name, true);
  write_report(out, cfg.out_dir);
  return out;
}

ProtocolReport protocol_domain_figure(const RunConfig& cfg,
                                      const std::string& human_checkpoint,
                                      const std::string& sim_checkpoint) {
  auto human = load_variant(human_checkpoint, "human");
  auto sim = load_variant(sim_checkpoint, "sim");
  EvalOptions opt = eval_options(cfg, cfg.eval_tasks);

  ProtocolReport out;
  out.name = "domain_figure";
  out.fingerprint = opt.fingerprint;

  append_report(out, eval_guided_all_tasks(*human, 1.0f, cfg, opt),
                "human_alone", true);

  const DiffusionPolicy* hp = human.get();
  const DiffusionPolicy* sp = sim.get();
  EvalReport sum = eval_per_task(
      opt.tasks,
      [&](bench::TaskId task) {
        TaskLabel label = TaskLabel::task(static_cast<int>(task));
        return composed_planner([hp, sp, label, &cfg](
                                    const bench::Scene&,
                                    const Observation& obs) {
          CompositionSpec spec;
          spec.base = TaskGuidanceTerm{hp, obs, label, 1.0f};
          spec.terms.push_back(DomainPolicyTerm{sp, obs, label, cfg.gamma_d});
          spec.sampler = cfg.sampler;
          spec.bounds = hp->bounds();
          return spec;
        });
      },
      cfg.policy.H, human->bounds(), opt);
  append_report(out, sum, "human_plus_sim", true);

  write_report(out, cfg.out_dir);
  return out;
}

ProtocolReport protocol_multitask_table(
    const RunConfig& cfg, const std::vector<std::string>& single_checkpoints,
    const std::string& mt_checkpoint) {
  check(single_checkpoints.size() == 4,
        "multitask_table: need one single-task checkpoint per task");
  auto mt = load_variant(mt_checkpoint, "multitask");
  EvalOptions opt = eval_options(cfg, cfg.eval_tasks);

  ProtocolReport out;
  out.name = "multitask_table";
  out.fingerprint = opt.fingerprint;

  // Single-task row: each task evaluated under its own specialist policy.
  std::vector<std::unique_ptr<DiffusionPolicy>> singles;
  for (bench::TaskId task : opt.tasks)
    singles.push_back(
        load_variant(single_checkpoints[static_cast<int>(task)],
                     "single_" + bench::task_name(task)));
  EvalReport single_sum = eval_per_task(
      opt.tasks,
      [&](bench::TaskId task) {
        size_t idx = std::find(opt.tasks.begin(), opt.tasks.end(), task) -
                     opt.tasks.begin();
        return policy_planner(*singles[idx],
                              TaskLabel::task(static_cast<int>(task)),
                              cfg.sampler);
      },
      cfg.policy.H, singles[0]->bounds(), opt);
  append_report(out, single_sum, "single_task", true);

  struct Variant {
    std::string name;
    float alpha;
  };
  std::vector<Variant> variants = {{"mt_unconditioned", 0.0f},
                                   {"mt_conditioned", 1.0f},
                                   {"mt_composition_a0.1", 0.1f},
                                   {"mt_composition_a2", 2.0f}};
  std::vector<EvalReport> reports;
  for (const Variant& v : variants) {
    EvalReport r = eval_guided_all_tasks(*mt, v.alpha, cfg, opt);
    append_report(out, r, v.name, true);
    reports.push_back(std::move(r));
  }

  // Both spread decompositions: across tasks and across repeats.
  auto spread_rows = [&](const EvalReport& r, const std::string& variant) {
    TableRow t;
    t.variant = variant;
    t.task = "sd_across_tasks";
    t.se = group_sd(r.episodes,
                    [](const EpisodeRecord& e) { return int(e.task); });
    t.success = r.overall.success_rate;
    t.episodes = r.overall.episodes;
    out.rows.push_back(t);
    t.task = "sd_across_seeds";
    t.se = group_sd(r.episodes,
                    [](const EpisodeRecord& e) { return e.repeat; });
    out.rows.push_back(t);
  };
  spread_rows(single_sum, "single_task");
  for (size_t i = 0; i < variants.size(); ++i)
    spread_rows(reports[i], variants[i].name);

  write_report(out, cfg.out_dir);
  return out;
}

ProtocolReport protocol_ablation(const RunConfig& cfg,
                                 const std::string& human_checkpoint,
                                 const std::string& sim_checkpoint,
                                 const std::string& pooled_checkpoint) {
  auto human = load_variant(human_checkpoint, "human");
  auto sim = load_variant(sim_checkpoint, "sim");
  auto pooled = load_variant(pooled_checkpoint, "data_pooling");
  EvalOptions opt = eval_options(cfg, cfg.eval_tasks);

  ProtocolReport out;
  out.name = "ablation";
  out.fingerprint = opt.fingerprint;

  append_report(out, eval_guided_all_tasks(*pooled, 1.0f, cfg, opt),
                "data_pooling", false);

  const DiffusionPolicy* hp = human.get();
  const DiffusionPolicy* sp = sim.get();
  std::vector<double> gammas = {0.0, 0.05, 0.1, 0.2, 0.5};
  std::vector<double> gamma_success;
  for (double g : gammas) {
    float gf = static_cast<float>(g);
    EvalReport sum = eval_per_task(
        opt.tasks,
        [&](bench::TaskId task) {
          TaskLabel label = TaskLabel::task(static_cast<int>(task));
          return composed_planner([hp, sp, label, gf, &cfg](
                                      const bench::Scene&,
                                      const Observation& obs) {
            CompositionSpec spec;
            spec.base = TaskGuidanceTerm{hp, obs, label, 1.0f};
            if (gf > 0.0f)
              spec.terms.push_back(DomainPolicyTerm{sp, obs, label, gf});
            spec.sampler = cfg.sampler;
            spec.bounds = hp->bounds();
            return spec;
          });
        },
        cfg.policy.H, human->bounds(), opt);
    gamma_success.push_back(sum.overall.success_rate);
    std::ostringstream name;
    name << "composition_g" << g;
    append_report(out, sum, name.str(), false);
  }

  // Receding horizon vs open loop on the clean policy.
  for (int k : {cfg.rollout_k, cfg.policy.H}) {
    EvalOptions ko = opt;
    ko.k = k;
    EvalReport r = eval_guided_all_tasks(*sim, 1.0f, cfg, ko);
    append_report(out, r,
                  k == cfg.policy.H ? "open_loop"
                                    : "rollout_k" + std::to_string(k),
                  false);
  }

  write_report(out, cfg.out_dir);
  std::string svg = (fs::path(cfg.out_dir) / "gamma_sweep.svg").string();
  write_curve_svg(svg, "domain composition scale", gammas, gamma_success);
  out.artifacts.push_back(svg);
  return out;
}

}  // namespace trajcomp::harness
