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
// Command-line front end: dataset generation, training, evaluation,
// composition protocols, the domain-scale sweep, and report rendering.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "trajcomp/harness.hpp"

namespace fs = std::filesystem;
using namespace trajcomp;

namespace {

std::vector<bench::TaskId> parse_tasks(const std::string& spec) {
  std::vector<bench::TaskId> tasks;
  if (spec == "all" || spec.empty()) {
    for (int i = 0; i < bench::kNumTasks; ++i)
      tasks.push_back(static_cast<bench::TaskId>(i));
    return tasks;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ','))
    tasks.push_back(bench::task_from_name(item));
  return tasks;
}

bench::DomainProfile parse_profile(const std::string& name) {
  if (name == "sim") return bench::sim_profile();
  if (name == "human") return bench::human_profile();
  if (name == "robot") return bench::robot_profile();
  fail("unknown domain profile '" + name + "' (sim, human, robot)");
}

harness::RunConfig load_config(const std::string& path) {
  if (path.empty()) return harness::RunConfig{};
  std::ifstream f(path);
  check(f.good(), "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return harness::run_config_from_json(buf.str());
}

int cmd_gen_data(const std::string& out, const std::string& profile_name,
                 const std::string& tasks_spec, int demos,
                 std::uint64_t seed) {
  bench::DomainProfile profile = parse_profile(profile_name);
  if (demos <= 0) demos = profile.demo_budget;
  bench::BenchConfig cfg;
  bench::Dataset ds =
      bench::build_dataset(profile, parse_tasks(tasks_spec), demos, seed, cfg);
  if (!fs::path(out).parent_path().empty())
    fs::create_directories(fs::path(out).parent_path());
  bench::save_dataset(ds, out);
  int successes = 0;
  for (const auto& ep : ds.episodes) successes += ep.success ? 1 : 0;
  std::cout << "wrote " << ds.episodes.size() << " episodes ("
            << successes << " successful) to " << out << "\n";
  return 0;
}

int cmd_train(const harness::RunConfig& cfg) {
  harness::TrainResult r = harness::train(cfg);
  std::cout << "checkpoint: " << r.checkpoint_path << "\n"
            << "loss curve: " << r.loss_curve_path << "\n"
            << "final loss: " << r.final_loss << "\n";
  return 0;
}

int cmd_eval(const harness::RunConfig& cfg, const std::string& checkpoint,
             const std::string& tasks_spec, float alpha) {
  auto policy = DiffusionPolicy::load(checkpoint);
  harness::EvalOptions opt;
  opt.tasks = parse_tasks(tasks_spec);
  opt.n_scenes = cfg.eval_scenes;
  opt.repeats = cfg.eval_repeats;
  opt.seed_start = cfg.eval_seed_start;
  opt.k = cfg.rollout_k;
  opt.obs_profile = bench::sim_profile();
  opt.bench = cfg.bench;
  opt.workspace_min = cfg.workspace_min;
  opt.workspace_max = cfg.workspace_max;
  opt.fingerprint = harness::config_fingerprint(cfg);

  harness::EvalReport sum;
  for (bench::TaskId task : opt.tasks) {
    TaskLabel label = TaskLabel::task(static_cast<int>(task));
    harness::PlanFn plan =
        alpha == 1.0f
            ? harness::policy_planner(*policy, label, cfg.sampler)
            : harness::guided_planner(*policy, label, alpha, cfg.sampler);
    harness::EvalOptions one = opt;
    one.tasks = {task};
    harness::EvalReport r =
        harness::evaluate(plan, policy->config().H, policy->bounds(), one);
    sum.per_task.push_back(r.per_task[0]);
    sum.episodes.insert(sum.episodes.end(), r.episodes.begin(),
                        r.episodes.end());
  }
  int successes = 0;
  double sm = 0.0, ws = 0.0;
  for (const auto& rec : sum.episodes) {
    successes += rec.success ? 1 : 0;
    sm += rec.smoothness;
    ws += rec.workspace;
  }
  sum.overall.episodes = static_cast<int>(sum.episodes.size());
  sum.overall.success_rate =
      static_cast<double>(successes) / sum.overall.episodes;
  sum.overall.success_se =
      std::sqrt(sum.overall.success_rate * (1 - sum.overall.success_rate) /
                sum.overall.episodes);
  sum.overall.smoothness = sm / sum.overall.episodes;
  sum.overall.workspace = ws / sum.overall.episodes;
  sum.fingerprint = opt.fingerprint;

  std::string text = harness::eval_report_to_json(sum);
  std::cout << text << "\n";
  fs::create_directories(cfg.out_dir);
  std::ofstream out(fs::path(cfg.out_dir) / "eval_report.json");
  out << text << "\n";
  return 0;
}

int cmd_compose_eval(const harness::RunConfig& cfg,
                     const std::string& protocol,
                     const std::vector<std::string>& checkpoints,
                     const std::string& task_name) {
  harness::ProtocolReport report;
  if (protocol == "behavior_table") {
    check(checkpoints.size() == 1, "behavior_table needs one checkpoint");
    report = harness::protocol_behavior_table(
        cfg, checkpoints[0], bench::task_from_name(task_name));
  } else if (protocol == "task_figure") {
    check(checkpoints.size() == 1, "task_figure needs one checkpoint");
    report = harness::protocol_task_figure(cfg, checkpoints[0]);
  } else if (protocol == "domain_figure") {
    check(checkpoints.size() == 2,
          "domain_figure needs checkpoints: human sim");
    report = harness::protocol_domain_figure(cfg, checkpoints[0],
                                             checkpoints[1]);
  } else if (protocol == "multitask_table") {
    check(checkpoints.size() == 5,
          "multitask_table needs checkpoints: four single-task then "
          "multitask");
    std::vector<std::string> singles(checkpoints.begin(),
                                     checkpoints.begin() + 4);
    report = harness::protocol_multitask_table(cfg, singles, checkpoints[4]);
  } else {
    fail("unknown protocol '" + protocol + "'");
  }
  for (const std::string& a : report.artifacts)
    std::cout << "wrote " << a << "\n";
  return 0;
}

int cmd_sweep(const harness::RunConfig& cfg, const std::string& human,
              const std::string& sim, const std::string& pooled) {
  harness::ProtocolReport report =
      harness::protocol_ablation(cfg, human, sim, pooled);
  for (const std::string& a : report.artifacts)
    std::cout << "wrote " << a << "\n";
  return 0;
}

int cmd_report(const std::string& csv_path) {
  std::ifstream f(csv_path);
  check(f.good(), "cannot open report '" + csv_path + "'");
  std::string line;
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      std::cout << cell << std::string(cell.size() < 24 ? 24 - cell.size() : 1,
                                       ' ');
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional trajectory-diffusion toolkit"};
  app.require_subcommand(1);

  std::string config_path, out, profile = "sim", tasks = "all";
  std::string checkpoint, protocol, task = "hammer";
  std::vector<std::string> checkpoints;
  std::string human_ckpt, sim_ckpt, pooled_ckpt, csv_path;
  int demos = 0;
  std::uint64_t seed = 0;
  bool have_seed = false;
  float alpha = 1.0f;
  std::string dataset_override, out_dir_override, domain_id_override;
  int steps_override = 0, scenes_override = 0, repeats_override = 0;
  int k_override = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate a demonstration set");
  gen->add_option("--out", out, "Output dataset path")->required();
  gen->add_option("--profile", profile, "Domain profile: sim, human, robot");
  gen->add_option("--tasks", tasks, "Comma list of tasks or 'all'");
  gen->add_option("--demos", demos, "Demos per task (0 = profile budget)");
  gen->add_option("--seed", seed, "Base scene seed");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run config JSON file");
    sub->add_option("--dataset", dataset_override, "Training dataset path");
    sub->add_option("--out-dir", out_dir_override, "Output directory");
    sub->add_option("--steps", steps_override, "Training step count");
    sub->add_option("--scenes", scenes_override, "Evaluation scene count");
    sub->add_option("--repeats", repeats_override, "Evaluation repeats");
    sub->add_option("--k", k_override, "Rollout execution length");
    sub->add_option("--seed", seed, "Policy seed")->each([&](const std::string&) {
      have_seed = true;
    });
    sub->add_option("--domain-id", domain_id_override,
                    "Policy/checkpoint identifier");
  };

  auto* train = app.add_subcommand("train", "Train a diffusion policy");
  add_common(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "Policy checkpoint")
      ->required();
  eval->add_option("--tasks", tasks, "Comma list of tasks or 'all'");
  eval->add_option("--alpha", alpha, "Guidance scale (1 = plain conditional)");

  auto* comp = app.add_subcommand("compose-eval", "Run a comparison protocol");
  add_common(comp);
  comp->add_option("--protocol", protocol,
                   "behavior_table | task_figure | domain_figure | "
                   "multitask_table")
      ->required();
  comp->add_option("--checkpoint", checkpoints, "Checkpoints, in order")
      ->required();
  comp->add_option("--task", task, "Task for behavior_table");

  auto* sweep = app.add_subcommand("sweep", "Domain-scale sweep + ablations");
  add_common(sweep);
  sweep->add_option("--human", human_ckpt, "Human-domain checkpoint")
      ->required();
  sweep->add_option("--sim", sim_ckpt, "Sim-domain checkpoint")->required();
  sweep->add_option("--pooled", pooled_ckpt, "Pooled-data checkpoint")
      ->required();

  auto* rep = app.add_subcommand("report", "Render a CSV report as text");
  rep->add_option("--csv", csv_path, "Report CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(out, profile, tasks, demos, seed);
    if (rep->parsed()) return cmd_report(csv_path);

    harness::RunConfig cfg = load_config(config_path);
    if (!dataset_override.empty()) cfg.dataset = dataset_override;
    if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
    if (!domain_id_override.empty()) cfg.policy.domain_id = domain_id_override;
    if (steps_override > 0) cfg.train_steps = steps_override;
    if (scenes_override > 0) cfg.eval_scenes = scenes_override;
    if (repeats_override > 0) cfg.eval_repeats = repeats_override;
    if (k_override > 0) cfg.rollout_k = k_override;
    if (have_seed) cfg.policy.seed = seed;

    if (train->parsed()) return cmd_train(cfg);
    if (eval->parsed()) return cmd_eval(cfg, checkpoint, tasks, alpha);
    if (comp->parsed()) return cmd_compose_eval(cfg, protocol, checkpoints, task);
    if (sweep->parsed())
      return cmd_sweep(cfg, human_ckpt, sim_ckpt, pooled_ckpt);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
