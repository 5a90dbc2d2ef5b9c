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

#include "trajcomp/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace trajcomp::bench {

using nlohmann::json;

std::string task_name(TaskId t) {
  switch (t) {
    case TaskId::kSpatula:
      return "spatula";
    case TaskId::kKnife:
      return "knife";
    case TaskId::kHammer:
      return "hammer";
    case TaskId::kWrench:
      return "wrench";
  }
  return "?";
}

TaskId task_from_name(const std::string& s) {
  for (int i = 0; i < kNumTasks; ++i)
    if (task_name(static_cast<TaskId>(i)) == s) return static_cast<TaskId>(i);
  fail("unknown task '" + s + "'");
}

const TaskGeometry& task_geometry(TaskId t) {
  // One reach-engage schema per tool family; approach keypoints sit on
  // opposite sides of the object and engagement directions differ, so the
  // task label is required to disambiguate identical scenes.
  static const TaskGeometry kGeom[kNumTasks] = {
      {{0.0f, -0.12f}, {0.0f, 1.0f}, 0.04f, 0.08f},   // spatula: lift
      {{-0.12f, 0.0f}, {1.0f, 0.0f}, 0.04f, 0.08f},   // knife: split
      {{0.0f, 0.12f}, {0.0f, -1.0f}, 0.04f, 0.08f},   // hammer: press pin
      {{0.12f, 0.0f}, {0.0f, 1.0f}, 0.04f, 0.08f},    // wrench: turn
  };
  return kGeom[static_cast<int>(t)];
}

ActionBounds action_bounds(const BenchConfig& cfg) {
  ActionBounds b;
  b.lo = {-cfg.action_max, -cfg.action_max};
  b.hi = {cfg.action_max, cfg.action_max};
  return b;
}

std::array<float, 2> Scene::goal_point() const {
  const TaskGeometry& g = task_geometry(task);
  return {object[0] + g.goal_offset[0] + progress * g.engage_dir[0],
          object[1] + g.goal_offset[1] + progress * g.engage_dir[1]};
}

DomainProfile sim_profile() {
  DomainProfile p;
  p.id = "sim";
  p.modality = Modality::kPointSet;
  return p;
}

DomainProfile human_profile() {
  DomainProfile p;
  p.id = "human";
  p.modality = Modality::kPointSet;
  p.point_jitter = 0.06f;
  p.drop_fraction = 0.3f;
  p.crop_window = 0.1f;
  p.label_noise = 0.012f;
  return p;
}

DomainProfile robot_profile() {
  DomainProfile p;
  p.id = "robot";
  p.modality = Modality::kGrid;
  p.point_jitter = 0.01f;
  return p;
}

Scene make_scene(TaskId task, std::uint64_t seed, const BenchConfig& cfg) {
  (void)cfg;
  Scene s;
  s.task = task;
  s.seed = seed;
  // Mix the task into the stream so equal seeds give distinct layouts
  // across tasks.
  Rng rng(seed * 1000003ULL + static_cast<std::uint64_t>(task) + 1);
  const TaskGeometry& g = task_geometry(task);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    s.object = {uniform_sample(rng, 0.3f, 0.7f),
                uniform_sample(rng, 0.3f, 0.7f)};
    s.tool = {uniform_sample(rng, 0.15f, 0.85f),
              uniform_sample(rng, 0.15f, 0.85f)};
    s.tool_angle = uniform_sample(rng, 0.0f, 2.0f * float(M_PI));
    float gx = s.object[0] + g.goal_offset[0];
    float gy = s.object[1] + g.goal_offset[1];
    float dx = s.tool[0] - gx, dy = s.tool[1] - gy;
    float dist = std::sqrt(dx * dx + dy * dy);
    if (dist >= 0.15f && dist <= 0.70f) break;
  }
  s.progress = 0.0f;
  s.steps = 0;
  return s;
}

Episode expert_demo(const Scene& scene, const BenchConfig& cfg) {
  check(scene.steps == 0, "expert_demo: scene is not fresh");
  const TaskGeometry& g = task_geometry(scene.task);
  std::array<float, 2> goal = scene.goal_point();
  float dx = goal[0] - scene.tool[0];
  float dy = goal[1] - scene.tool[1];
  float dist = std::sqrt(dx * dx + dy * dy);

  // Minimum-acceleration approach: cubic ease position profile whose peak
  // velocity 1.5*dist/n stays within 90% of the action bound.
  int n_approach =
      std::max(3, static_cast<int>(
                      std::ceil(1.5f * dist / (0.9f * cfg.action_max))));
  float engage_step = 0.5f * cfg.action_max;
  int n_engage =
      static_cast<int>(std::ceil(g.success_threshold / engage_step)) + 1;
  int L = n_approach + n_engage;
  check(L <= cfg.episode_cap, "expert_demo: demo longer than episode cap");

  Episode ep;
  ep.task = scene.task;
  ep.scene_seed = scene.seed;
  ep.actions = nd::Tensor({L, 2});
  auto ease = [&](int i) {
    float u = static_cast<float>(i) / n_approach;
    return 3.0f * u * u - 2.0f * u * u * u;
  };
  for (int i = 0; i < n_approach; ++i) {
    float step = ease(i + 1) - ease(i);
    ep.actions.at(i, 0) = dx * step;
    ep.actions.at(i, 1) = dy * step;
  }
  for (int i = 0; i < n_engage; ++i) {
    ep.actions.at(n_approach + i, 0) = engage_step * g.engage_dir[0];
    ep.actions.at(n_approach + i, 1) = engage_step * g.engage_dir[1];
  }
  return ep;
}

namespace {

// Low-discrepancy disc template point k of n, radius r: spiral layout.
std::array<float, 2> disc_point(int k, int n, float r) {
  constexpr float kGolden = 2.39996323f;
  float rad = r * std::sqrt((k + 0.5f) / n);
  float ang = k * kGolden;
  return {rad * std::cos(ang), rad * std::sin(ang)};
}

inline float to_unit(float workspace_coord) {
  return 2.0f * workspace_coord - 1.0f;
}

void splat(GridImage& img, int c, float x, float y) {
  // bilinear splat of a workspace point onto the grid
  float gx = x * (img.w - 1);
  float gy = y * (img.h - 1);
  int x0 = std::clamp(static_cast<int>(std::floor(gx)), 0, img.w - 1);
  int y0 = std::clamp(static_cast<int>(std::floor(gy)), 0, img.h - 1);
  int x1 = std::min(x0 + 1, img.w - 1);
  int y1 = std::min(y0 + 1, img.h - 1);
  float fx = gx - x0, fy = gy - y0;
  auto add = [&](int xi, int yi, float w) {
    size_t idx = (static_cast<size_t>(c) * img.h + yi) * img.w + xi;
    img.v[idx] = std::min(1.0f, img.v[idx] + w);
  };
  add(x0, y0, (1 - fx) * (1 - fy));
  add(x1, y0, fx * (1 - fy));
  add(x0, y1, (1 - fx) * fy);
  add(x1, y1, fx * fy);
}

}  // namespace

Observation observe(const Scene& scene, const DomainProfile& profile,
                    const BenchConfig& cfg, Rng& rng) {
  check(profile.drop_fraction < 1.0f, "observe: drop fraction must be < 1");
  std::array<float, 2> goal = scene.goal_point();

  if (profile.modality == Modality::kState) {
    StateVec sv;
    sv.v = {to_unit(scene.tool[0]),   to_unit(scene.tool[1]),
            std::cos(scene.tool_angle), std::sin(scene.tool_angle),
            to_unit(scene.object[0]), to_unit(scene.object[1]),
            scene.progress * 10.0f};
    Observation o;
    o.data = std::move(sv);
    return o;
  }

  // Workspace points for tool and object assembly (object disc plus a
  // smaller keypoint cluster at the goal, so progress is observable).
  int n_tool = cfg.n_tool_points, n_obj = cfg.n_obj_points;
  std::vector<std::array<float, 2>> pts;
  std::vector<float> mask;
  pts.reserve(n_tool + n_obj);
  float ca = std::cos(scene.tool_angle), sa = std::sin(scene.tool_angle);
  for (int k = 0; k < n_tool; ++k) {
    auto p = disc_point(k, n_tool, 0.05f);
    // elongate along the local x-axis so orientation is visible
    p[0] *= 1.6f;
    pts.push_back({scene.tool[0] + ca * p[0] - sa * p[1],
                   scene.tool[1] + sa * p[0] + ca * p[1]});
    mask.push_back(1.0f);
  }
  int n_disc = (2 * n_obj) / 3;
  for (int k = 0; k < n_obj; ++k) {
    std::array<float, 2> p;
    if (k < n_disc) {
      auto q = disc_point(k, n_disc, 0.05f);
      p = {scene.object[0] + q[0], scene.object[1] + q[1]};
    } else {
      auto q = disc_point(k - n_disc, n_obj - n_disc, 0.02f);
      p = {goal[0] + q[0], goal[1] + q[1]};
    }
    pts.push_back(p);
    mask.push_back(0.0f);
  }

  if (profile.modality == Modality::kGrid) {
    GridImage img(cfg.grid_c, cfg.grid_h, cfg.grid_w);
    for (size_t i = 0; i < pts.size(); ++i) {
      float x = pts[i][0], y = pts[i][1];
      if (profile.point_jitter > 0.0f) {
        x += profile.point_jitter * normal_sample(rng);
        y += profile.point_jitter * normal_sample(rng);
      }
      x = std::clamp(x, 0.0f, 1.0f);
      y = std::clamp(y, 0.0f, 1.0f);
      splat(img, mask[i] > 0.5f ? 0 : 1, x, y);
    }
    Observation o;
    o.data = std::move(img);
    return o;
  }

  // Point-set path with per-profile corruption.
  float crop_lo_x = 0.0f, crop_lo_y = 0.0f;
  float crop_hi_x = 1.0f, crop_hi_y = 1.0f;
  if (profile.crop_window > 0.0f) {
    float span = 1.0f - profile.crop_window;
    crop_lo_x = uniform_sample(rng, 0.0f, profile.crop_window);
    crop_lo_y = uniform_sample(rng, 0.0f, profile.crop_window);
    crop_hi_x = crop_lo_x + span;
    crop_hi_y = crop_lo_y + span;
  }
  std::uniform_real_distribution<float> u01(0.0f, 1.0f);
  PointSet ps(n_tool + n_obj);
  for (int i = 0; i < ps.n; ++i) {
    float x = pts[i][0], y = pts[i][1];
    if (profile.point_jitter > 0.0f) {
      x += profile.point_jitter * normal_sample(rng);
      y += profile.point_jitter * normal_sample(rng);
    }
    bool dropped = profile.drop_fraction > 0.0f &&
                   u01(rng) < profile.drop_fraction;
    bool cropped = x < crop_lo_x || x > crop_hi_x || y < crop_lo_y ||
                   y > crop_hi_y;
    if (dropped || cropped) {
      ps.pts.at(i, 0) = 0.0f;
      ps.pts.at(i, 1) = 0.0f;
      ps.pts.at(i, 2) = mask[i];
      ps.pts.at(i, 3) = 0.0f;
    } else {
      ps.pts.at(i, 0) = to_unit(x);
      ps.pts.at(i, 1) = to_unit(y);
      ps.pts.at(i, 2) = mask[i];
      ps.pts.at(i, 3) = 1.0f;
    }
  }
  Observation o;
  o.data = std::move(ps);
  return o;
}

Scene step(const Scene& scene, const std::array<float, 2>& raw_action,
           const BenchConfig& cfg) {
  Scene s = scene;
  std::array<float, 2> a = raw_action;
  for (int j = 0; j < 2; ++j) {
    float clipped = std::clamp(a[j], -cfg.action_max, cfg.action_max);
    if (clipped != a[j]) s.clipped = true;
    a[j] = clipped;
  }
  const TaskGeometry& g = task_geometry(s.task);
  std::array<float, 2> goal = s.goal_point();
  float dx = s.tool[0] - goal[0], dy = s.tool[1] - goal[1];
  bool engaged = dx * dx + dy * dy <= g.engage_radius * g.engage_radius;
  s.tool[0] += a[0];
  s.tool[1] += a[1];
  if (engaged) {
    float along = a[0] * g.engage_dir[0] + a[1] * g.engage_dir[1];
    if (along > 0.0f) s.progress += along;
  }
  s.steps += 1;
  return s;
}

bool is_success(const Scene& scene) {
  return scene.progress >= task_geometry(scene.task).success_threshold;
}

Dataset build_dataset(const DomainProfile& profile,
                      const std::vector<TaskId>& tasks, int n_demos,
                      std::uint64_t seed, const BenchConfig& cfg) {
  check(n_demos >= 1, "build_dataset: n_demos must be >= 1");
  Dataset ds;
  ds.profile = profile;
  ds.config = cfg;
  ds.tasks = tasks;
  ds.n_demos_per_task = n_demos;
  ds.seed = seed;
  for (TaskId task : tasks) {
    for (int i = 0; i < n_demos; ++i) {
      std::uint64_t scene_seed = seed + static_cast<std::uint64_t>(i);
      check(scene_seed < cfg.test_seed_start,
            "build_dataset: training seed range collides with the test split");
      Scene scene = make_scene(task, scene_seed, cfg);
      Episode ep = expert_demo(scene, cfg);
      ep.domain = profile.id;
      // One rng per episode keyed by (dataset seed, task, demo index) so
      // regeneration from the manifest is byte-identical.
      Rng rng(fnv1a(profile.id) ^ (scene_seed * 2654435761ULL) ^
              (static_cast<std::uint64_t>(task) << 32));
      Scene cur = scene;
      int L = ep.actions.shape[0];
      ep.observations.reserve(L);
      for (int t = 0; t < L; ++t) {
        ep.observations.push_back(observe(cur, profile, cfg, rng));
        std::array<float, 2> a = {ep.actions.at(t, 0), ep.actions.at(t, 1)};
        cur = step(cur, a, cfg);
      }
      ep.success = is_success(cur);
      if (profile.label_noise > 0.0f) {
        for (float& x : ep.actions.v) {
          x += profile.label_noise * normal_sample(rng);
          x = std::clamp(x, -cfg.action_max, cfg.action_max);
        }
      }
      ds.episodes.push_back(std::move(ep));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset serialization: length-prefixed little-endian records.

namespace {

template <typename T>
void wr(std::ofstream& f, const T& x) {
  f.write(reinterpret_cast<const char*>(&x), sizeof(T));
}
template <typename T>
T rd(std::ifstream& f) {
  T x{};
  f.read(reinterpret_cast<char*>(&x), sizeof(T));
  return x;
}

void write_floats(std::ofstream& f, const std::vector<float>& v) {
  wr(f, static_cast<std::uint64_t>(v.size()));
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> read_floats(std::ifstream& f) {
  auto n = rd<std::uint64_t>(f);
  std::vector<float> v(n);
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(n * sizeof(float)));
  return v;
}

void write_observation(std::ofstream& f, const Observation& o) {
  wr(f, static_cast<std::uint8_t>(o.modality()));
  switch (o.modality()) {
    case Modality::kState:
      write_floats(f, std::get<StateVec>(o.data).v);
      break;
    case Modality::kPointSet: {
      const auto& ps = std::get<PointSet>(o.data);
      wr(f, static_cast<std::uint32_t>(ps.n));
      write_floats(f, ps.pts.v);
      break;
    }
    case Modality::kGrid: {
      const auto& gi = std::get<GridImage>(o.data);
      wr(f, static_cast<std::uint32_t>(gi.c));
      wr(f, static_cast<std::uint32_t>(gi.h));
      wr(f, static_cast<std::uint32_t>(gi.w));
      write_floats(f, gi.v);
      break;
    }
  }
}

Observation read_observation(std::ifstream& f) {
  auto m = static_cast<Modality>(rd<std::uint8_t>(f));
  Observation o;
  switch (m) {
    case Modality::kState: {
      StateVec sv;
      sv.v = read_floats(f);
      o.data = std::move(sv);
      break;
    }
    case Modality::kPointSet: {
      auto n = rd<std::uint32_t>(f);
      PointSet ps(static_cast<int>(n));
      ps.pts.v = read_floats(f);
      o.data = std::move(ps);
      break;
    }
    case Modality::kGrid: {
      GridImage gi(static_cast<int>(rd<std::uint32_t>(f)),
                   static_cast<int>(rd<std::uint32_t>(f)),
                   static_cast<int>(rd<std::uint32_t>(f)));
      gi.v = read_floats(f);
      o.data = std::move(gi);
      break;
    }
  }
  return o;
}

json profile_to_json(const DomainProfile& p) {
  return json{{"id", p.id},
              {"modality", modality_name(p.modality)},
              {"point_jitter", p.point_jitter},
              {"drop_fraction", p.drop_fraction},
              {"crop_window", p.crop_window},
              {"label_noise", p.label_noise},
              {"demo_budget", p.demo_budget}};
}

DomainProfile profile_from_json(const json& j) {
  DomainProfile p;
  p.id = j.at("id");
  std::string m = j.at("modality");
  p.modality = m == "state"      ? Modality::kState
               : m == "pointset" ? Modality::kPointSet
                                 : Modality::kGrid;
  p.point_jitter = j.at("point_jitter");
  p.drop_fraction = j.at("drop_fraction");
  p.crop_window = j.at("crop_window");
  p.label_noise = j.at("label_noise");
  p.demo_budget = j.at("demo_budget");
  return p;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "save_dataset: cannot open '" + path + "'");
  const char magic[4] = {'T', 'C', 'D', 'S'};
  f.write(magic, 4);
  wr(f, static_cast<std::uint32_t>(1));
  wr(f, static_cast<std::uint64_t>(ds.episodes.size()));
  for (const Episode& ep : ds.episodes) {
    wr(f, static_cast<std::uint8_t>(ep.task));
    wr(f, static_cast<std::uint32_t>(ep.domain.size()));
    f.write(ep.domain.data(), static_cast<std::streamsize>(ep.domain.size()));
    wr(f, ep.scene_seed);
    wr(f, static_cast<std::uint8_t>(ep.success ? 1 : 0));
    wr(f, static_cast<std::uint32_t>(ep.length()));
    write_floats(f, ep.actions.v);
    for (const Observation& o : ep.observations) write_observation(f, o);
  }
  check(f.good(), "save_dataset: write failure for '" + path + "'");

  json manifest;
  manifest["profile"] = profile_to_json(ds.profile);
  json tasks = json::array();
  for (TaskId t : ds.tasks) tasks.push_back(task_name(t));
  manifest["tasks"] = tasks;
  manifest["n_demos_per_task"] = ds.n_demos_per_task;
  manifest["seed"] = ds.seed;
  manifest["episodes"] = ds.episodes.size();
  manifest["action_max"] = ds.config.action_max;
  manifest["episode_cap"] = ds.config.episode_cap;
  manifest["n_tool_points"] = ds.config.n_tool_points;
  manifest["n_obj_points"] = ds.config.n_obj_points;
  std::ofstream mf(path + ".manifest.json");
  check(mf.good(), "save_dataset: cannot open manifest for '" + path + "'");
  mf << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "load_dataset: cannot open '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  check(std::memcmp(magic, "TCDS", 4) == 0,
        "load_dataset: '" + path + "' is not a dataset file");
  auto version = rd<std::uint32_t>(f);
  check(version == 1, "load_dataset: unsupported version");
  Dataset ds;
  auto count = rd<std::uint64_t>(f);
  ds.episodes.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Episode ep;
    ep.task = static_cast<TaskId>(rd<std::uint8_t>(f));
    auto dlen = rd<std::uint32_t>(f);
    ep.domain.resize(dlen);
    f.read(ep.domain.data(), dlen);
    ep.scene_seed = rd<std::uint64_t>(f);
    ep.success = rd<std::uint8_t>(f) != 0;
    auto L = rd<std::uint32_t>(f);
    ep.actions = nd::Tensor({static_cast<int>(L), 2});
    ep.actions.v = read_floats(f);
    ep.observations.reserve(L);
    for (std::uint32_t t = 0; t < L; ++t)
      ep.observations.push_back(read_observation(f));
    ds.episodes.push_back(std::move(ep));
  }
  check(f.good(), "load_dataset: truncated file '" + path + "'");

  std::ifstream mf(path + ".manifest.json");
  if (mf.good()) {
    json manifest = json::parse(mf);
    ds.profile = profile_from_json(manifest.at("profile"));
    for (const auto& t : manifest.at("tasks"))
      ds.tasks.push_back(task_from_name(t.get<std::string>()));
    ds.n_demos_per_task = manifest.at("n_demos_per_task");
    ds.seed = manifest.at("seed");
    ds.config.action_max = manifest.at("action_max");
    ds.config.episode_cap = manifest.at("episode_cap");
    ds.config.n_tool_points = manifest.at("n_tool_points");
    ds.config.n_obj_points = manifest.at("n_obj_points");
  }
  return ds;
}

}  // namespace trajcomp::bench
