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

#include "trajcomp/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace trajcomp {

using nlohmann::json;

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::kState:
      return "state";
    case Modality::kPointSet:
      return "pointset";
    case Modality::kGrid:
      return "grid";
  }
  return "?";
}

static Modality modality_from_name(const std::string& s) {
  if (s == "state") return Modality::kState;
  if (s == "pointset") return Modality::kPointSet;
  if (s == "grid") return Modality::kGrid;
  fail("unknown modality '" + s + "'");
}

Trajectory normalize(const nd::Tensor& raw, const ActionBounds& bounds) {
  check(raw.shape.size() == 2, "normalize: H x d input required");
  int H = raw.shape[0], d = raw.shape[1];
  check(static_cast<int>(bounds.lo.size()) == d,
        "normalize: bounds dimension mismatch");
  Trajectory tau(H, d);
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < d; ++j) {
      float lo = bounds.lo[j], hi = bounds.hi[j];
      float range = hi - lo;
      float x = raw.at(i, j);
      check(std::isfinite(x), "normalize: non-finite action");
      check(x >= lo - 0.1f * range && x <= hi + 0.1f * range,
            "normalize: action " + std::to_string(x) + " at (" +
                std::to_string(i) + "," + std::to_string(j) +
                ") violates bounds by more than 10% of range");
      tau.a.at(i, j) = 2.0f * (x - lo) / range - 1.0f;
    }
  }
  return tau;
}

nd::Tensor denormalize(const Trajectory& tau, const ActionBounds& bounds) {
  check(static_cast<int>(bounds.lo.size()) == tau.d,
        "denormalize: bounds dimension mismatch");
  nd::Tensor raw({tau.H, tau.d});
  for (int i = 0; i < tau.H; ++i)
    for (int j = 0; j < tau.d; ++j)
      raw.at(i, j) = bounds.lo[j] +
                     (tau.a.at(i, j) + 1.0f) * 0.5f *
                         (bounds.hi[j] - bounds.lo[j]);
  return raw;
}

DiffusionPolicy::DiffusionPolicy(PolicyConfig config, ActionBounds bounds)
    : config_(std::move(config)),
      bounds_(std::move(bounds)),
      schedule_(build_schedule(config_.T, ScheduleKind::kSquaredCosineCapped,
                               config_.beta_end)),
      params_(config_.seed) {
  check(static_cast<int>(bounds_.lo.size()) == config_.d &&
            static_cast<int>(bounds_.hi.size()) == config_.d,
        "DiffusionPolicy: bounds dimension mismatch");
  for (int j = 0; j < config_.d; ++j)
    check(bounds_.lo[j] < bounds_.hi[j],
          "DiffusionPolicy: bounds lo >= hi at dim " + std::to_string(j));
  check(!config_.modalities.empty(), "DiffusionPolicy: no modalities");
  // Task table covers num_tasks rows plus one fixed null-task row; both
  // branches of classifier-free guidance read the same table.
  params_.add("task.table", {config_.task_dim, config_.num_tasks + 1});
  for (Modality m : config_.modalities) build_net(m);
  classifier_free_ = config_.cf_dropout > 0.0f;
}

void DiffusionPolicy::build_net(Modality m) {
  ModalityNet net;
  net.modality = m;
  nd::Graph& g = net.graph;
  int embed = -1;
  switch (m) {
    case Modality::kState: {
      net.obs_in = g.input({config_.state_dim});
      int h = g.tanh(g.linear(params_, net.obs_in, "enc.state.l1", 64));
      embed = g.linear(params_, h, "enc.state.l2", config_.obs_dim);
      break;
    }
    case Modality::kPointSet: {
      net.obs_in = g.input({config_.n_points, PointSet::kChannels});
      int h1 = g.tanh(
          g.linear(params_, net.obs_in, "enc.point.l1", config_.point_hidden));
      int h2 = g.tanh(g.linear(params_, h1, "enc.point.l2", config_.obs_dim));
      int pooled = g.max_rows(h2);
      embed = g.linear(params_, pooled, "enc.point.head", config_.obs_dim);
      break;
    }
    case Modality::kGrid: {
      int n = config_.grid_c * config_.grid_h * config_.grid_w;
      net.obs_in = g.input({n});
      int h = g.tanh(g.linear(params_, net.obs_in, "enc.grid.l1", 64));
      embed = g.linear(params_, h, "enc.grid.l2", config_.obs_dim);
      break;
    }
  }
  net.embed_node = embed;
  net.traj_in = g.input({config_.H * config_.d});
  net.t_in = g.input({1});
  net.task_in = g.input({config_.num_tasks + 1});
  int tfeat = g.time_embed(net.t_in, config_.time_dim);
  // Task table realized as a bias-free linear layer over the one-hot label;
  // every modality graph shares the same table tensor.
  int task_param = g.param(params_, "task.table");
  int temb = g.linear_shared(net.task_in, task_param, config_.task_dim);
  int trunk_in = g.concat({net.traj_in, tfeat, embed, temb});
  int t1 = g.relu(g.linear(params_, trunk_in, "trunk.l1", config_.trunk_hidden));
  int t2 = g.relu(g.linear(params_, t1, "trunk.l2", config_.trunk_hidden));
  net.eps_node = g.linear(params_, t2, "trunk.out", config_.H * config_.d);
  net.target_in = g.input({config_.H * config_.d});
  net.loss_node = g.mse(net.eps_node, net.target_in);
  nets_.push_back(std::move(net));
}

const DiffusionPolicy::ModalityNet& DiffusionPolicy::net_for(
    Modality m) const {
  for (const auto& n : nets_)
    if (n.modality == m) return n;
  fail("DiffusionPolicy(" + config_.domain_id + "): observation modality '" +
       modality_name(m) + "' not supported; policy handles {" +
       [&] {
         std::string s;
         for (const auto& n : nets_) {
           if (!s.empty()) s += ",";
           s += modality_name(n.modality);
         }
         return s;
       }() +
       "}");
}

nd::Tensor DiffusionPolicy::obs_tensor(const Observation& obs) const {
  switch (obs.modality()) {
    case Modality::kState: {
      const auto& sv = std::get<StateVec>(obs.data);
      check(static_cast<int>(sv.v.size()) == config_.state_dim,
            "obs_tensor: state dimension mismatch");
      nd::Tensor t({config_.state_dim});
      t.v = sv.v;
      return t;
    }
    case Modality::kPointSet: {
      const auto& ps = std::get<PointSet>(obs.data);
      check(ps.n == config_.n_points, "obs_tensor: point count mismatch (" +
                                          std::to_string(ps.n) + " vs " +
                                          std::to_string(config_.n_points) +
                                          ")");
      return ps.pts;
    }
    case Modality::kGrid: {
      const auto& gi = std::get<GridImage>(obs.data);
      int n = config_.grid_c * config_.grid_h * config_.grid_w;
      check(static_cast<int>(gi.v.size()) == n,
            "obs_tensor: grid size mismatch");
      nd::Tensor t({n});
      t.v = gi.v;
      return t;
    }
  }
  fail("unreachable");
}

nd::Tensor DiffusionPolicy::task_onehot(const TaskLabel& task) const {
  nd::Tensor t({config_.num_tasks + 1});
  if (task.null_task) {
    t.v[config_.num_tasks] = 1.0f;
  } else {
    check(task.id >= 0 && task.id < config_.num_tasks,
          "task_onehot: task id " + std::to_string(task.id) + " out of range");
    t.v[task.id] = 1.0f;
  }
  return t;
}

std::vector<nd::Tensor> DiffusionPolicy::pack_inputs(
    const ModalityNet& net, const Observation& obs, const Trajectory& tau,
    int t, const TaskLabel& task, const nd::Tensor* target) const {
  (void)net;
  std::vector<nd::Tensor> in;
  in.push_back(obs_tensor(obs));
  nd::Tensor flat({config_.H * config_.d});
  check(tau.a.numel() == flat.numel(), "pack_inputs: trajectory shape");
  flat.v = tau.a.v;
  in.push_back(std::move(flat));
  nd::Tensor tt({1});
  tt.v[0] = static_cast<float>(t) / static_cast<float>(config_.T);
  in.push_back(std::move(tt));
  in.push_back(task_onehot(task));
  nd::Tensor tgt({config_.H * config_.d});
  if (target) tgt.v = target->v;
  in.push_back(std::move(tgt));
  return in;
}

std::vector<float> DiffusionPolicy::encode(const Observation& obs) const {
  const ModalityNet& net = net_for(obs.modality());
  Trajectory zero(config_.H, config_.d);
  auto in = pack_inputs(net, obs, zero, 0, TaskLabel::null(), nullptr);
  nd::forward(net.graph, params_, in, scratch_);
  return scratch_.val[net.embed_node].v;
}

nd::Tensor DiffusionPolicy::predict_noise(const Trajectory& tau, int t,
                                          const Observation& obs,
                                          const TaskLabel& task) const {
  check(frozen_, "predict_noise: policy '" + config_.domain_id +
                     "' is not frozen; sampling from a training policy is "
                     "disallowed");
  check(t >= 0 && t < config_.T, "predict_noise: step out of range");
  const ModalityNet& net = net_for(obs.modality());
  auto in = pack_inputs(net, obs, tau, t, task, nullptr);
  nd::forward(net.graph, params_, in, scratch_);
  nd::Tensor out({config_.H, config_.d});
  out.v = scratch_.val[net.eps_node].v;
  check(all_finite(out.v), "predict_noise: non-finite output");
  return out;
}

float DiffusionPolicy::train_step(const std::vector<TrainSample>& batch,
                                  Rng& rng) {
  check(!frozen_, "train_step: policy '" + config_.domain_id + "' is frozen");
  check(!batch.empty(), "train_step: empty batch");
  std::map<std::string, nd::Tensor> grads;
  double loss_acc = 0.0;
  std::uniform_int_distribution<int> t_dist(0, config_.T - 1);
  std::uniform_real_distribution<float> u01(0.0f, 1.0f);
  for (const TrainSample& s : batch) {
    int t = t_dist(rng);
    nd::Tensor eps({config_.H, config_.d});
    for (float& x : eps.v) x = normal_sample(rng);
    TaskLabel task = s.task;
    if (!task.null_task) {
      dropout_total_ += 1;
      if (u01(rng) < config_.cf_dropout) {
        task = TaskLabel::null();
        dropout_null_ += 1;
      }
    }
    Trajectory noisy(config_.H, config_.d);
    noisy.a = forward_noise(s.tau0.a, t, eps, schedule_);
    const ModalityNet& net = net_for(s.obs.modality());
    nd::Tensor target({config_.H * config_.d});
    target.v = eps.v;
    auto in = pack_inputs(net, s.obs, noisy, t, task, &target);
    nd::forward(net.graph, params_, in, scratch_);
    loss_acc += scratch_.val[net.loss_node].v[0];
    nd::backward(net.graph, params_, net.loss_node, scratch_, grads);
  }
  float inv = 1.0f / static_cast<float>(batch.size());
  for (auto& [name, g] : grads)
    for (float& x : g.v) x *= inv;
  float loss = static_cast<float>(loss_acc / batch.size());
  check(std::isfinite(loss),
        "train_step: NaN loss at optimizer step " + std::to_string(opt_.step));
  nd::opt_step(params_, grads, opt_);
  return loss;
}

Trajectory DiffusionPolicy::sample(const Observation& obs,
                                   const TaskLabel& task,
                                   const SamplerConfig& sampler,
                                   Rng& rng) const {
  check(frozen_, "sample: policy '" + config_.domain_id + "' is not frozen");
  ScoreFn score = [&](const nd::Tensor& tau, int t) {
    Trajectory wrapped(config_.H, config_.d);
    wrapped.a = tau;
    return predict_noise(wrapped, t, obs, task);
  };
  nd::Tensor out = run_reverse(schedule_, sampler, config_.H, config_.d,
                               score, rng);
  Trajectory tau(config_.H, config_.d);
  for (long i = 0; i < out.numel(); ++i)
    tau.a.v[i] = std::clamp(out.v[i], -1.0f, 1.0f);
  return tau;
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic, format version, JSON metadata, named float32
// little-endian tensors with shape headers. A human-readable manifest is
// written alongside.

namespace {
constexpr char kMagic[4] = {'T', 'C', 'P', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, const T& x) {
  f.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T x{};
  f.read(reinterpret_cast<char*>(&x), sizeof(T));
  return x;
}
}  // namespace

void DiffusionPolicy::save(const std::string& path) const {
  json meta;
  meta["format_version"] = kVersion;
  meta["domain_id"] = config_.domain_id;
  json mods = json::array();
  for (Modality m : config_.modalities) mods.push_back(modality_name(m));
  meta["modalities"] = mods;
  meta["H"] = config_.H;
  meta["d"] = config_.d;
  meta["T"] = config_.T;
  meta["beta_end"] = config_.beta_end;
  meta["num_tasks"] = config_.num_tasks;
  meta["cf_dropout"] = config_.cf_dropout;
  meta["seed"] = config_.seed;
  meta["state_dim"] = config_.state_dim;
  meta["n_points"] = config_.n_points;
  meta["grid"] = {config_.grid_c, config_.grid_h, config_.grid_w};
  meta["time_dim"] = config_.time_dim;
  meta["task_dim"] = config_.task_dim;
  meta["obs_dim"] = config_.obs_dim;
  meta["point_hidden"] = config_.point_hidden;
  meta["trunk_hidden"] = config_.trunk_hidden;
  meta["bounds_lo"] = bounds_.lo;
  meta["bounds_hi"] = bounds_.hi;
  meta["tensors"] = params_.names();

  std::ofstream f(path, std::ios::binary);
  check(f.good(), "save: cannot open '" + path + "'");
  f.write(kMagic, 4);
  write_pod(f, kVersion);
  std::string mstr = meta.dump();
  write_pod(f, static_cast<std::uint64_t>(mstr.size()));
  f.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  write_pod(f, static_cast<std::uint64_t>(params_.names().size()));
  for (const auto& name : params_.names()) {
    const nd::Tensor& t = params_.get(name);
    write_pod(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(f, static_cast<std::uint32_t>(t.shape.size()));
    for (int dshape : t.shape) write_pod(f, static_cast<std::int64_t>(dshape));
    write_pod(f, static_cast<std::uint64_t>(t.v.size()));
    f.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(float)));
  }
  check(f.good(), "save: write failure for '" + path + "'");

  std::ofstream mf(path + ".manifest.json");
  mf << meta.dump(2) << "\n";
}

std::unique_ptr<DiffusionPolicy> DiffusionPolicy::load(
    const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "load: cannot open '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  check(std::memcmp(magic, kMagic, 4) == 0,
        "load: '" + path + "' is not a policy checkpoint");
  auto version = read_pod<std::uint32_t>(f);
  check(version == kVersion, "load: checkpoint version " +
                                 std::to_string(version) + " unsupported (" +
                                 std::to_string(kVersion) + " expected)");
  auto mlen = read_pod<std::uint64_t>(f);
  std::string mstr(mlen, '\0');
  f.read(mstr.data(), static_cast<std::streamsize>(mlen));
  json meta = json::parse(mstr);

  PolicyConfig cfg;
  cfg.domain_id = meta.at("domain_id").get<std::string>();
  cfg.modalities.clear();
  for (const auto& m : meta.at("modalities"))
    cfg.modalities.push_back(modality_from_name(m.get<std::string>()));
  cfg.H = meta.at("H");
  cfg.d = meta.at("d");
  cfg.T = meta.at("T");
  cfg.beta_end = meta.at("beta_end");
  cfg.num_tasks = meta.at("num_tasks");
  cfg.cf_dropout = meta.at("cf_dropout");
  cfg.seed = meta.at("seed");
  cfg.state_dim = meta.at("state_dim");
  cfg.n_points = meta.at("n_points");
  cfg.grid_c = meta.at("grid")[0];
  cfg.grid_h = meta.at("grid")[1];
  cfg.grid_w = meta.at("grid")[2];
  cfg.time_dim = meta.at("time_dim");
  cfg.task_dim = meta.at("task_dim");
  cfg.obs_dim = meta.at("obs_dim");
  cfg.point_hidden = meta.at("point_hidden");
  cfg.trunk_hidden = meta.at("trunk_hidden");
  ActionBounds bounds;
  bounds.lo = meta.at("bounds_lo").get<std::vector<float>>();
  bounds.hi = meta.at("bounds_hi").get<std::vector<float>>();

  auto policy = std::make_unique<DiffusionPolicy>(cfg, bounds);
  auto count = read_pod<std::uint64_t>(f);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto nlen = read_pod<std::uint32_t>(f);
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    auto rank = read_pod<std::uint32_t>(f);
    std::vector<int> shape(rank);
    for (auto& s : shape) s = static_cast<int>(read_pod<std::int64_t>(f));
    auto n = read_pod<std::uint64_t>(f);
    nd::Tensor& t = policy->params_.get(name);
    check(t.shape == shape, "load: tensor '" + name + "' shape mismatch");
    check(t.v.size() == n, "load: tensor '" + name + "' size mismatch");
    f.read(reinterpret_cast<char*>(t.v.data()),
           static_cast<std::streamsize>(n * sizeof(float)));
  }
  check(f.good(), "load: truncated checkpoint '" + path + "'");
  policy->freeze();
  return policy;
}

}  // namespace trajcomp
