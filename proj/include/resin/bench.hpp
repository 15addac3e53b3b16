#pragma once

// Closed-loop scenario runner: sense, learn, fuse, plan, actuate, record.
// Also the baseline planners and the CSV / manifest writers.

#include <resin/fusion.hpp>
#include <resin/gp.hpp>
#include <resin/network.hpp>
#include <resin/planner.hpp>
#include <resin/scenario.hpp>
#include <resin/world.hpp>

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace resin {

inline constexpr const char* kManifestFormat = "resin-manifest/1";
inline constexpr const char* kVersion = "0.1.0";

struct MetricsRow {
  int step = 0;
  double mean_error = 0.0;                      // over every (sensor, target) pair
  std::vector<std::optional<double>> per_target;  // mean over sensors, by target slot
};

struct PairError {
  int step = 0;
  int sensor = 0;
  int target = 0;
  double error = 0.0;
};

struct TrajectoryRow {
  int step = 0;
  std::string entity;  // target | sensor | nominal
  int id = 0;
  int tau = 0;
  Vec2 position = Vec2::Zero();
};

struct ScenarioResult {
  PlannerKind planner = PlannerKind::Resin;
  std::vector<MetricsRow> metrics;
  std::vector<PairError> pairs;
  MessageLedger ledger;
  std::vector<TrajectoryRow> trajectories;
  int fallback_plans = 0;

  /// Seed-level summary: mean of the per-step aggregates.
  double mean_error() const {
    if (metrics.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : metrics) s += r.mean_error;
    return s / static_cast<double>(metrics.size());
  }
};

// ---------------------------------------------------------------------------
// Ground truth

/// Target states for steps 0 .. steps (inclusive); state[k][i] is target i.
inline std::vector<std::vector<TargetState>> simulate_targets(const std::vector<TrajectoryGenerator>& gens, int steps,
                                                              double dt, const Workspace& ws) {
  std::vector<std::vector<TargetState>> out(static_cast<std::size_t>(steps) + 1);
  std::vector<TargetState> cur(gens.size());
  std::vector<bool> spawned(gens.size(), false);
  for (std::size_t i = 0; i < gens.size(); ++i) cur[i].id = static_cast<int>(i);
  for (int k = 0; k <= steps; ++k) {
    for (std::size_t i = 0; i < gens.size(); ++i) {
      if (k > 0 && cur[i].active) cur[i] = step_target(gens[i], cur[i], (k - 1) * dt, dt, ws);
      if (!spawned[i] && k == gens[i].entry_step) {
        cur[i] = spawn_target(gens[i], static_cast<int>(i), dt);
        cur[i].active = ws.contains(cur[i].position);
        spawned[i] = true;
      }
    }
    out[static_cast<std::size_t>(k)] = cur;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Baselines

/// Proportional heading pursuit of the closest estimated target position.
/// With no estimate the sensor heads for the workspace centre.
inline ControlInput baseline_nearest(const SensorState& sensor, const std::vector<Vec2>& estimates,
                                     const PlanningContext& ctx) {
  Vec2 goal = ctx.workspace ? Vec2(0.5 * ctx.workspace->width, 0.5 * ctx.workspace->height) : sensor.position;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : estimates) {
    const double d = (e - sensor.position).norm();
    if (d < best) {
      best = d;
      goal = e;
    }
  }
  const std::vector<Vec2> g{goal};
  return pursuit_controls(sensor, g, 0.0, ctx).front();
}

inline ControlInput baseline_random(const SensorLimits& limits, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> a(limits.accel_min, limits.accel_max);
  std::uniform_real_distribution<double> w(limits.turn_min, limits.turn_max);
  const double accel = a(rng);
  const double turn = w(rng);
  return {accel, turn};
}

/// Independent local planning with zero detection counts.
inline PlanResult baseline_no_fusion(const SensorState& sensor, std::span<const FusedTrajectory> local,
                                     std::span<const int> target_ids, const PlanningContext& ctx, PlanBudget budget,
                                     int k) {
  const int H = local.empty() ? 0 : local.front().pdf.horizon();
  if (H == 0) return {};
  const auto zeros = DetectionCounts::zeros(static_cast<std::uint32_t>(k), k, static_cast<int>(local.size()), H);
  const auto prior = make_planning_prior(local, target_ids, zeros, ctx.noise_cov);
  budget.seed = plan_seed(budget.seed, sensor.id, k);
  return optimize_local(sensor, prior, ctx, budget);
}

/// Joint plan for all sensors on the pooled prediction. Block-coordinate
/// compass search on the soft-count objective; total budget N times the
/// per-sensor budget.
inline std::vector<std::vector<ControlInput>> baseline_centralized(const std::vector<SensorState>& sensors,
                                                                   std::span<const FusedTrajectory> pooled,
                                                                   std::span<const int> target_ids,
                                                                   const PlanningContext& ctx, const PlanBudget& budget,
                                                                   int k) {
  const int H = pooled.empty() ? 0 : pooled.front().pdf.horizon();
  std::vector<std::vector<ControlInput>> u(sensors.size());
  if (H == 0) {
    for (auto& c : u) c.assign(1, ControlInput{});
    return u;
  }
  const auto zeros = DetectionCounts::zeros(static_cast<std::uint32_t>(k), k, static_cast<int>(pooled.size()), H);
  const auto prior = make_planning_prior(pooled, target_ids, zeros, ctx.noise_cov);

  opt::Point lower, upper;
  for (int t = 0; t < H; ++t) {
    lower.insert(lower.end(), {ctx.limits.accel_min, ctx.limits.turn_min});
    upper.insert(upper.end(), {ctx.limits.accel_max, ctx.limits.turn_max});
  }
  auto nearest_order = [&](const SensorState& s) {
    std::vector<std::pair<double, std::size_t>> near;
    for (std::size_t i = 0; i < prior.targets.size(); ++i)
      near.emplace_back((prior.targets[i].nominal.front() - s.position).norm(), i);
    std::stable_sort(near.begin(), near.end());
    return near;
  };
  for (std::size_t j = 0; j < sensors.size(); ++j) {
    const auto near = nearest_order(sensors[j]);
    const auto& goal = prior.targets[near.front().second].nominal;
    u[j] = pursuit_controls(sensors[j], goal, 0.5 * sensors[j].sensing_radius, ctx);
  }

  std::mt19937_64 rng(budget.seed * 0xbf58476d1ce4e5b9ULL + static_cast<std::uint64_t>(k));
  constexpr int kSweeps = 2;
  opt::CompassOptions co;
  co.max_evaluations = std::max(1, budget.max_evaluations / kSweeps);
  co.local_starts = budget.local_starts;
  for (int sweep = 0; sweep < kSweeps; ++sweep) {
    for (std::size_t j = 0; j < sensors.size(); ++j) {
      std::vector<opt::Point> seeds{detail::pack(u[j]), opt::Point(static_cast<std::size_t>(2 * H), 0.0)};
      const auto near = nearest_order(sensors[j]);
      for (int p = 0; p < std::min<int>(budget.pursuit_seeds, static_cast<int>(near.size())); ++p)
        seeds.push_back(detail::pack(pursuit_controls(
            sensors[j], prior.targets[near[static_cast<std::size_t>(p)].second].nominal,
            0.5 * sensors[j].sensing_radius, ctx)));
      for (int r = 0; r < budget.random_starts; ++r) {
        opt::Point x(static_cast<std::size_t>(2 * H));
        for (std::size_t d = 0; d < x.size(); ++d)
          x[d] = std::uniform_real_distribution<double>(lower[d], upper[d])(rng);
        seeds.push_back(std::move(x));
      }
      auto trial = u;
      const auto best = opt::maximize_box(
          [&](const opt::Point& x) {
            trial[j] = detail::unpack(x);
            return joint_objective(trial, sensors, prior, ctx);
          },
          lower, upper, seeds, co);
      u[j] = detail::unpack(best.x);
    }
  }
  return u;
}

// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<TreeTopology> fusion_groups(const ScenarioConfig& c, const std::vector<SensorState>& sensors) {
  std::map<int, Vec2> pos;
  for (const auto& s : sensors) pos[s.id] = s.position;
  if (c.topology == TopologyMode::StaticConfig) return {build_topology(pos, c.topology, c.static_tree)};
  return proximity_groups(pos, c.connectivity_radius);
}

inline double pair_error(const TrajectoryGaussian& g, const std::vector<std::vector<TargetState>>& truth, int i,
                         int k) {
  double s = 0.0;
  int n = 0;
  for (int t = 0; t < g.horizon(); ++t) {
    const std::size_t step = static_cast<std::size_t>(k + 1 + t);
    if (step >= truth.size()) break;
    const auto& st = truth[step][static_cast<std::size_t>(i)];
    if (!st.active) continue;
    s += (g.mean_at(t) - st.position).norm();
    ++n;
  }
  return n == 0 ? -1.0 : s / n;
}

}  // namespace detail

inline ScenarioResult run_scenario(const ScenarioConfig& c) {
  c.validate();
  const int H = c.horizon;
  const int N = static_cast<int>(c.sensors.size());
  const int M = static_cast<int>(c.targets.size());
  const auto truth = simulate_targets(c.targets, c.steps + H, c.dt, c.workspace);

  ScenarioResult res;
  res.planner = c.planner;
  const bool pooled_mode = c.planner == PlannerKind::Centralized;

  std::vector<SensorState> sensors = c.sensors;
  std::vector<std::vector<GpModel>> local;  // [sensor][target]
  std::vector<std::vector<bool>> dirty;
  std::vector<GpModel> pooled;
  std::vector<bool> pooled_dirty(static_cast<std::size_t>(M), false);
  auto blank = [&](int j, int i) {
    GpModel m;
    m.sensor_id = j;
    m.target_id = i;
    m.params = c.gp.initial;
    m.window_cap = c.gp.window_cap;
    return m;
  };
  for (int j = 0; j < N; ++j) {
    local.emplace_back();
    dirty.emplace_back(static_cast<std::size_t>(M), false);
    for (int i = 0; i < M; ++i) local.back().push_back(blank(j, i));
  }
  for (int i = 0; i < M; ++i) pooled.push_back(blank(-1, i));

  // Last observation per (sensor, target) for the nearest-target baseline.
  std::vector<std::vector<std::optional<Measurement>>> last_seen(
      static_cast<std::size_t>(N), std::vector<std::optional<Measurement>>(static_cast<std::size_t>(M)));

  PlanningContext ctx;
  ctx.limits = c.limits;
  ctx.workspace = c.workspace;
  ctx.dt = c.dt;
  ctx.noise_cov = Mat2::Identity() * c.dt * c.dt * c.noise_std * c.noise_std;
  ctx.psi = c.psi;

  for (int k = 0; k < c.steps; ++k) {
    const auto& now = truth[static_cast<std::size_t>(k)];

    // sense and ingest
    for (int j = 0; j < N; ++j) {
      auto rng = stream_rng(c.seed, k, j);
      for (const auto& m : sense(sensors[static_cast<std::size_t>(j)], now, k, c.noise_std, rng)) {
        const auto ju = static_cast<std::size_t>(j);
        const auto iu = static_cast<std::size_t>(m.target_id);
        last_seen[ju][iu] = m;
        if (pooled_mode) {
          pooled[iu].add({m.observed_position, m.time_step * c.dt}, m.observed_velocity);
          pooled_dirty[iu] = true;
        } else {
          local[ju][iu].add({m.observed_position, m.time_step * c.dt}, m.observed_velocity);
          dirty[ju][iu] = true;
        }
      }
    }

    if (k > 0 && k % c.gp.refit_period == 0) {
      for (int i = 0; i < M; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        if (pooled_mode) {
          if (pooled_dirty[iu]) pooled[iu].params = fit_hyperparameters(pooled[iu], c.gp.fit);
          pooled_dirty[iu] = false;
          continue;
        }
        for (int j = 0; j < N; ++j) {
          const auto ju = static_cast<std::size_t>(j);
          if (dirty[ju][iu]) local[ju][iu].params = fit_hyperparameters(local[ju][iu], c.gp.fit);
          dirty[ju][iu] = false;
        }
      }
    }

    std::vector<int> ids;
    for (int i = 0; i < M; ++i)
      if (now[static_cast<std::size_t>(i)].active) ids.push_back(i);

    for (const auto& s : sensors) res.trajectories.push_back({k, "sensor", s.id, 0, s.position});
    for (int i : ids) res.trajectories.push_back({k, "target", i, 0, now[static_cast<std::size_t>(i)].position});

    // predictions held by each sensor, by active-target slot
    auto local_pdf = [&](const GpModel& m, int i) {
      FusedTrajectory f;
      f.pdf = local_trajectory_pdf(m, now[static_cast<std::size_t>(i)].position, k, H, c.dt);
      f.contributors = {m.sensor_id};
      f.prior_entropy = prior_entropy(m.params.signal_std, H, c.dt);
      return f;
    };
    std::vector<std::vector<FusedTrajectory>> held(static_cast<std::size_t>(N));
    std::vector<TreeTopology> groups;
    if (pooled_mode) {
      std::vector<FusedTrajectory> shared;
      for (int i : ids) shared.push_back(local_pdf(pooled[static_cast<std::size_t>(i)], i));
      for (auto& h : held) h = shared;
    } else {
      for (int j = 0; j < N; ++j)
        for (int i : ids) held[static_cast<std::size_t>(j)].push_back(local_pdf(local[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)], i));
      if (c.planner != PlannerKind::NoFusion && !ids.empty()) {
        groups = detail::fusion_groups(c, sensors);
        for (const auto& g : groups) {
          std::map<int, std::vector<FusedTrajectory>> in;
          for (int n : g.nodes) in[n] = held[static_cast<std::size_t>(n)];
          const auto fused = tree_fuse_targets(in, ids, g, c.fusion, &res.ledger, k);
          for (int n : g.nodes) held[static_cast<std::size_t>(n)] = fused;
        }
      }
    }

    // metrics
    {
      MetricsRow row;
      row.step = k;
      row.per_target.assign(static_cast<std::size_t>(M), std::nullopt);
      std::vector<double> tsum(static_cast<std::size_t>(M), 0.0);
      std::vector<int> tcount(static_cast<std::size_t>(M), 0);
      double sum = 0.0;
      int count = 0;
      for (int j = 0; j < N; ++j)
        for (std::size_t slot = 0; slot < ids.size(); ++slot) {
          const int i = ids[slot];
          const double e = detail::pair_error(held[static_cast<std::size_t>(j)][slot].pdf, truth, i, k);
          if (e < 0.0) continue;
          res.pairs.push_back({k, j, i, e});
          sum += e;
          ++count;
          tsum[static_cast<std::size_t>(i)] += e;
          ++tcount[static_cast<std::size_t>(i)];
        }
      if (count > 0) {
        row.mean_error = sum / count;
        for (int i = 0; i < M; ++i)
          if (tcount[static_cast<std::size_t>(i)] > 0)
            row.per_target[static_cast<std::size_t>(i)] = tsum[static_cast<std::size_t>(i)] / tcount[static_cast<std::size_t>(i)];
        res.metrics.push_back(std::move(row));
      }
    }
    if (!held.empty())
      for (std::size_t slot = 0; slot < ids.size(); ++slot)
        for (int t = 0; t < H; ++t)
          res.trajectories.push_back({k, "nominal", ids[slot], t + 1, held.front()[slot].pdf.mean_at(t)});

    if (c.stationary) continue;

    // plan and actuate the first control
    std::vector<ControlInput> first(static_cast<std::size_t>(N));
    switch (c.planner) {
      case PlannerKind::Resin: {
        if (ids.empty()) break;
        for (const auto& g : groups) {
          std::map<int, SensorState> members;
          for (int n : g.nodes) members[n] = sensors[static_cast<std::size_t>(n)];
          const auto order = c.order == PlanningOrder::DepthFirst ? g.depth_first_order() : g.nodes;
          const auto& fused = held[static_cast<std::size_t>(g.root)];
          auto budget = c.budget;
          budget.seed = c.seed;
          const auto round =
              sequential_round(members, fused, ids, order, ctx, budget, &g, &res.ledger, static_cast<std::uint32_t>(k));
          for (const auto& [j, plan] : round.plans) {
            first[static_cast<std::size_t>(j)] = plan.controls.front();
            res.fallback_plans += plan.fallback_pursuit ? 1 : 0;
          }
        }
        break;
      }
      case PlannerKind::Centralized: {
        if (ids.empty()) break;
        auto budget = c.budget;
        budget.seed = c.seed;
        const auto u = baseline_centralized(sensors, held.front(), ids, ctx, budget, k);
        const auto tree = detail::fusion_groups(c, sensors);
        for (const auto& g : tree)
          for (int n : g.nodes)
            if (n != g.root)
              res.ledger.route(k, g.root, n, MessageKind::PlanBroadcast, 8 + 16 * static_cast<std::size_t>(H), g);
        for (int j = 0; j < N; ++j) first[static_cast<std::size_t>(j)] = u[static_cast<std::size_t>(j)].front();
        break;
      }
      case PlannerKind::NoFusion: {
        if (ids.empty()) break;
        for (int j = 0; j < N; ++j) {
          auto budget = c.budget;
          budget.seed = c.seed;
          const auto plan = baseline_no_fusion(sensors[static_cast<std::size_t>(j)], held[static_cast<std::size_t>(j)],
                                               ids, ctx, budget, k);
          first[static_cast<std::size_t>(j)] = plan.controls.front();
          res.fallback_plans += plan.fallback_pursuit ? 1 : 0;
        }
        break;
      }
      case PlannerKind::Nearest: {
        for (int j = 0; j < N; ++j) {
          std::vector<Vec2> est;
          for (const auto& m : last_seen[static_cast<std::size_t>(j)]) {
            if (!m) continue;
            const double age = (k - m->time_step) * c.dt;
            est.push_back(c.workspace.clamp(m->observed_position + m->observed_velocity * age));
          }
          first[static_cast<std::size_t>(j)] = baseline_nearest(sensors[static_cast<std::size_t>(j)], est, ctx);
        }
        break;
      }
      case PlannerKind::Random: {
        for (int j = 0; j < N; ++j) {
          auto rng = stream_rng(c.seed, k, 7000 + j);
          first[static_cast<std::size_t>(j)] = baseline_random(c.limits, rng);
        }
        break;
      }
    }
    for (int j = 0; j < N; ++j)
      sensors[static_cast<std::size_t>(j)] =
          step_sensor(sensors[static_cast<std::size_t>(j)], first[static_cast<std::size_t>(j)], c.dt, c.limits, c.workspace);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Output

inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// FNV-1a over the canonical (sorted-key) JSON dump.
inline std::uint64_t config_hash(const nlohmann::json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline void write_metrics_csv(std::ostream& os, const ScenarioResult& r, int targets) {
  os << "step,planner,mean_error";
  for (int i = 0; i < targets; ++i) os << ",target_" << i;
  os << '\n';
  for (const auto& row : r.metrics) {
    os << row.step << ',' << planner_name(r.planner) << ',' << fmt_num(row.mean_error);
    for (const auto& e : row.per_target) {
      os << ',';
      if (e) os << fmt_num(*e);
    }
    os << '\n';
  }
}

inline void write_pairs_csv(std::ostream& os, const ScenarioResult& r) {
  os << "step,sensor,target,error\n";
  for (const auto& p : r.pairs) os << p.step << ',' << p.sensor << ',' << p.target << ',' << fmt_num(p.error) << '\n';
}

inline void write_trajectories_csv(std::ostream& os, const ScenarioResult& r) {
  os << "step,entity,id,tau,x,y\n";
  for (const auto& t : r.trajectories)
    os << t.step << ',' << t.entity << ',' << t.id << ',' << t.tau << ',' << fmt_num(t.position.x()) << ','
       << fmt_num(t.position.y()) << '\n';
}

inline nlohmann::json make_manifest(const nlohmann::json& config_doc, const ScenarioResult& r) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(config_doc)));
  nlohmann::json m;
  m["format"] = kManifestFormat;
  m["version"] = kVersion;
  m["config_hash"] = hash;
  m["seed"] = config_doc.at("seed");
  m["planner"] = std::string(planner_name(r.planner));
  m["mean_error"] = r.mean_error();
  m["config"] = config_doc;
  return m;
}

/// Unwraps a run manifest into the config document it records.
inline nlohmann::json config_document(const nlohmann::json& j) {
  if (j.is_object() && j.value("format", "") == kManifestFormat) return j.at("config");
  return j;
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Writes metrics.csv, pairs.csv, ledger.csv, trajectories.csv and
/// manifest.json into `dir`.
inline void emit_outputs(const std::filesystem::path& dir, const nlohmann::json& config_doc, const ScenarioResult& r,
                         int targets) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(dir.string() + ": " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw Error((dir / name).string() + ": cannot write");
    return f;
  };
  {
    auto f = open("metrics.csv");
    write_metrics_csv(f, r, targets);
  }
  {
    auto f = open("pairs.csv");
    write_pairs_csv(f, r);
  }
  {
    auto f = open("ledger.csv");
    r.ledger.write_csv(f);
  }
  {
    auto f = open("trajectories.csv");
    write_trajectories_csv(f, r);
  }
  {
    auto f = open("manifest.json");
    f << make_manifest(config_doc, r).dump(2) << '\n';
  }
}

}  // namespace resin
