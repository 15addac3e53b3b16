#pragma once

// Scenario description and its JSON form ("resin-scenario/1").

#include <resin/fusion.hpp>
#include <resin/gp.hpp>
#include <resin/network.hpp>
#include <resin/planner.hpp>
#include <resin/world.hpp>

#include <json.hpp>

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace resin {

inline constexpr const char* kScenarioFormat = "resin-scenario/1";

enum class PlannerKind { Resin, Centralized, NoFusion, Nearest, Random };
enum class PlanningOrder { AscendingId, DepthFirst };

inline std::string_view planner_name(PlannerKind p) {
  switch (p) {
    case PlannerKind::Resin: return "resin";
    case PlannerKind::Centralized: return "centralized";
    case PlannerKind::NoFusion: return "no-fusion";
    case PlannerKind::Nearest: return "nearest-target";
    case PlannerKind::Random: return "random";
  }
  return "unknown";
}

inline PlannerKind parse_planner(const std::string& s) {
  for (auto p : {PlannerKind::Resin, PlannerKind::Centralized, PlannerKind::NoFusion, PlannerKind::Nearest,
                 PlannerKind::Random})
    if (planner_name(p) == s) return p;
  if (s == "nearest") return PlannerKind::Nearest;
  throw ConfigError("planner: unknown planner '" + s + "'");
}

struct GpSettings {
  std::size_t window_cap = 150;
  int refit_period = 10;
  KernelParams initial;
  FitOptions fit;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::uint64_t seed = 0;
  double dt = 0.5;
  int steps = 80;
  int horizon = 5;
  Workspace workspace;
  double noise_std = 0.1;
  std::vector<SensorState> sensors;
  bool stationary = false;
  SensorLimits limits;
  std::vector<TrajectoryGenerator> targets;
  GpSettings gp;
  PlannerKind planner = PlannerKind::Resin;
  PlanningOrder order = PlanningOrder::AscendingId;
  TopologyMode topology = TopologyMode::ProximityMst;
  std::optional<StaticTreeConfig> static_tree;
  double connectivity_radius = std::numeric_limits<double>::infinity();
  FusionOptions fusion;
  PlanBudget budget;
  PsiShape psi = PsiShape::Bump;

  void validate() const;
};

namespace detail {

[[noreturn]] inline void config_fail(const std::string& field, const std::string& what) {
  throw ConfigError(field + ": " + what);
}

inline const nlohmann::json& required(const nlohmann::json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) config_fail(path + key, "required field missing");
  return j.at(key);
}

template <class T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback, const std::string& path) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    config_fail(path + key, "wrong type");
  }
}

inline Vec2 get_vec2(const nlohmann::json& j, const std::string& key, Vec2 fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    config_fail(path + key, "expected [x, y]");
  return {v[0].get<double>(), v[1].get<double>()};
}

inline std::array<double, 2> get_range(const nlohmann::json& j, const std::string& key, std::array<double, 2> fallback,
                                       const std::string& path) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    config_fail(path + key, "expected [min, max]");
  const std::array<double, 2> r{v[0].get<double>(), v[1].get<double>()};
  if (!(r[0] <= r[1])) config_fail(path + key, "min exceeds max");
  return r;
}

inline TrajectoryGenerator parse_target(const nlohmann::json& t, const std::string& path, std::uint64_t seed) {
  TrajectoryGenerator g;
  const std::string kind = get_or<std::string>(t, "kind", "", path);
  g.entry_step = get_or<int>(t, "entry_step", 0, path);
  if (t.contains("exit_step") && !t.at("exit_step").is_null()) g.exit_step = t.at("exit_step").get<int>();
  if (kind == "circle") {
    CirclePath c;
    c.center = get_vec2(t, "center", c.center, path);
    c.radius = get_or(t, "radius", c.radius, path);
    c.angular_rate = get_or(t, "angular_rate", c.angular_rate, path);
    c.phase = get_or(t, "phase", c.phase, path);
    if (!(c.radius > 0.0)) config_fail(path + "radius", "must be positive");
    g.shape = c;
  } else if (kind == "figure-eight") {
    FigureEightPath f;
    f.center = get_vec2(t, "center", f.center, path);
    f.half_width = get_or(t, "half_width", f.half_width, path);
    f.half_height = get_or(t, "half_height", f.half_height, path);
    f.rate = get_or(t, "rate", f.rate, path);
    f.phase = get_or(t, "phase", f.phase, path);
    g.shape = f;
  } else if (kind == "sine-lane") {
    SineLanePath s;
    s.start = get_vec2(t, "start", s.start, path);
    s.heading = get_or(t, "heading", s.heading, path);
    s.speed = get_or(t, "speed", s.speed, path);
    s.amplitude = get_or(t, "amplitude", s.amplitude, path);
    s.rate = get_or(t, "rate", s.rate, path);
    g.shape = s;
  } else if (kind == "straight-bounce") {
    StraightBouncePath b;
    b.a = get_vec2(t, "from", b.a, path);
    b.b = get_vec2(t, "to", b.b, path);
    b.rate = get_or(t, "rate", b.rate, path);
    b.phase = get_or(t, "phase", b.phase, path);
    g.shape = b;
  } else if (kind == "spiral") {
    SpiralPath s;
    s.center = get_vec2(t, "center", s.center, path);
    s.inner_radius = get_or(t, "inner_radius", s.inner_radius, path);
    s.outer_radius = get_or(t, "outer_radius", s.outer_radius, path);
    s.angular_rate = get_or(t, "angular_rate", s.angular_rate, path);
    s.radial_rate = get_or(t, "radial_rate", s.radial_rate, path);
    s.phase = get_or(t, "phase", s.phase, path);
    g.shape = s;
  } else if (kind == "random-waypoint") {
    RandomWaypointPath w;
    w.lower = get_vec2(t, "lower", w.lower, path);
    w.upper = get_vec2(t, "upper", w.upper, path);
    w.speed = get_or(t, "speed", w.speed, path);
    w.legs = get_or(t, "legs", w.legs, path);
    w.seed = get_or<std::uint64_t>(t, "seed", seed, path);
    if (!(w.speed > 0.0)) config_fail(path + "speed", "must be positive");
    w.build();
    g.shape = w;
  } else if (kind == "straight") {
    StraightPath s;
    s.start = get_vec2(t, "start", s.start, path);
    s.velocity_ = get_vec2(t, "velocity", s.velocity_, path);
    g.shape = s;
  } else {
    config_fail(path + "kind", "unknown trajectory kind '" + kind + "'");
  }
  return g;
}

}  // namespace detail

inline void ScenarioConfig::validate() const {
  using detail::config_fail;
  workspace.validate();
  limits.validate();
  gp.initial.validate();
  if (!(dt > 0.0)) config_fail("dt", "must be positive");
  if (steps < 1) config_fail("steps", "must be at least 1");
  if (horizon < 1) config_fail("horizon", "must be at least 1");
  if (!(noise_std >= 0.0)) config_fail("noise_std", "must be non-negative");
  if (sensors.empty()) config_fail("sensors", "at least one sensor required");
  if (sensors.size() > 64) config_fail("sensors", "at most 64 sensors supported");
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const auto& s = sensors[i];
    const std::string p = "sensors[" + std::to_string(i) + "].";
    if (!(s.sensing_radius > 0.0)) config_fail(p + "sensing_radius", "must be positive");
    if (!workspace.contains(s.position)) config_fail(p + "position", "outside the workspace");
    if (s.speed < limits.speed_min || s.speed > limits.speed_max) config_fail(p + "speed", "outside speed limits");
  }
  if (targets.empty()) config_fail("targets", "at least one target required");
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (targets[i].entry_step < 0) config_fail("targets[" + std::to_string(i) + "].entry_step", "must be >= 0");
  if (gp.window_cap < 1) config_fail("gp.window_cap", "must be at least 1");
  if (gp.refit_period < 1) config_fail("gp.refit_period", "must be at least 1");
  if (budget.max_evaluations < 1) config_fail("budget.max_evaluations", "must be at least 1");
  if (topology == TopologyMode::StaticConfig && !static_tree) config_fail("topology.edges", "static topology needs edges");
}

/// Builds a config from JSON. Randomly placed sensors are drawn from the
/// scenario seed, so the same document always yields the same scenario.
inline ScenarioConfig parse_scenario(const nlohmann::json& j) {
  using detail::get_or;
  ScenarioConfig c;
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  const std::string format = get_or<std::string>(j, "format", "", "");
  if (format != kScenarioFormat)
    throw ConfigError("format: expected '" + std::string(kScenarioFormat) + "', got '" + format + "'");
  c.name = get_or<std::string>(j, "name", c.name, "");
  c.seed = detail::required(j, "seed", "").get<std::uint64_t>();
  c.dt = get_or(j, "dt", c.dt, "");
  c.steps = get_or(j, "steps", c.steps, "");
  c.horizon = get_or(j, "horizon", c.horizon, "");
  c.noise_std = get_or(j, "noise_std", c.noise_std, "");
  c.planner = parse_planner(get_or<std::string>(j, "planner", "resin", ""));

  const auto& ws = detail::required(j, "workspace", "");
  c.workspace.width = get_or(ws, "width", 0.0, "workspace.");
  c.workspace.height = get_or(ws, "height", 0.0, "workspace.");
  c.workspace.validate();

  const std::string order = get_or<std::string>(j, "planning_order", "ascending-id", "");
  if (order == "ascending-id") c.order = PlanningOrder::AscendingId;
  else if (order == "depth-first") c.order = PlanningOrder::DepthFirst;
  else detail::config_fail("planning_order", "expected 'ascending-id' or 'depth-first'");

  const std::string psi = get_or<std::string>(j, "psi", "bump", "");
  if (psi == "bump") c.psi = PsiShape::Bump;
  else if (psi == "monotone") c.psi = PsiShape::Monotone;
  else detail::config_fail("psi", "expected 'bump' or 'monotone'");

  if (j.contains("topology")) {
    const auto& t = j.at("topology");
    const std::string mode = get_or<std::string>(t, "mode", "proximity-mst", "topology.");
    if (mode == "proximity-mst") {
      c.topology = TopologyMode::ProximityMst;
    } else if (mode == "static") {
      c.topology = TopologyMode::StaticConfig;
      StaticTreeConfig st;
      st.root = get_or(t, "root", 0, "topology.");
      for (const auto& e : detail::required(t, "edges", "topology.")) {
        if (!e.is_array() || e.size() != 2) detail::config_fail("topology.edges", "expected [child, parent] pairs");
        st.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
      }
      c.static_tree = st;
    } else {
      detail::config_fail("topology.mode", "expected 'proximity-mst' or 'static'");
    }
    c.connectivity_radius = get_or(t, "connectivity_radius", c.connectivity_radius, "topology.");
  }

  if (j.contains("fusion")) c.fusion.chernoff_on_scaled = get_or(j.at("fusion"), "chernoff_on_scaled", true, "fusion.");

  if (j.contains("gp")) {
    const auto& g = j.at("gp");
    c.gp.window_cap = get_or<std::size_t>(g, "window_cap", c.gp.window_cap, "gp.");
    c.gp.fit.window_min = get_or<std::size_t>(g, "window_min", c.gp.fit.window_min, "gp.");
    c.gp.refit_period = get_or(g, "refit_period", c.gp.refit_period, "gp.");
    if (g.contains("initial")) {
      const auto& i = g.at("initial");
      c.gp.initial.signal_std = get_or(i, "signal_std", c.gp.initial.signal_std, "gp.initial.");
      c.gp.initial.length_space = get_or(i, "length_space", c.gp.initial.length_space, "gp.initial.");
      c.gp.initial.length_time = get_or(i, "length_time", c.gp.initial.length_time, "gp.initial.");
    }
    if (g.contains("bounds")) {
      const auto& b = g.at("bounds");
      c.gp.fit.signal_std = detail::get_range(b, "signal_std", c.gp.fit.signal_std, "gp.bounds.");
      c.gp.fit.length_space = detail::get_range(b, "length_space", c.gp.fit.length_space, "gp.bounds.");
      c.gp.fit.length_time = detail::get_range(b, "length_time", c.gp.fit.length_time, "gp.bounds.");
      for (double v : {c.gp.fit.signal_std[0], c.gp.fit.length_space[0], c.gp.fit.length_time[0]})
        if (!(v > 0.0)) detail::config_fail("gp.bounds", "lower bounds must be positive");
    }
  }
  c.gp.initial.noise_std = c.noise_std;

  if (j.contains("budget")) {
    const auto& b = j.at("budget");
    c.budget.max_evaluations = get_or(b, "max_evaluations", c.budget.max_evaluations, "budget.");
    c.budget.random_starts = get_or(b, "random_starts", c.budget.random_starts, "budget.");
    c.budget.local_starts = get_or(b, "local_starts", c.budget.local_starts, "budget.");
    c.budget.pursuit_seeds = get_or(b, "pursuit_seeds", c.budget.pursuit_seeds, "budget.");
  }
  c.budget.seed = c.seed;

  const auto& sj = detail::required(j, "sensors", "");
  c.stationary = get_or(sj, "stationary", false, "sensors.");
  const double radius = get_or(sj, "sensing_radius", 5.0, "sensors.");
  if (sj.contains("limits")) {
    const auto& l = sj.at("limits");
    const auto a = detail::get_range(l, "accel", {c.limits.accel_min, c.limits.accel_max}, "sensors.limits.");
    const auto w = detail::get_range(l, "turn_rate", {c.limits.turn_min, c.limits.turn_max}, "sensors.limits.");
    const auto v = detail::get_range(l, "speed", {c.limits.speed_min, c.limits.speed_max}, "sensors.limits.");
    c.limits = {a[0], a[1], w[0], w[1], v[0], v[1]};
  }
  const std::string placement = get_or<std::string>(sj, "placement", "random", "sensors.");
  if (placement == "random") {
    const int count = get_or(sj, "count", 0, "sensors.");
    if (count < 1) detail::config_fail("sensors.count", "must be at least 1");
    const double margin = get_or(sj, "margin", 0.0, "sensors.");
    auto rng = stream_rng(c.seed, -1, 0x5e45);
    std::uniform_real_distribution<double> ux(margin, c.workspace.width - margin);
    std::uniform_real_distribution<double> uy(margin, c.workspace.height - margin);
    std::uniform_real_distribution<double> uh(0.0, kTwoPi);
    for (int i = 0; i < count; ++i) {
      SensorState s;
      s.id = i;
      const double x = ux(rng);
      const double y = uy(rng);
      s.position = {x, y};
      s.heading = wrap_angle(uh(rng));
      s.speed = c.limits.speed_min;
      s.sensing_radius = radius;
      c.sensors.push_back(s);
    }
  } else if (placement == "explicit") {
    int id = 0;
    for (const auto& e : detail::required(sj, "states", "sensors.")) {
      const std::string p = "sensors.states[" + std::to_string(id) + "].";
      SensorState s;
      s.id = id++;
      s.position = {detail::required(e, "x", p).get<double>(), detail::required(e, "y", p).get<double>()};
      s.heading = wrap_angle(get_or(e, "heading", 0.0, p));
      s.speed = get_or(e, "speed", c.limits.speed_min, p);
      s.sensing_radius = get_or(e, "sensing_radius", radius, p);
      c.sensors.push_back(s);
    }
  } else {
    detail::config_fail("sensors.placement", "expected 'random' or 'explicit'");
  }

  int ti = 0;
  for (const auto& t : detail::required(j, "targets", "")) {
    const std::string p = "targets[" + std::to_string(ti) + "].";
    c.targets.push_back(detail::parse_target(t, p, c.seed * 1000003ULL + static_cast<std::uint64_t>(ti)));
    ++ti;
  }
  c.validate();
  return c;
}

/// Replaces the seed (and planner) of a config document before parsing.
inline nlohmann::json override_scenario(nlohmann::json j, std::optional<std::uint64_t> seed,
                                        std::optional<std::string> planner) {
  if (seed) j["seed"] = *seed;
  if (planner) j["planner"] = *planner;
  return j;
}

}  // namespace resin
