#pragma once

// Ground truth: target motion, unicycle sensors and FOV-gated velocity
// measurements.

#include <resin/core.hpp>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace resin {

struct Workspace {
  double width = 10.0;
  double height = 10.0;

  void validate() const {
    if (!(width > 0.0) || !(height > 0.0)) throw ConfigError("workspace: width and height must be positive");
  }
  bool contains(const Vec2& p) const {
    return p.x() >= 0.0 && p.x() <= width && p.y() >= 0.0 && p.y() <= height;
  }
  Vec2 clamp(const Vec2& p) const {
    return {std::clamp(p.x(), 0.0, width), std::clamp(p.y(), 0.0, height)};
  }
};

struct TargetState {
  int id = 0;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  bool active = false;
};

struct SensorState {
  int id = 0;
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
  double speed = 0.0;
  double sensing_radius = 5.0;
};

struct ControlInput {
  double accel = 0.0;
  double turn_rate = 0.0;
};

/// Box bounds on the control input and on the speed state.
struct SensorLimits {
  double accel_min = -5.0;
  double accel_max = 5.0;
  double turn_min = -std::numbers::pi / 6.0;
  double turn_max = std::numbers::pi / 6.0;
  double speed_min = 0.0;
  double speed_max = 3.0;

  void validate() const {
    if (!(accel_min <= accel_max) || !(turn_min <= turn_max) || !(speed_min <= speed_max) || speed_min < 0.0)
      throw ConfigError("sensor limits: inverted or negative bounds");
  }
  bool admits(const ControlInput& u) const {
    return u.accel >= accel_min && u.accel <= accel_max && u.turn_rate >= turn_min && u.turn_rate <= turn_max;
  }
  ControlInput clamp(const ControlInput& u) const {
    return {std::clamp(u.accel, accel_min, accel_max), std::clamp(u.turn_rate, turn_min, turn_max)};
  }
};

struct Measurement {
  int sensor_id = 0;
  int target_id = 0;
  int time_step = 0;
  Vec2 observed_position = Vec2::Zero();
  Vec2 observed_velocity = Vec2::Zero();
};

/// One unicycle step. Position integrates the pre-step speed and heading;
/// heading is wrapped to [0, 2pi) and speed clamped to the limits. When a
/// workspace is given the position is clamped into it.
inline SensorState step_sensor(const SensorState& s, const ControlInput& u, double dt, const SensorLimits& limits,
                               const std::optional<Workspace>& workspace = std::nullopt) {
  if (!limits.admits(u))
    throw BoundsError("control input (" + std::to_string(u.accel) + ", " + std::to_string(u.turn_rate) +
                      ") outside admissible box");
  SensorState next = s;
  next.position = s.position + s.speed * dt * Vec2(std::cos(s.heading), std::sin(s.heading));
  if (workspace) next.position = workspace->clamp(next.position);
  next.heading = wrap_angle(s.heading + u.turn_rate * dt);
  next.speed = std::clamp(s.speed + u.accel * dt, limits.speed_min, limits.speed_max);
  return next;
}

inline bool in_fov(const SensorState& sensor, const Vec2& point) {
  return (sensor.position - point).norm() <= sensor.sensing_radius;
}

// ---------------------------------------------------------------------------
// Trajectory generators. Each is a closed-form path p(t) with analytic
// velocity p'(t), t measured from the entry time.

struct CirclePath {
  Vec2 center{5.0, 5.0};
  double radius = 2.0;
  double angular_rate = 0.25;  // rad/s, signed
  double phase = 0.0;

  Vec2 position(double t) const {
    const double a = phase + angular_rate * t;
    return center + radius * Vec2(std::cos(a), std::sin(a));
  }
  Vec2 velocity(double t) const {
    const double a = phase + angular_rate * t;
    return radius * angular_rate * Vec2(-std::sin(a), std::cos(a));
  }
};

// Lemniscate of Gerono, axis-aligned.
struct FigureEightPath {
  Vec2 center{5.0, 5.0};
  double half_width = 3.0;
  double half_height = 1.5;
  double rate = 0.2;
  double phase = 0.0;

  Vec2 position(double t) const {
    const double a = phase + rate * t;
    return center + Vec2(half_width * std::sin(a), half_height * std::sin(2.0 * a));
  }
  Vec2 velocity(double t) const {
    const double a = phase + rate * t;
    return rate * Vec2(half_width * std::cos(a), 2.0 * half_height * std::cos(2.0 * a));
  }
};

// Constant drift along a heading with a sinusoidal lateral weave.
struct SineLanePath {
  Vec2 start{0.5, 5.0};
  double heading = 0.0;
  double speed = 0.8;
  double amplitude = 1.0;
  double rate = 0.5;

  Vec2 position(double t) const {
    const Vec2 dir(std::cos(heading), std::sin(heading));
    const Vec2 lat(-dir.y(), dir.x());
    return start + speed * t * dir + amplitude * std::sin(rate * t) * lat;
  }
  Vec2 velocity(double t) const {
    const Vec2 dir(std::cos(heading), std::sin(heading));
    const Vec2 lat(-dir.y(), dir.x());
    return speed * dir + amplitude * rate * std::cos(rate * t) * lat;
  }
};

// Back and forth between two endpoints with cosine easing, so velocity
// stays continuous through each reversal.
struct StraightBouncePath {
  Vec2 a{1.0, 1.0};
  Vec2 b{9.0, 9.0};
  double rate = 0.2;
  double phase = 0.0;

  Vec2 position(double t) const { return a + (b - a) * 0.5 * (1.0 - std::cos(phase + rate * t)); }
  Vec2 velocity(double t) const { return (b - a) * 0.5 * rate * std::sin(phase + rate * t); }
};

// Circular motion with a radius that breathes between inner and outer.
struct SpiralPath {
  Vec2 center{5.0, 5.0};
  double inner_radius = 1.0;
  double outer_radius = 3.0;
  double angular_rate = 0.3;
  double radial_rate = 0.08;
  double phase = 0.0;

  double radius(double t) const {
    return inner_radius + (outer_radius - inner_radius) * 0.5 * (1.0 - std::cos(radial_rate * t));
  }
  Vec2 position(double t) const {
    const double a = phase + angular_rate * t;
    return center + radius(t) * Vec2(std::cos(a), std::sin(a));
  }
  Vec2 velocity(double t) const {
    const double a = phase + angular_rate * t;
    const double dr = (outer_radius - inner_radius) * 0.5 * radial_rate * std::sin(radial_rate * t);
    return dr * Vec2(std::cos(a), std::sin(a)) + radius(t) * angular_rate * Vec2(-std::sin(a), std::cos(a));
  }
};

// Seeded waypoint tour inside a rectangle. Each leg is traversed with
// cosine easing (zero velocity at the waypoints), average speed `speed`.
struct RandomWaypointPath {
  Vec2 lower{1.0, 1.0};
  Vec2 upper{9.0, 9.0};
  double speed = 0.8;
  std::uint64_t seed = 1;
  int legs = 32;

  void build() {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(lower.x(), upper.x());
    std::uniform_real_distribution<double> uy(lower.y(), upper.y());
    waypoints_.clear();
    leg_start_.clear();
    for (int i = 0; i <= legs; ++i) {
      const double x = ux(rng);
      waypoints_.emplace_back(x, uy(rng));
    }
    double t = 0.0;
    for (int i = 0; i < legs; ++i) {
      leg_start_.push_back(t);
      t += std::max((waypoints_[i + 1] - waypoints_[i]).norm() / speed, 1e-3);
    }
    leg_start_.push_back(t);
  }

  Vec2 position(double t) const {
    const auto [i, u, T] = locate(t);
    const double s = 0.5 * (1.0 - std::cos(std::numbers::pi * u));
    return waypoints_[i] + s * (waypoints_[i + 1] - waypoints_[i]);
  }
  Vec2 velocity(double t) const {
    const auto [i, u, T] = locate(t);
    const double ds = 0.5 * std::numbers::pi * std::sin(std::numbers::pi * u) / T;
    return ds * (waypoints_[i + 1] - waypoints_[i]);
  }

 private:
  struct Where {
    std::size_t leg;
    double u;
    double duration;
  };
  Where locate(double t) const {
    if (waypoints_.size() < 2) throw StructuralError("random-waypoint path used before build()");
    const double total = leg_start_.back();
    if (t >= total) return {leg_start_.size() - 2, 1.0, leg_start_.back() - leg_start_[leg_start_.size() - 2]};
    const auto it = std::upper_bound(leg_start_.begin(), leg_start_.end(), std::max(t, 0.0));
    const std::size_t i = static_cast<std::size_t>(std::distance(leg_start_.begin(), it)) - 1;
    const double T = leg_start_[i + 1] - leg_start_[i];
    return {i, (std::max(t, 0.0) - leg_start_[i]) / T, T};
  }

  std::vector<Vec2> waypoints_;
  std::vector<double> leg_start_;
};

// Constant velocity. Not one of the catalogued motion patterns, but handy
// for tests and static targets (velocity zero).
struct StraightPath {
  Vec2 start{0.0, 0.0};
  Vec2 velocity_{1.0, 0.0};

  Vec2 position(double t) const { return start + velocity_ * t; }
  Vec2 velocity(double) const { return velocity_; }
};

using PathShape =
    std::variant<CirclePath, FigureEightPath, SineLanePath, StraightBouncePath, SpiralPath, RandomWaypointPath, StraightPath>;

inline std::string_view shape_name(const PathShape& s) {
  static constexpr std::string_view names[] = {"circle",      "figure-eight", "sine-lane", "straight-bounce",
                                                "spiral",      "random-waypoint", "straight"};
  return names[s.index()];
}

struct TrajectoryGenerator {
  PathShape shape = StraightPath{};
  int entry_step = 0;
  std::optional<int> exit_step;

  Vec2 position_at(double t, double dt) const {
    return std::visit([&](const auto& p) { return p.position(t - entry_step * dt); }, shape);
  }
  Vec2 velocity_at(double t, double dt) const {
    return std::visit([&](const auto& p) { return p.velocity(t - entry_step * dt); }, shape);
  }
};

/// State of a target at its entry step.
inline TargetState spawn_target(const TrajectoryGenerator& gen, int id, double dt) {
  const double t = gen.entry_step * dt;
  return {id, gen.position_at(t, dt), gen.velocity_at(t, dt), true};
}

/// Advances an active target from t to t + dt using the generator velocity
/// at the interval midpoint. Targets past their exit time, or that leave the
/// workspace, are deactivated with their position left unchanged.
inline TargetState step_target(const TrajectoryGenerator& gen, const TargetState& state, double t, double dt,
                               const std::optional<Workspace>& workspace = std::nullopt) {
  if (!state.active) return state;
  TargetState next = state;
  const double t_next = t + dt;
  if (gen.exit_step && t_next > *gen.exit_step * dt + 1e-9) {
    next.active = false;
    return next;
  }
  const Vec2 moved = state.position + gen.velocity_at(t + 0.5 * dt, dt) * dt;
  if (workspace && !workspace->contains(moved)) {
    next.active = false;
    return next;
  }
  next.position = moved;
  next.velocity = gen.velocity_at(t_next, dt);
  return next;
}

/// Deterministic RNG stream for a (seed, step, stream) triple.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::int64_t step, std::int64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(0x5e5e)};
  return std::mt19937_64(seq);
}

/// Noisy velocity measurements of every active in-FOV target. Positions are
/// reported exactly; velocities carry N(0, noise_std^2 I) noise.
inline std::vector<Measurement> sense(const SensorState& sensor, std::span<const TargetState> targets, int k,
                                      double noise_std, std::mt19937_64& rng) {
  std::vector<Measurement> out;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (const auto& t : targets) {
    if (!t.active || !in_fov(sensor, t.position)) continue;
    Measurement m;
    m.sensor_id = sensor.id;
    m.target_id = t.id;
    m.time_step = k;
    m.observed_position = t.position;
    const double e0 = noise(rng);
    const double e1 = noise(rng);
    m.observed_velocity = t.velocity + noise_std * Vec2(e0, e1);
    out.push_back(m);
  }
  return out;
}

}  // namespace resin
