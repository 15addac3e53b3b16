#include <resin/world.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace resin;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST(StepSensor, StraightLine) {
  SensorState s;
  s.speed = 1.0;
  const auto n = step_sensor(s, {0.0, 0.0}, 0.5, SensorLimits{});
  EXPECT_EQ(n.position.x(), 0.5);
  EXPECT_EQ(n.position.y(), 0.0);
  EXPECT_EQ(n.heading, 0.0);
  EXPECT_EQ(n.speed, 1.0);
}

TEST(StepSensor, AxisAligned) {
  SensorState s;
  s.heading = kPi / 2;
  s.speed = 2.0;
  const auto n = step_sensor(s, {1.0, 0.0}, 0.5, SensorLimits{});
  EXPECT_NEAR(n.position.x(), 0.0, 1e-15);
  EXPECT_EQ(n.position.y(), 1.0);
  EXPECT_EQ(n.speed, 2.5);
}

TEST(StepSensor, SpeedClampedAtMax) {
  SensorState s;
  s.speed = 3.0;
  EXPECT_EQ(step_sensor(s, {5.0, 0.0}, 0.5, SensorLimits{}).speed, 3.0);
}

TEST(StepSensor, RejectsOutOfBoundsInput) {
  SensorState s;
  EXPECT_THROW(step_sensor(s, {5.1, 0.0}, 0.5, SensorLimits{}), BoundsError);
  EXPECT_THROW(step_sensor(s, {0.0, -kPi / 6 - 1e-9}, 0.5, SensorLimits{}), BoundsError);
}

TEST(StepSensor, PreservesBoundMembership) {
  std::mt19937_64 rng(3);
  SensorLimits lim;
  std::uniform_real_distribution<double> ua(lim.accel_min, lim.accel_max), uw(lim.turn_min, lim.turn_max),
      uh(-10, 10), uv(0, 3);
  for (int i = 0; i < 2000; ++i) {
    SensorState s;
    s.heading = wrap_angle(uh(rng));
    s.speed = uv(rng);
    const auto n = step_sensor(s, {ua(rng), uw(rng)}, 0.5, lim);
    EXPECT_GE(n.speed, lim.speed_min);
    EXPECT_LE(n.speed, lim.speed_max);
    EXPECT_GE(n.heading, 0.0);
    EXPECT_LT(n.heading, 2 * kPi);
  }
}

TEST(StepSensor, HeadingWraps) {
  SensorState s;
  s.heading = 2 * kPi - 0.1;
  const auto n = step_sensor(s, {0.0, kPi / 6}, 0.5, SensorLimits{});
  EXPECT_NEAR(n.heading, kPi / 12 - 0.1, 1e-12);
}

TEST(StepTarget, CircleClosesAfterOnePeriod) {
  TrajectoryGenerator g;
  CirclePath c;
  c.center = {0, 0};
  c.radius = 2.0;
  c.angular_rate = kPi / 4;
  g.shape = c;
  const double dt = 0.5;
  auto s = spawn_target(g, 0, dt);
  const Vec2 start = s.position;
  const int steps = static_cast<int>(std::lround(2 * kPi / c.angular_rate / dt));
  for (int k = 0; k < steps; ++k) s = step_target(g, s, k * dt, dt);
  EXPECT_LT((s.position - start).norm(), 1e-6);
}

TEST(StepTarget, StraightAdvances) {
  TrajectoryGenerator g;
  g.shape = StraightPath{{1, 1}, {1, 0}};
  const auto s = spawn_target(g, 0, 0.5);
  const auto n = step_target(g, s, 0.0, 0.5);
  EXPECT_EQ(n.position.x() - s.position.x(), 0.5);
  EXPECT_EQ(n.position.y() - s.position.y(), 0.0);
}

TEST(StepTarget, ExitDeactivatesInPlace) {
  TrajectoryGenerator g;
  g.shape = StraightPath{{1, 1}, {1, 0}};
  g.exit_step = 2;
  auto s = spawn_target(g, 0, 0.5);
  s = step_target(g, s, 0.0, 0.5);
  s = step_target(g, s, 0.5, 0.5);
  ASSERT_TRUE(s.active);
  const Vec2 before = s.position;
  s = step_target(g, s, 1.0, 0.5);
  EXPECT_FALSE(s.active);
  EXPECT_EQ(s.position, before);
}

TEST(StepTarget, LeavingWorkspaceDeactivates) {
  TrajectoryGenerator g;
  g.shape = StraightPath{{9.8, 5}, {1, 0}};
  const auto s = spawn_target(g, 0, 0.5);
  const auto n = step_target(g, s, 0.0, 0.5, Workspace{10, 10});
  EXPECT_FALSE(n.active);
  EXPECT_EQ(n.position, s.position);
}

TEST(Generators, VelocityMatchesFiniteDifference) {
  RandomWaypointPath w;
  w.build();
  const std::vector<PathShape> shapes{CirclePath{}, FigureEightPath{}, SineLanePath{}, StraightBouncePath{},
                                      SpiralPath{}, w};
  for (const auto& sh : shapes) {
    TrajectoryGenerator g{sh, 0, std::nullopt};
    for (double t : {0.3, 1.7, 5.2, 11.9}) {
      const double h = 1e-5;
      const Vec2 fd = (g.position_at(t + h, 0.5) - g.position_at(t - h, 0.5)) / (2 * h);
      EXPECT_LT((fd - g.velocity_at(t, 0.5)).norm(), 1e-5) << shape_name(sh) << " t=" << t;
    }
  }
}

TEST(Fov, BoundaryInclusive) {
  SensorState s;
  s.sensing_radius = 5.0;
  EXPECT_TRUE(in_fov(s, {3.0, 4.0}));
  EXPECT_FALSE(in_fov(s, {3.1, 4.0}));
}

TEST(Fov, TranslationInvariant) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int i = 0; i < 500; ++i) {
    SensorState s;
    s.position = {u(rng), u(rng)};
    const Vec2 p(u(rng), u(rng));
    const Vec2 shift(std::round(u(rng)), std::round(u(rng)));
    SensorState moved = s;
    moved.position += shift;
    EXPECT_EQ(in_fov(s, p), in_fov(moved, p + shift));
  }
}

TEST(Sense, OutsideFovGivesNothing) {
  SensorState s;
  std::vector<TargetState> t{{0, {6, 0}, {1, 0}, true}};
  std::mt19937_64 rng(1);
  EXPECT_TRUE(sense(s, t, 0, 0.1, rng).empty());
}

TEST(Sense, InactiveTargetsIgnored) {
  SensorState s;
  std::vector<TargetState> t{{0, {1, 0}, {1, 0}, false}};
  std::mt19937_64 rng(1);
  EXPECT_TRUE(sense(s, t, 0, 0.1, rng).empty());
}

TEST(Sense, NoiseFreeIsExact) {
  SensorState s;
  std::vector<TargetState> t{{3, {1, 2}, {0.3, -0.7}, true}};
  std::mt19937_64 rng(1);
  const auto m = sense(s, t, 4, 0.0, rng);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].observed_velocity, t[0].velocity);
  EXPECT_EQ(m[0].observed_position, t[0].position);
  EXPECT_EQ(m[0].target_id, 3);
  EXPECT_EQ(m[0].time_step, 4);
}

TEST(Sense, CountEqualsTargetsInRange) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 10);
  SensorState s;
  s.position = {5, 5};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TargetState> ts;
    std::size_t expect = 0;
    for (int i = 0; i < 12; ++i) {
      TargetState t{i, {u(rng), u(rng)}, {0, 0}, i % 5 != 0};
      if (t.active && (t.position - s.position).norm() <= s.sensing_radius) ++expect;
      ts.push_back(t);
    }
    auto r = stream_rng(1, trial, 0);
    EXPECT_EQ(sense(s, ts, trial, 0.1, r).size(), expect);
  }
}

TEST(Sense, NoiseStdMatches) {
  SensorState s;
  std::vector<TargetState> t{{0, {1, 1}, {0, 0}, true}};
  std::mt19937_64 rng(2024);
  double ss = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto m = sense(s, t, i, 0.1, rng);
    ss += m[0].observed_velocity.squaredNorm();
  }
  const double std_est = std::sqrt(ss / (2.0 * n));
  EXPECT_NEAR(std_est, 0.1, 0.005);
}

TEST(Sense, DeterministicPerSeedAndStep) {
  SensorState s;
  std::vector<TargetState> t{{0, {1, 1}, {0.5, 0}, true}, {1, {2, -1}, {0, 0.2}, true}};
  auto r1 = stream_rng(42, 7, 1);
  auto r2 = stream_rng(42, 7, 1);
  const auto a = sense(s, t, 7, 0.1, r1);
  const auto b = sense(s, t, 7, 0.1, r2);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].observed_velocity, b[i].observed_velocity);
}

TEST(Workspace, RejectsDegenerate) {
  EXPECT_THROW((Workspace{0, 1}.validate()), ConfigError);
  EXPECT_THROW((Workspace{1, -1}.validate()), ConfigError);
}
