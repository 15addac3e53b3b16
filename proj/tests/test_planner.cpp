#include <resin/planner.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace resin;

namespace {

FusedTrajectory static_target(const Vec2& at, int H, double var, int k = 0) {
  FusedTrajectory f;
  f.pdf.start_step = k;
  f.pdf.mean.resize(2 * H);
  for (int t = 0; t < H; ++t) f.pdf.mean.segment<2>(2 * t) = at;
  f.pdf.cov_blocks.assign(static_cast<std::size_t>(H), var * Mat2::Identity());
  return f;
}

PlanningContext context() {
  PlanningContext ctx;
  ctx.workspace = Workspace{30, 30};
  ctx.dt = 0.5;
  ctx.noise_cov = 0.25 * 0.01 * Mat2::Identity();
  return ctx;
}

SensorState sensor_at(int id, Vec2 p, double heading = 0.0, double speed = 0.0) {
  SensorState s;
  s.id = id;
  s.position = p;
  s.heading = heading;
  s.speed = speed;
  return s;
}

}  // namespace

TEST(PredecessorUpdate, ZeroCountIsPrior) {
  const Mat2 P = (Mat2() << 2, 0.3, 0.3, 1).finished();
  EXPECT_EQ(predecessor_update(P, 0, Mat2::Identity()), P);
}

TEST(PredecessorUpdate, EqualPrecision) {
  EXPECT_TRUE(predecessor_update(Mat2::Identity(), 1, Mat2::Identity()).isApprox(0.5 * Mat2::Identity(), 1e-15));
}

TEST(PredecessorUpdate, ThreeSequentialUpdates) {
  const Mat2 R = 0.01 * Mat2::Identity();
  Mat2 P = Mat2::Identity();
  for (int i = 0; i < 3; ++i) P = oracle::bayes_update(P, R);
  EXPECT_LT((predecessor_update(Mat2::Identity(), 3, R) - P).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Psi, Shape) {
  const double r = 5;
  EXPECT_EQ(psi_weight({0, 0}, {2.5, 0}, r), 1.0);
  EXPECT_EQ(psi_weight({0, 0}, {0, 0}, r), 0.0);
  EXPECT_EQ(psi_weight({0, 0}, {5, 0}, r), 0.0);
  EXPECT_EQ(psi_weight({0, 0}, {7, 0}, r), 0.0);
  EXPECT_EQ(psi_weight({0, 0}, {0, 0}, r, PsiShape::Monotone), 1.0);
}

TEST(StepMi, HalvingCovariance) {
  const Mat2 S = 0.3 * Mat2::Identity();
  EXPECT_NEAR(step_mi(S, S), std::log(2.0), 1e-14);
}

TEST(StepMi, CertainPriorGivesZero) {
  EXPECT_LT(step_mi(1e-8 * Mat2::Identity(), 0.0025 * Mat2::Identity()), 1e-5);
}

TEST(StepMi, EntropyDifferenceOracle) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Mat2 P = oracle::random_spd(rng), R = oracle::random_spd(rng);
    EXPECT_NEAR(step_mi(P, R), oracle::entropy_mi(P, R), 1e-10);
  }
}

TEST(StepMi, DecreasesWithCount) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const Mat2 P = oracle::random_spd(rng), R = oracle::random_spd(rng);
    double prev = step_mi(P, R);
    EXPECT_GE(prev, 0.0);
    for (int n = 1; n < 6; ++n) {
      const double v = step_mi(predecessor_update(P, n, R), R);
      EXPECT_LT(v, prev);
      prev = v;
    }
  }
}

TEST(Counts, WireFormat) {
  auto c = DetectionCounts::zeros(9, 14, 8, 5);
  c.at(3, 2) = 7;
  c.at(7, 4) = 65535;
  const auto bytes = encode_counts(c);
  EXPECT_EQ(bytes.size(), 12u + 2u * 40u);
  EXPECT_EQ(bytes.size(), detection_counts_size(8, 5));
  const auto d = decode_counts(bytes);
  EXPECT_EQ(d.counts, c.counts);
  EXPECT_EQ(d.round, 9u);
  EXPECT_EQ(d.start_step, 14);
  c.at(0, 0) = 70000;
  EXPECT_THROW(encode_counts(c), StructuralError);
}

TEST(Objective, FarSensorScoresZero) {
  const auto ctx = context();
  const std::vector<FusedTrajectory> f{static_target({25, 25}, 5, 0.1)};
  const std::vector<int> ids{0};
  const auto prior = make_planning_prior(f, ids, DetectionCounts::zeros(0, 0, 1, 5), ctx.noise_cov);
  const std::vector<ControlInput> u(5);
  EXPECT_EQ(objective(u, sensor_at(0, {2, 2}), prior, ctx), 0.0);
}

TEST(Objective, HalfRadiusGivesStepMi) {
  const auto ctx = context();
  const std::vector<FusedTrajectory> f{static_target({12.5, 10}, 1, 0.1)};
  const std::vector<int> ids{0};
  const auto prior = make_planning_prior(f, ids, DetectionCounts::zeros(0, 0, 1, 1), ctx.noise_cov);
  const std::vector<ControlInput> u(1);
  EXPECT_NEAR(objective(u, sensor_at(0, {10, 10}), prior, ctx), step_mi(0.1 * Mat2::Identity(), ctx.noise_cov),
              1e-15);
}

TEST(Objective, NonIncreasingInCounts) {
  const auto ctx = context();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ua(-5, 5), uw(-0.5, 0.5), up(5, 25);
  const std::vector<int> ids{0, 1, 2};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<FusedTrajectory> f;
    for (int i = 0; i < 3; ++i) f.push_back(static_target({up(rng), up(rng)}, 5, 0.05 + 0.1 * i));
    std::vector<ControlInput> u;
    for (int t = 0; t < 5; ++t) u.push_back({ua(rng), uw(rng)});
    const auto s = sensor_at(0, {up(rng), up(rng)}, 1.0, 1.0);
    auto counts = DetectionCounts::zeros(0, 0, 3, 5);
    double prev = objective(u, s, make_planning_prior(f, ids, counts, ctx.noise_cov), ctx);
    for (int bump = 0; bump < 10; ++bump) {
      ++counts.counts[static_cast<std::size_t>(rng() % counts.counts.size())];
      const double v = objective(u, s, make_planning_prior(f, ids, counts, ctx.noise_cov), ctx);
      EXPECT_LE(v, prev);
      prev = v;
    }
  }
}

TEST(Objective, IndicatorDiagnostic) {
  // psi <= 1, so the smoothed objective never exceeds the indicator one
  const auto ctx = context();
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> ua(-5, 5), uw(-0.5, 0.5), up(8, 22);
  const std::vector<int> ids{0, 1};
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<FusedTrajectory> f{static_target({up(rng), up(rng)}, 5, 0.1),
                                         static_target({up(rng), up(rng)}, 5, 0.2)};
    const auto prior = make_planning_prior(f, ids, DetectionCounts::zeros(0, 0, 2, 5), ctx.noise_cov);
    std::vector<ControlInput> u;
    for (int t = 0; t < 5; ++t) u.push_back({ua(rng), uw(rng)});
    const auto s = sensor_at(0, {up(rng), up(rng)}, 0.3, 1.0);
    EXPECT_LE(objective(u, s, prior, ctx), indicator_objective(u, s, prior, ctx) + 1e-15);
  }
}

TEST(OptimizeLocal, CertainPriorScoresZero) {
  const auto ctx = context();
  const std::vector<FusedTrajectory> f{static_target({12, 10}, 5, 1e-8)};
  const std::vector<int> ids{0};
  const auto prior = make_planning_prior(f, ids, DetectionCounts::zeros(0, 0, 1, 5), ctx.noise_cov);
  // psi <= 1, so the score is bounded by H step gains of a 1e-8 prior
  const double bound = 5 * step_mi(1e-8 * Mat2::Identity(), ctx.noise_cov);
  const double v = optimize_local(sensor_at(0, {10, 10}), prior, ctx, PlanBudget{}).value;
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, bound * (1 + 1e-9));
  EXPECT_LT(bound, 1e-4);
}

TEST(OptimizeLocal, BeatsZeroControlAndRandomShooting) {
  auto ctx = context();
  ctx.limits.speed_max = 5.0;
  const double r = 5.0;
  const std::vector<FusedTrajectory> f{static_target({15 + 2 * r, 15}, 5, 0.2)};
  const std::vector<int> ids{0};
  const auto prior = make_planning_prior(f, ids, DetectionCounts::zeros(0, 0, 1, 5), ctx.noise_cov);
  const auto s = sensor_at(0, {15, 15}, 0.0, 2.0);
  const auto plan = optimize_local(s, prior, ctx, PlanBudget{});

  EXPECT_GE(plan.value, objective(std::vector<ControlInput>(5), s, prior, ctx));
  EXPECT_GT(psi_weight(plan.states.back().position, f[0].pdf.mean_at(4), r), 0.0);

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> ua(ctx.limits.accel_min, ctx.limits.accel_max),
      uw(ctx.limits.turn_min, ctx.limits.turn_max);
  double shoot = 0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<ControlInput> u;
    for (int t = 0; t < 5; ++t) u.push_back({ua(rng), uw(rng)});
    shoot = std::max(shoot, objective(u, s, prior, ctx));
  }
  EXPECT_GE(plan.value, shoot);
}

TEST(OptimizeLocal, Deterministic) {
  const auto ctx = context();
  const std::vector<FusedTrajectory> f{static_target({14, 10}, 5, 0.2), static_target({8, 15}, 5, 0.1)};
  const std::vector<int> ids{0, 1};
  const auto prior = make_planning_prior(f, ids, DetectionCounts::zeros(0, 0, 2, 5), ctx.noise_cov);
  PlanBudget b;
  b.seed = 1234;
  const auto p1 = optimize_local(sensor_at(0, {10, 10}, 1.0, 1.0), prior, ctx, b);
  const auto p2 = optimize_local(sensor_at(0, {10, 10}, 1.0, 1.0), prior, ctx, b);
  ASSERT_EQ(p1.controls.size(), p2.controls.size());
  for (std::size_t t = 0; t < p1.controls.size(); ++t) {
    EXPECT_EQ(p1.controls[t].accel, p2.controls[t].accel);
    EXPECT_EQ(p1.controls[t].turn_rate, p2.controls[t].turn_rate);
  }
  EXPECT_EQ(p1.value, p2.value);
  EXPECT_EQ(p1.evaluations, p2.evaluations);
}

TEST(OptimizeLocal, FlatLandscapeFallsBackToPursuit) {
  const auto ctx = context();
  const std::vector<FusedTrajectory> f{static_target({28, 28}, 5, 0.2)};
  const std::vector<int> ids{0};
  const auto prior = make_planning_prior(f, ids, DetectionCounts::zeros(0, 0, 1, 5), ctx.noise_cov);
  const auto s = sensor_at(0, {2, 2}, 0.0, 0.0);
  const auto plan = optimize_local(s, prior, ctx, PlanBudget{});
  EXPECT_TRUE(plan.fallback_pursuit);
  EXPECT_LT((plan.states.back().position - Vec2(28, 28)).norm(), (s.position - Vec2(28, 28)).norm());
}

TEST(SequentialRound, SingleSensorNoMessages) {
  const auto ctx = context();
  const std::vector<FusedTrajectory> f{static_target({14, 10}, 5, 0.2)};
  const std::vector<int> ids{0};
  const std::map<int, SensorState> sensors{{3, sensor_at(3, {10, 10})}};
  const std::vector<int> order{3};
  const auto tree = static_topology({3}, 3, {});
  MessageLedger ledger;
  PlanBudget b;
  const auto round = sequential_round(sensors, f, ids, order, ctx, b, &tree, &ledger, 0);
  EXPECT_TRUE(ledger.records().empty());
  const auto prior = make_planning_prior(f, ids, DetectionCounts::zeros(0, 0, 1, 5), ctx.noise_cov);
  PlanBudget mixed = b;
  mixed.seed = plan_seed(b.seed, 3, 0);
  const auto direct = optimize_local(sensors.at(3), prior, ctx, mixed);
  EXPECT_EQ(round.plans.at(3).value, direct.value);
  EXPECT_EQ(round.plans.at(3).controls.front().accel, direct.controls.front().accel);
}

TEST(SequentialRound, ConstantSizeAtEveryHop) {
  const auto ctx = context();
  std::vector<FusedTrajectory> f;
  std::vector<int> ids;
  for (int i = 0; i < 8; ++i) {
    f.push_back(static_target({3.0 + 3 * i, 15}, 5, 0.2));
    ids.push_back(i);
  }
  std::map<int, SensorState> sensors;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> nodes, order;
  for (int j = 0; j < 8; ++j) {
    sensors[j] = sensor_at(j, {3.0 + 3 * j, 12});
    nodes.push_back(j);
    order.push_back(j);
    if (j > 0) edges.emplace_back(j, j - 1);
  }
  const auto tree = static_topology(nodes, 0, edges);
  MessageLedger ledger;
  PlanBudget b;
  b.max_evaluations = 300;
  sequential_round(sensors, f, ids, order, ctx, b, &tree, &ledger, 5);
  ASSERT_EQ(ledger.records().size(), 7u);
  for (const auto& r : ledger.records()) EXPECT_EQ(r.payload_bytes, ledger.records().front().payload_bytes);
  EXPECT_EQ(ledger.records().front().payload_bytes, detection_counts_size(8, 5));
}

TEST(SequentialRound, ShadowingIsWorthLessThanFreshCoverage) {
  const auto ctx = context();
  const std::vector<FusedTrajectory> f{static_target({12.5, 10}, 3, 0.2)};
  const std::vector<int> ids{0};
  const std::vector<ControlInput> hold(3);
  const auto s = sensor_at(1, {10, 10});
  auto shadowed = DetectionCounts::zeros(0, 0, 1, 3);
  for (int t = 0; t < 3; ++t) shadowed.at(0, t) = 1;
  const double covered =
      objective(hold, s, make_planning_prior(f, ids, shadowed, ctx.noise_cov), ctx);
  const double fresh =
      objective(hold, s, make_planning_prior(f, ids, DetectionCounts::zeros(0, 0, 1, 3), ctx.noise_cov), ctx);
  EXPECT_LT(covered, fresh);
  EXPECT_NEAR(fresh, 3 * step_mi(0.2 * Mat2::Identity(), ctx.noise_cov), 1e-12);
}

TEST(SequentialRound, GainNonDecreasingInNestedSets) {
  const auto ctx = context();
  std::vector<FusedTrajectory> f;
  std::vector<int> ids;
  for (int i = 0; i < 4; ++i) {
    f.push_back(static_target({6.0 + 5 * i, 8.0 + 3 * i}, 5, 0.3));
    ids.push_back(i);
  }
  PlanBudget b;
  b.max_evaluations = 400;
  double prev = -1;
  std::map<int, SensorState> sensors;
  std::vector<int> order;
  for (int j = 0; j < 4; ++j) {
    sensors[j] = sensor_at(j, {5.0 + 6 * j, 10.0}, 0.5 * j, 1.0);
    order.push_back(j);
    const auto round = sequential_round(sensors, f, ids, order, ctx, b);
    double total = 0;
    for (const auto& [id, p] : round.plans) total += p.value;
    EXPECT_GE(total, prev);
    prev = total;
  }
}

TEST(SequentialRound, RejectsBadOrder) {
  const auto ctx = context();
  const std::vector<FusedTrajectory> f{static_target({14, 10}, 5, 0.2)};
  const std::vector<int> ids{0};
  const std::map<int, SensorState> sensors{{0, sensor_at(0, {10, 10})}, {1, sensor_at(1, {12, 10})}};
  const std::vector<int> dup{0, 0}, missing{0};
  EXPECT_THROW(sequential_round(sensors, f, ids, dup, ctx, PlanBudget{}), ProtocolError);
  EXPECT_THROW(sequential_round(sensors, f, ids, missing, ctx, PlanBudget{}), ProtocolError);
}

TEST(JointObjective, SingleSensorMatchesLocalWithoutCounts) {
  // one sensor: soft count psi in a single update vs psi * step_mi
  const auto ctx = context();
  const std::vector<FusedTrajectory> f{static_target({12.5, 10}, 1, 0.2)};
  const std::vector<int> ids{0};
  const auto prior = make_planning_prior(f, ids, DetectionCounts::zeros(0, 0, 1, 1), ctx.noise_cov);
  const std::vector<std::vector<ControlInput>> u{std::vector<ControlInput>(1)};
  const std::vector<SensorState> s{sensor_at(0, {10, 10})};
  EXPECT_NEAR(joint_objective(u, s, prior, ctx), objective(u[0], s[0], prior, ctx), 1e-12);
}
