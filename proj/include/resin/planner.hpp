#pragma once

// Sequential decentralized information-driven path planning. Sensors plan
// one at a time; each forwards a fixed-size table of expected detection
// counts to its successor.

#include <resin/core.hpp>
#include <resin/fusion.hpp>
#include <resin/network.hpp>
#include <resin/optimize.hpp>
#include <resin/world.hpp>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <vector>

namespace resin {

/// n_i(t): how many predecessors expect to see target slot i at step t.
struct DetectionCounts {
  std::uint32_t round = 0;
  int start_step = 0;
  int horizon = 0;
  int targets = 0;
  std::vector<int> counts;  // row-major, targets x horizon

  static DetectionCounts zeros(std::uint32_t round, int start_step, int targets, int horizon) {
    return {round, start_step, horizon, targets, std::vector<int>(static_cast<std::size_t>(targets * horizon), 0)};
  }
  int& at(int target, int t) { return counts[static_cast<std::size_t>(target * horizon + t)]; }
  int at(int target, int t) const { return counts[static_cast<std::size_t>(target * horizon + t)]; }
};

// Wire format:  u32 round | u32 k | u16 H | u16 M | M*H x u16 count
inline constexpr std::size_t kCountsHeaderBytes = 12;

inline std::size_t detection_counts_size(int M, int H) {
  return kCountsHeaderBytes + 2 * static_cast<std::size_t>(M) * static_cast<std::size_t>(H);
}

inline std::vector<unsigned char> encode_counts(const DetectionCounts& c) {
  ByteWriter w;
  w.put<std::uint32_t>(c.round);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.start_step));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(c.horizon));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(c.targets));
  for (int n : c.counts) {
    if (n < 0 || n > 0xffff) throw StructuralError("detection count does not fit the 16-bit wire field");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(n));
  }
  return w.take();
}

inline DetectionCounts decode_counts(const std::vector<unsigned char>& bytes) {
  ByteReader r(bytes);
  DetectionCounts c;
  c.round = r.get<std::uint32_t>();
  c.start_step = static_cast<int>(r.get<std::uint32_t>());
  c.horizon = r.get<std::uint16_t>();
  c.targets = r.get<std::uint16_t>();
  for (int i = 0; i < c.targets * c.horizon; ++i) c.counts.push_back(r.get<std::uint16_t>());
  if (!r.done()) throw StructuralError("trailing bytes after detection counts");
  return c;
}

/// Covariance after n conjugate updates with noise covariance `noise`:
/// (prior^-1 + n noise^-1)^-1.
inline Mat2 predecessor_update(const Mat2& prior, int n, const Mat2& noise) {
  if (n < 0) throw StructuralError("detection count must be non-negative");
  if (n == 0) return prior;
  Mat2 out = (prior.inverse() + n * noise.inverse()).inverse();
  return 0.5 * (out + out.transpose());
}

enum class PsiShape {
  Bump,      // peaks at r/2, zero at the sensor and beyond r
  Monotone,  // 1 - (d/r)^2, ablation only
};

inline double psi_weight(const Vec2& sensor_xy, const Vec2& target_xy, double r, PsiShape shape = PsiShape::Bump) {
  if (!(r > 0.0)) throw StructuralError("sensing radius must be positive");
  const double d = (sensor_xy - target_xy).norm();
  if (shape == PsiShape::Monotone) return std::max(0.0, 1.0 - (d / r) * (d / r));
  const double h = 0.5 * r;
  return std::max(0.0, 1.0 - (d - h) * (d - h) / (h * h));
}

/// Mutual information of one Gaussian step observed once:
/// 1/2 log(det prior / det posterior).
inline double step_mi(const Mat2& prior, const Mat2& noise) {
  const Mat2 post = (prior.inverse() + noise.inverse()).inverse();
  return std::max(0.0, 0.5 * (log_det2(prior) - log_det2(post)));
}

struct TargetPrior {
  int target_id = 0;
  std::vector<Vec2> nominal;         // planning steps k+1 .. k+H
  std::vector<Mat2> fuse_blocks;     // per-step marginals of the fused pdf
  std::vector<Mat2> pre_blocks;      // after the predecessors' detections
  std::vector<double> gain;          // step_mi(pre_block, noise)
};

struct PlanningPrior {
  int start_step = 0;
  int horizon = 0;
  std::vector<TargetPrior> targets;
};

struct PlanningContext {
  SensorLimits limits;
  std::optional<Workspace> workspace;
  double dt = 0.5;
  /// Position-space measurement noise (dt^2 times the velocity noise).
  Mat2 noise_cov = Mat2::Identity() * 0.0025 * 0.01;
  PsiShape psi = PsiShape::Bump;
};

inline PlanningPrior make_planning_prior(std::span<const FusedTrajectory> fused, std::span<const int> target_ids,
                                         const DetectionCounts& counts, const Mat2& noise) {
  if (fused.size() != target_ids.size()) throw StructuralError("fused pdfs and target ids differ in length");
  PlanningPrior p;
  p.horizon = fused.empty() ? counts.horizon : fused.front().pdf.horizon();
  p.start_step = fused.empty() ? counts.start_step : fused.front().pdf.start_step;
  if (counts.targets != static_cast<int>(fused.size()) || (counts.horizon != p.horizon && !fused.empty()))
    throw ProtocolError("detection counts do not match the fused prediction");
  for (std::size_t i = 0; i < fused.size(); ++i) {
    TargetPrior tp;
    tp.target_id = target_ids[i];
    const auto& g = fused[i].pdf;
    for (int t = 0; t < p.horizon; ++t) {
      tp.nominal.push_back(g.mean_at(t));
      tp.fuse_blocks.push_back(g.covariance(t));
      tp.pre_blocks.push_back(predecessor_update(tp.fuse_blocks.back(), counts.at(static_cast<int>(i), t), noise));
      tp.gain.push_back(step_mi(tp.pre_blocks.back(), noise));
    }
    p.targets.push_back(std::move(tp));
  }
  return p;
}

/// States s(k+1) .. s(k+H) reached from `sensor` under the controls.
inline std::vector<SensorState> rollout_sensor(const SensorState& sensor, std::span<const ControlInput> controls,
                                               const PlanningContext& ctx) {
  std::vector<SensorState> out;
  SensorState s = sensor;
  for (const auto& u : controls) {
    s = step_sensor(s, u, ctx.dt, ctx.limits, ctx.workspace);
    out.push_back(s);
  }
  return out;
}

/// Smoothed local objective: sum over targets and steps of psi * step_mi.
inline double objective(std::span<const ControlInput> controls, const SensorState& sensor, const PlanningPrior& prior,
                        const PlanningContext& ctx) {
  if (static_cast<int>(controls.size()) != prior.horizon) throw StructuralError("control sequence length must be H");
  const auto states = rollout_sensor(sensor, controls, ctx);
  double J = 0.0;
  for (const auto& tp : prior.targets)
    for (int t = 0; t < prior.horizon; ++t) {
      const double w = psi_weight(states[t].position, tp.nominal[t], sensor.sensing_radius, ctx.psi);
      if (w > 0.0) J += w * tp.gain[t];
    }
  return J;
}

/// Same sum with the hard FOV indicator in place of psi (diagnostic).
inline double indicator_objective(std::span<const ControlInput> controls, const SensorState& sensor,
                                  const PlanningPrior& prior, const PlanningContext& ctx) {
  const auto states = rollout_sensor(sensor, controls, ctx);
  double J = 0.0;
  for (const auto& tp : prior.targets)
    for (int t = 0; t < prior.horizon; ++t)
      if (in_fov(states[t], tp.nominal[t])) J += tp.gain[t];
  return J;
}

struct PlanBudget {
  int max_evaluations = 1500;
  int random_starts = 4;
  int local_starts = 3;
  int pursuit_seeds = 4;
  std::uint64_t seed = 1;
};

struct PlanResult {
  std::vector<ControlInput> controls;
  std::vector<SensorState> states;
  double value = 0.0;
  int evaluations = 0;
  bool budget_exhausted = false;
  /// Every candidate scored zero; the plan pursues the nearest unclaimed target.
  bool fallback_pursuit = false;
};

namespace detail {

inline std::vector<ControlInput> unpack(const opt::Point& x) {
  std::vector<ControlInput> u(x.size() / 2);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = {x[2 * i], x[2 * i + 1]};
  return u;
}

inline opt::Point pack(std::span<const ControlInput> u) {
  opt::Point x;
  for (const auto& c : u) {
    x.push_back(c.accel);
    x.push_back(c.turn_rate);
  }
  return x;
}

}  // namespace detail

/// Proportional pursuit of a moving goal: steer toward goal[t], aiming to
/// stop at `standoff` from it.
inline std::vector<ControlInput> pursuit_controls(const SensorState& sensor, std::span<const Vec2> goal,
                                                  double standoff, const PlanningContext& ctx) {
  std::vector<ControlInput> u;
  SensorState s = sensor;
  for (const auto& g : goal) {
    const Vec2 to = g - s.position;
    const double bearing = std::atan2(to.y(), to.x());
    const double err = to.norm() > 1e-9 ? wrap_pi(bearing - s.heading) : 0.0;
    const double desired_speed = std::clamp((to.norm() - standoff) / (2.0 * ctx.dt), ctx.limits.speed_min,
                                            ctx.limits.speed_max) *
                                 std::max(0.0, std::cos(err));
    const ControlInput c = ctx.limits.clamp({(desired_speed - s.speed) / ctx.dt, err / ctx.dt});
    u.push_back(c);
    s = step_sensor(s, c, ctx.dt, ctx.limits, ctx.workspace);
  }
  return u;
}

/// Maximizes the local objective over the 2H-dimensional control box with a
/// seeded multi-start compass search. Seeds: zero control, pursuit of the
/// nearest targets, and uniform random draws.
inline PlanResult optimize_local(const SensorState& sensor, const PlanningPrior& prior, const PlanningContext& ctx,
                                 const PlanBudget& budget, const DetectionCounts* claimed = nullptr) {
  const int H = prior.horizon;
  if (H < 1) throw StructuralError("planning horizon must be at least one step");
  opt::Point lower, upper;
  for (int t = 0; t < H; ++t) {
    lower.insert(lower.end(), {ctx.limits.accel_min, ctx.limits.turn_min});
    upper.insert(upper.end(), {ctx.limits.accel_max, ctx.limits.turn_max});
  }

  // Targets ordered by distance of their first nominal point.
  std::vector<std::pair<double, std::size_t>> near;
  for (std::size_t i = 0; i < prior.targets.size(); ++i)
    near.emplace_back((prior.targets[i].nominal.front() - sensor.position).norm(), i);
  std::stable_sort(near.begin(), near.end());

  std::vector<opt::Point> seeds;
  seeds.push_back(opt::Point(static_cast<std::size_t>(2 * H), 0.0));
  for (int p = 0; p < std::min<int>(budget.pursuit_seeds, static_cast<int>(near.size())); ++p) {
    const auto& tp = prior.targets[near[static_cast<std::size_t>(p)].second];
    seeds.push_back(detail::pack(pursuit_controls(sensor, tp.nominal, 0.5 * sensor.sensing_radius, ctx)));
  }
  std::mt19937_64 rng(budget.seed);
  for (int r = 0; r < budget.random_starts; ++r) {
    opt::Point x(static_cast<std::size_t>(2 * H));
    for (std::size_t d = 0; d < x.size(); ++d) x[d] = std::uniform_real_distribution<double>(lower[d], upper[d])(rng);
    seeds.push_back(std::move(x));
  }

  opt::CompassOptions co;
  co.max_evaluations = budget.max_evaluations;
  co.local_starts = budget.local_starts;
  const auto best = opt::maximize_box(
      [&](const opt::Point& x) { return objective(detail::unpack(x), sensor, prior, ctx); }, lower, upper, seeds, co);

  PlanResult out;
  out.controls = detail::unpack(best.x);
  out.value = best.value;
  out.evaluations = best.evaluations;
  out.budget_exhausted = best.budget_exhausted;

  if (!(best.value > 1e-12) && !near.empty()) {
    // Flat landscape: head for the nearest target no predecessor covers.
    std::size_t pick = near.front().second;
    if (claimed) {
      for (const auto& [d, i] : near) {
        bool unclaimed = true;
        for (int t = 0; t < H; ++t) unclaimed = unclaimed && claimed->at(static_cast<int>(i), t) == 0;
        if (unclaimed) {
          pick = i;
          break;
        }
      }
    }
    out.controls = pursuit_controls(sensor, prior.targets[pick].nominal, 0.5 * sensor.sensing_radius, ctx);
    out.value = objective(out.controls, sensor, prior, ctx);
    out.fallback_pursuit = true;
  }
  out.states = rollout_sensor(sensor, out.controls, ctx);
  return out;
}

/// Optimizer seed for one sensor's plan at step k.
inline std::uint64_t plan_seed(std::uint64_t base, int sensor, int k) {
  return base * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(sensor) * 0x632be59bd9b4e019ULL +
         static_cast<std::uint64_t>(k);
}

struct RoundResult {
  std::map<int, PlanResult> plans;
  DetectionCounts counts;  // after the last sensor
};

/// One sequential planning round. Sensors plan in `order`; each receives the
/// detection counts from its predecessor, plans against the updated prior,
/// adds its own expected detections and forwards the table. With a tree and
/// ledger, each forward is routed hop by hop and recorded.
inline RoundResult sequential_round(const std::map<int, SensorState>& sensors, std::span<const FusedTrajectory> fused,
                                    std::span<const int> target_ids, std::span<const int> order,
                                    const PlanningContext& ctx, const PlanBudget& budget,
                                    const TreeTopology* tree = nullptr, MessageLedger* ledger = nullptr,
                                    std::uint32_t round = 0) {
  {
    std::set<int> seen(order.begin(), order.end());
    std::set<int> ids;
    for (const auto& [id, s] : sensors) ids.insert(id);
    if (seen.size() != order.size() || seen != ids)
      throw ProtocolError("planning order is not a permutation of the sensor ids");
  }
  if (fused.size() != target_ids.size()) throw ProtocolError("fused pdfs and target ids differ in length");
  const int H = fused.empty() ? 0 : fused.front().pdf.horizon();
  const int k = fused.empty() ? 0 : fused.front().pdf.start_step;
  if (H == 0) {
    RoundResult empty;
    empty.counts = DetectionCounts::zeros(round, k, 0, 0);
    return empty;
  }

  RoundResult out;
  out.counts = DetectionCounts::zeros(round, k, static_cast<int>(fused.size()), H);
  for (std::size_t idx = 0; idx < order.size(); ++idx) {
    const int j = order[idx];
    if (idx > 0 && ledger) {
      if (!tree) throw ProtocolError("message accounting requires a topology");
      // Decode what is actually sent so the successor plans from the wire copy.
      const auto bytes = encode_counts(out.counts);
      ledger->route(static_cast<int>(round), order[idx - 1], j, MessageKind::DetectionCounts, bytes.size(), *tree);
      out.counts = decode_counts(bytes);
    }
    const auto prior = make_planning_prior(fused, target_ids, out.counts, ctx.noise_cov);
    PlanBudget b = budget;
    b.seed = plan_seed(budget.seed, j, k);
    auto plan = optimize_local(sensors.at(j), prior, ctx, b, &out.counts);
    for (std::size_t i = 0; i < fused.size(); ++i)
      for (int t = 0; t < H; ++t)
        if (in_fov(plan.states[static_cast<std::size_t>(t)], prior.targets[i].nominal[static_cast<std::size_t>(t)]))
          ++out.counts.at(static_cast<int>(i), t);
    out.plans.emplace(j, std::move(plan));
  }
  return out;
}

/// Joint smoothed objective for planning all sensors at once: psi values of
/// all sensors add up as soft detection counts in one conjugate update per
/// target and step.
inline double joint_objective(const std::vector<std::vector<ControlInput>>& controls,
                              const std::vector<SensorState>& sensors, const PlanningPrior& prior,
                              const PlanningContext& ctx) {
  const int H = prior.horizon;
  std::vector<std::vector<SensorState>> states;
  for (std::size_t j = 0; j < sensors.size(); ++j) states.push_back(rollout_sensor(sensors[j], controls[j], ctx));
  const Mat2 noise_info = ctx.noise_cov.inverse();
  double J = 0.0;
  for (const auto& tp : prior.targets)
    for (int t = 0; t < H; ++t) {
      double soft = 0.0;
      for (std::size_t j = 0; j < sensors.size(); ++j)
        soft += psi_weight(states[j][static_cast<std::size_t>(t)].position, tp.nominal[static_cast<std::size_t>(t)],
                           sensors[j].sensing_radius, ctx.psi);
      if (soft <= 0.0) continue;
      const Mat2& P = tp.fuse_blocks[static_cast<std::size_t>(t)];
      const Mat2 post = (P.inverse() + soft * noise_info).inverse();
      J += 0.5 * (log_det2(P) - log_det2(post));
    }
  return J;
}

}  // namespace resin
