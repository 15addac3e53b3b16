#pragma once

// Spatio-temporal GP regression of a target's velocity field, and the
// nominal-path Gaussian over its predicted trajectory.

#include <resin/core.hpp>
#include <resin/optimize.hpp>
#include <resin/world.hpp>

#include <algorithm>
#include <array>
#include <cstddef>
#include <deque>
#include <limits>
#include <vector>

namespace resin {

struct KernelParams {
  double signal_std = 1.0;
  double length_space = 2.0;
  double length_time = 4.0;
  double noise_std = 0.1;

  void validate() const {
    // noise may be zero; the jitter schedule keeps the Gram matrix factorizable
    if (!(signal_std > 0.0) || !(length_space > 0.0) || !(length_time > 0.0) || !(noise_std >= 0.0))
      throw ConfigError("kernel parameters must be positive");
  }
};

struct SpaceTime {
  Vec2 position = Vec2::Zero();
  double time = 0.0;
};

/// sigma_s^2 * exp(-|dx|^2 / (2 l_x^2)) * exp(-dt^2 / (2 l_t^2))
inline double kernel_eval(const SpaceTime& a, const SpaceTime& b, const KernelParams& p) {
  const double dx2 = (a.position - b.position).squaredNorm();
  const double dt = a.time - b.time;
  return p.signal_std * p.signal_std *
         std::exp(-dx2 / (2.0 * p.length_space * p.length_space) - dt * dt / (2.0 * p.length_time * p.length_time));
}

/// Training set of one sensor for one target. Repeated observations at an
/// identical (position, time) input are merged into their mean, with the
/// point's noise variance divided by the multiplicity.
struct GpModel {
  int sensor_id = 0;
  int target_id = 0;
  KernelParams params;
  std::deque<SpaceTime> inputs;
  std::deque<Vec2> outputs;
  std::deque<int> multiplicity;
  std::size_t window_cap = 150;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }

  void add(const SpaceTime& x, const Vec2& z) {
    for (std::size_t i = inputs.size(); i-- > 0 && inputs[i].time == x.time;) {
      if (inputs[i].position == x.position) {
        const int m = multiplicity[i];
        outputs[i] = (outputs[i] * m + z) / (m + 1);
        multiplicity[i] = m + 1;
        return;
      }
    }
    inputs.push_back(x);
    outputs.push_back(z);
    multiplicity.push_back(1);
    while (inputs.size() > window_cap) {
      inputs.pop_front();
      outputs.pop_front();
      multiplicity.pop_front();
    }
  }
};

/// Appends a measurement (time = step * dt), evicting the oldest point
/// beyond the window cap.
inline GpModel ingest(GpModel model, const Measurement& m, double dt) {
  if (m.target_id != model.target_id)
    throw StructuralError("measurement of target " + std::to_string(m.target_id) + " offered to model of target " +
                          std::to_string(model.target_id));
  model.add({m.observed_position, m.time_step * dt}, m.observed_velocity);
  return model;
}

struct VelocityPrediction {
  Vec2 mean = Vec2::Zero();
  double variance = 0.0;
};

inline constexpr std::array<double, 7> kJitterSchedule{1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4};

/// Noisy Gram matrix K(X,X) + diag(eps0^2 / multiplicity).
inline Eigen::MatrixXd gram_matrix(const GpModel& model, const KernelParams& p) {
  const Eigen::Index n = static_cast<Eigen::Index>(model.size());
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = kernel_eval(model.inputs[i], model.inputs[j], p);
    K(i, i) += p.noise_std * p.noise_std / model.multiplicity[i];
  }
  return K;
}

/// Cholesky of K + jitter*I, escalating the jitter through kJitterSchedule.
inline Eigen::LLT<Eigen::MatrixXd> factorize(const Eigen::MatrixXd& K) {
  const Eigen::Index n = K.rows();
  for (const double jitter : kJitterSchedule) {
    Eigen::LLT<Eigen::MatrixXd> llt(K + jitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt;
  }
  throw NumericalError("Gram matrix not positive definite after maximum jitter");
}

/// Factorized posterior of a model; reuse it for many queries.
class GpPosterior {
 public:
  explicit GpPosterior(const GpModel& model) : params_(model.params) {
    const Eigen::Index n = static_cast<Eigen::Index>(model.size());
    if (n == 0) return;
    inputs_.resize(n, 3);
    Eigen::MatrixXd Z(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& x = model.inputs[static_cast<std::size_t>(i)];
      inputs_.row(i) << x.position.x(), x.position.y(), x.time;
      Z.row(i) = model.outputs[static_cast<std::size_t>(i)].transpose();
    }
    llt_ = factorize(gram_matrix(model, params_));
    alpha_ = llt_.solve(Z);
  }

  VelocityPrediction predict(const SpaceTime& q) const {
    const double prior = params_.signal_std * params_.signal_std;
    if (inputs_.rows() == 0) return {Vec2::Zero(), prior};
    const double inv_lx = 1.0 / (2.0 * params_.length_space * params_.length_space);
    const double inv_lt = 1.0 / (2.0 * params_.length_time * params_.length_time);
    const Eigen::ArrayXd dx = inputs_.col(0).array() - q.position.x();
    const Eigen::ArrayXd dy = inputs_.col(1).array() - q.position.y();
    const Eigen::ArrayXd dt = inputs_.col(2).array() - q.time;
    const Eigen::VectorXd k = (prior * (-(dx.square() + dy.square()) * inv_lx - dt.square() * inv_lt).exp()).matrix();
    VelocityPrediction out;
    out.mean = (k.transpose() * alpha_).transpose();
    const Eigen::VectorXd v = llt_.matrixL().solve(k);
    out.variance = std::max(0.0, prior - v.squaredNorm());
    return out;
  }

 private:
  KernelParams params_;
  Eigen::MatrixXd inputs_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd alpha_;
};

inline VelocityPrediction gp_predict(const GpModel& model, const SpaceTime& query) {
  return GpPosterior(model).predict(query);
}

/// Log marginal likelihood summed over both velocity components, which
/// share one kernel.
inline double log_marginal_likelihood(const GpModel& model, const KernelParams& p) {
  if (model.empty()) return 0.0;
  const Eigen::Index n = static_cast<Eigen::Index>(model.size());
  const auto llt = factorize(gram_matrix(model, p));
  Eigen::MatrixXd Z(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) Z.row(i) = model.outputs[static_cast<std::size_t>(i)].transpose();
  const Eigen::MatrixXd W = llt.matrixL().solve(Z);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * W.squaredNorm() - log_det - static_cast<double>(n) * std::log(kTwoPi);
}

/// Log-space search box for the fitted hyperparameters.
struct FitOptions {
  std::array<double, 2> signal_std{0.05, 10.0};
  std::array<double, 2> length_space{0.2, 30.0};
  std::array<double, 2> length_time{0.2, 60.0};
  int grid_per_axis = 3;
  int refine_starts = 2;
  int max_evaluations_per_start = 80;
  std::size_t window_min = 5;
};

/// Maximizes the log marginal likelihood over (signal_std, length_space,
/// length_time) with the noise held fixed. Seeds are a fixed log-space grid
/// plus the incumbent; the best seeds are refined with Nelder-Mead. Returns
/// the incumbent when nothing beats it.
inline KernelParams fit_hyperparameters(const GpModel& model, const FitOptions& opts = {}) {
  if (model.size() < std::max<std::size_t>(opts.window_min, 2)) return model.params;

  const opt::Point lower{std::log(opts.signal_std[0]), std::log(opts.length_space[0]), std::log(opts.length_time[0])};
  const opt::Point upper{std::log(opts.signal_std[1]), std::log(opts.length_space[1]), std::log(opts.length_time[1])};
  auto to_params = [&](const opt::Point& x) {
    KernelParams p = model.params;
    p.signal_std = std::exp(x[0]);
    p.length_space = std::exp(x[1]);
    p.length_time = std::exp(x[2]);
    return p;
  };
  auto negative_lml = [&](const opt::Point& x) {
    try {
      return -log_marginal_likelihood(model, to_params(x));
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::vector<std::pair<double, opt::Point>> seeds;
  const opt::Point incumbent{std::log(model.params.signal_std), std::log(model.params.length_space),
                             std::log(model.params.length_time)};
  const double incumbent_value = negative_lml(incumbent);
  seeds.emplace_back(incumbent_value, incumbent);
  const int g = std::max(opts.grid_per_axis, 1);
  for (int a = 0; a < g; ++a)
    for (int b = 0; b < g; ++b)
      for (int c = 0; c < g; ++c) {
        auto at = [&](int i, int axis) {
          return g == 1 ? 0.5 * (lower[axis] + upper[axis])
                        : lower[axis] + (upper[axis] - lower[axis]) * (i + 0.5) / static_cast<double>(g);
        };
        opt::Point x{at(a, 0), at(b, 1), at(c, 2)};
        seeds.emplace_back(negative_lml(x), std::move(x));
      }
  std::stable_sort(seeds.begin(), seeds.end(), [](const auto& l, const auto& r) { return l.first < r.first; });

  double best_value = seeds.front().first;
  opt::Point best = seeds.front().second;
  opt::SimplexOptions so;
  so.max_evaluations = opts.max_evaluations_per_start;
  const int starts = std::min<int>(opts.refine_starts, static_cast<int>(seeds.size()));
  for (int s = 0; s < starts; ++s) {
    const auto r = opt::nelder_mead_min(negative_lml, seeds[s].second, lower, upper, so);
    if (r.value < best_value) {
      best_value = r.value;
      best = r.x;
    }
  }
  if (!(best_value < incumbent_value)) return model.params;
  return to_params(best);
}

/// Block-diagonal Gaussian over a predicted position sequence. Block t
/// covers step start_step + 1 + t. A density raised to a power a has
/// covariance Sigma / a; `exponent` records such a power lazily.
struct TrajectoryGaussian {
  int start_step = 0;
  Eigen::VectorXd mean;
  std::vector<Mat2> cov_blocks;
  double exponent = 1.0;

  int horizon() const { return static_cast<int>(cov_blocks.size()); }
  Vec2 mean_at(int t) const { return mean.segment<2>(2 * t); }
  Mat2 covariance(int t) const { return cov_blocks[static_cast<std::size_t>(t)] / exponent; }

  TrajectoryGaussian powered(double a) const {
    TrajectoryGaussian out = *this;
    out.exponent *= a;
    return out;
  }

  void validate() const {
    if (mean.size() != 2 * horizon()) throw StructuralError("trajectory mean length must be 2H");
    if (!(exponent > 0.0)) throw StructuralError("trajectory exponent must be positive");
    for (const auto& b : cov_blocks)
      if (!is_spd(b)) throw StructuralError("trajectory covariance block not SPD");
  }
};

// Position variance floor keeps blocks SPD when the GP has interpolated a
// point almost exactly.
inline constexpr double kBlockVarianceFloor = 1e-12;

struct NominalRollout {
  std::vector<Vec2> path;                // x(k+1) .. x(k+H)
  std::vector<VelocityPrediction> step;  // velocity posterior at x(k) .. x(k+H-1)
};

inline NominalRollout rollout_nominal(const GpModel& model, const Vec2& x_k, int k, int H, double dt) {
  if (H < 1) throw StructuralError("horizon must be at least one step");
  const GpPosterior post(model);
  NominalRollout r;
  Vec2 x = x_k;
  for (int tau = k; tau < k + H; ++tau) {
    const auto v = post.predict({x, tau * dt});
    r.step.push_back(v);
    x = x + v.mean * dt;
    r.path.push_back(x);
  }
  return r;
}

/// x(t+1) = x(t) + mu(x(t), t*dt) * dt, seeded at x(k) = x_k.
inline std::vector<Vec2> nominal_path(const GpModel& model, const Vec2& x_k, int k, int H, double dt) {
  return rollout_nominal(model, x_k, k, H, dt).path;
}

/// Gaussian over the next H positions: mean is the nominal path, block for
/// x(t+1) is dt^2 times the velocity variance at the linearization point x(t).
inline TrajectoryGaussian local_trajectory_pdf(const GpModel& model, const Vec2& x_k, int k, int H, double dt) {
  const auto r = rollout_nominal(model, x_k, k, H, dt);
  TrajectoryGaussian g;
  g.start_step = k;
  g.mean.resize(2 * H);
  for (int t = 0; t < H; ++t) {
    g.mean.segment<2>(2 * t) = r.path[static_cast<std::size_t>(t)];
    const double var = std::max(dt * dt * r.step[static_cast<std::size_t>(t)].variance, kBlockVarianceFloor);
    g.cov_blocks.push_back(var * Mat2::Identity());
  }
  return g;
}

}  // namespace resin
