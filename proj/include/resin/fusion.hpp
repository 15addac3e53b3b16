#pragma once

// Rumor-robust fusion of trajectory Gaussians: weighted exponential products
// with Chernoff-optimal weights, applied pairwise up a spanning tree and
// broadcast back down.

#include <resin/core.hpp>
#include <resin/gp.hpp>
#include <resin/network.hpp>
#include <resin/optimize.hpp>

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

namespace resin {

/// Floor for the entropy-drop weight of an expert that learned nothing.
inline constexpr double kBetaFloor = 1e-6;

struct FusedTrajectory {
  TrajectoryGaussian pdf;
  std::set<int> contributors;
  /// Differential entropy of the GP prior over the same horizon; the
  /// reference for this expert's information weight.
  double prior_entropy = 0.0;
};

struct FusionWeights {
  double beta_a = 1.0;
  double beta_b = 1.0;
  double chernoff_w = 0.5;
};

struct FusionOptions {
  /// Search the Chernoff weight on the beta-powered densities (covariance
  /// Sigma / beta). When false, the raw local densities are used.
  bool chernoff_on_scaled = true;
  double tolerance = 1e-6;
  int max_iterations = 200;
};

/// Differential entropy of the block-diagonal Gaussian.
inline double gaussian_entropy(const TrajectoryGaussian& g) {
  const double c = std::log(kTwoPi * std::exp(1.0));
  double h = 0.0;
  for (int t = 0; t < g.horizon(); ++t) h += 0.5 * (2.0 * c + log_det2(g.covariance(t)));
  return h;
}

/// Entropy of the GP prior over H steps: every block is signal_std^2 dt^2 I.
inline double prior_entropy(double signal_std, int H, double dt) {
  const double var = signal_std * signal_std * dt * dt;
  const double c = std::log(kTwoPi * std::exp(1.0));
  return H * 0.5 * (2.0 * c + 2.0 * std::log(var));
}

inline double beta_weight(double prior_entropy_value, const TrajectoryGaussian& posterior) {
  return std::max(kBetaFloor, prior_entropy_value - gaussian_entropy(posterior));
}

/// log of the Chernoff coefficient, log \int p_a^w p_b^(1-w) dx, summed over
/// blocks. Convex in w, zero at both ends.
inline double chernoff_log_coefficient(const TrajectoryGaussian& a, const TrajectoryGaussian& b, double w) {
  double total = 0.0;
  for (int t = 0; t < a.horizon(); ++t) {
    const Mat2 A = a.covariance(t);
    const Mat2 B = b.covariance(t);
    const Mat2 mix = (1.0 - w) * A + w * B;
    const Vec2 d = a.mean_at(t) - b.mean_at(t);
    total += -0.5 * w * (1.0 - w) * d.dot(mix.ldlt().solve(d)) -
             0.5 * (log_det2(mix) - (1.0 - w) * log_det2(A) - w * log_det2(B));
  }
  return total;
}

namespace detail {

inline void require_compatible(const TrajectoryGaussian& a, const TrajectoryGaussian& b) {
  if (a.horizon() != b.horizon())
    throw StructuralError("cannot fuse trajectories of horizon " + std::to_string(a.horizon()) + " and " +
                          std::to_string(b.horizon()));
  if (a.start_step != b.start_step) throw StructuralError("cannot fuse trajectories anchored at different steps");
  if (a.mean.size() != 2 * a.horizon() || b.mean.size() != 2 * b.horizon())
    throw StructuralError("trajectory mean length must be 2H");
}

// Strict total order on (weight, pdf) pairs. Both fusion entry points compute
// on the canonically ordered pair so that swapping the operands gives
// bit-identical output.
inline bool precedes(const TrajectoryGaussian& a, double beta_a, const TrajectoryGaussian& b, double beta_b) {
  if (beta_a != beta_b) return beta_a < beta_b;
  if (a.exponent != b.exponent) return a.exponent < b.exponent;
  for (Eigen::Index i = 0; i < a.mean.size(); ++i)
    if (a.mean[i] != b.mean[i]) return a.mean[i] < b.mean[i];
  for (std::size_t t = 0; t < a.cov_blocks.size(); ++t)
    for (int e = 0; e < 4; ++e)
      if (a.cov_blocks[t](e) != b.cov_blocks[t](e)) return a.cov_blocks[t](e) < b.cov_blocks[t](e);
  return false;
}

inline double chernoff_weight_ordered(const TrajectoryGaussian& a, const TrajectoryGaussian& b,
                                      const FusionOptions& opts) {
  const auto r = opt::golden_section_min([&](double w) { return chernoff_log_coefficient(a, b, w); }, 0.0, 1.0,
                                         opts.tolerance, opts.max_iterations);
  // Golden section never probes the ends or the midpoint; a midpoint that is at
  // least as good wins, which settles flat and mirror-symmetric pairs at 0.5.
  double best_w = r.x, best = r.value;
  const double mid = chernoff_log_coefficient(a, b, 0.5);
  if (mid <= best) {
    best = mid;
    best_w = 0.5;
  }
  for (const double w : {0.0, 1.0}) {
    const double v = chernoff_log_coefficient(a, b, w);
    if (v < best) {
      best = v;
      best_w = w;
    }
  }
  return best_w;
}

}  // namespace detail

/// Exponent w on `a` (1 - w on `b`) minimizing the Chernoff coefficient,
/// found by bounded golden-section search. Exact ties resolve to 0.5.
inline double chernoff_weight(const TrajectoryGaussian& a, const TrajectoryGaussian& b,
                              const FusionOptions& opts = {}) {
  detail::require_compatible(a, b);
  if (!detail::precedes(a, 1.0, b, 1.0) && !detail::precedes(b, 1.0, a, 1.0)) return 0.5;
  if (detail::precedes(b, 1.0, a, 1.0)) return 1.0 - detail::chernoff_weight_ordered(b, a, opts);
  return detail::chernoff_weight_ordered(a, b, opts);
}

/// Chernoff weight and the normalized exponents actually applied.
struct PairExponents {
  FusionWeights weights;
  double exponent_a = 0.5;
  double exponent_b = 0.5;
};

inline PairExponents fusion_exponents(const TrajectoryGaussian& a, const TrajectoryGaussian& b, double beta_a,
                                      double beta_b, const FusionOptions& opts = {}) {
  detail::require_compatible(a, b);
  if (!(beta_a > 0.0) || !(beta_b > 0.0)) throw StructuralError("fusion weights must be positive");
  const double w = opts.chernoff_on_scaled ? chernoff_weight(a.powered(beta_a), b.powered(beta_b), opts)
                                           : chernoff_weight(a, b, opts);
  const double ea = beta_a * w;
  const double eb = beta_b * (1.0 - w);
  const double norm = ea + eb;
  PairExponents out;
  out.weights = {beta_a / norm, beta_b / norm, w};
  out.exponent_a = ea / norm;
  out.exponent_b = eb / norm;
  return out;
}

namespace detail {

inline FusedTrajectory fuse_ordered(const FusedTrajectory& a, const FusedTrajectory& b, double beta_a, double beta_b,
                                    const FusionOptions& opts) {
  const auto ex = fusion_exponents(a.pdf, b.pdf, beta_a, beta_b, opts);
  const int H = a.pdf.horizon();
  FusedTrajectory out;
  out.pdf.start_step = a.pdf.start_step;
  out.pdf.mean.resize(2 * H);
  for (int t = 0; t < H; ++t) {
    const Mat2 Pa = a.pdf.covariance(t).inverse();
    const Mat2 Pb = b.pdf.covariance(t).inverse();
    const Mat2 info = ex.exponent_a * Pa + ex.exponent_b * Pb;
    Mat2 cov = info.inverse();
    cov = 0.5 * (cov + cov.transpose()).eval();
    out.pdf.mean.segment<2>(2 * t) = cov * (ex.exponent_a * Pa * a.pdf.mean_at(t) + ex.exponent_b * Pb * b.pdf.mean_at(t));
    out.pdf.cov_blocks.push_back(cov);
  }
  out.contributors = a.contributors;
  out.contributors.insert(b.contributors.begin(), b.contributors.end());
  out.prior_entropy = std::max(a.prior_entropy, b.prior_entropy);
  return out;
}

}  // namespace detail

/// Weighted exponential product of two experts. The beta weights are
/// rescaled so the two exponents sum to one, which makes fuse_pair(P, P) = P.
inline FusedTrajectory fuse_pair(const FusedTrajectory& a, const FusedTrajectory& b, double beta_a, double beta_b,
                                 const FusionOptions& opts = {}) {
  detail::require_compatible(a.pdf, b.pdf);
  if (detail::precedes(b.pdf, beta_b, a.pdf, beta_a)) return detail::fuse_ordered(b, a, beta_b, beta_a, opts);
  return detail::fuse_ordered(a, b, beta_a, beta_b, opts);
}

inline double information_weight(const FusedTrajectory& f) { return beta_weight(f.prior_entropy, f.pdf); }

// ---------------------------------------------------------------------------
// Wire format of a pdf bundle (one message per tree edge and direction):
//
//   u32 round | i32 start_step | u16 H | u16 M
//   M x { i32 target_id | f64 prior_entropy | u64 contributor mask |
//         2H x f64 mean | H x (f64 xx, f64 xy, f64 yy) }
//
// Contributor ids must lie in [0, 64). The lazy exponent is folded into the
// covariance blocks.

struct PdfBundle {
  std::uint32_t round = 0;
  std::vector<int> target_ids;
  std::vector<FusedTrajectory> pdfs;
};

inline std::size_t pdf_bundle_size(int M, int H) {
  return 12 + static_cast<std::size_t>(M) * (4 + 8 + 8 + 40 * static_cast<std::size_t>(H));
}

inline std::vector<unsigned char> encode_pdf_bundle(const PdfBundle& b) {
  if (b.target_ids.size() != b.pdfs.size()) throw StructuralError("bundle ids and pdfs differ in length");
  const int H = b.pdfs.empty() ? 0 : b.pdfs.front().pdf.horizon();
  const int start = b.pdfs.empty() ? 0 : b.pdfs.front().pdf.start_step;
  ByteWriter w;
  w.put<std::uint32_t>(b.round);
  w.put<std::int32_t>(start);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(H));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(b.pdfs.size()));
  for (std::size_t i = 0; i < b.pdfs.size(); ++i) {
    const auto& f = b.pdfs[i];
    if (f.pdf.horizon() != H || f.pdf.start_step != start) throw StructuralError("bundle pdfs must share a horizon");
    std::uint64_t mask = 0;
    for (int c : f.contributors) {
      if (c < 0 || c >= 64) throw StructuralError("contributor id outside the 64-bit mask");
      mask |= std::uint64_t{1} << c;
    }
    w.put<std::int32_t>(b.target_ids[i]);
    w.put<double>(f.prior_entropy);
    w.put<std::uint64_t>(mask);
    for (int k = 0; k < 2 * H; ++k) w.put<double>(f.pdf.mean[k]);
    for (int t = 0; t < H; ++t) {
      const Mat2 c = f.pdf.covariance(t);
      w.put<double>(c(0, 0));
      w.put<double>(c(0, 1));
      w.put<double>(c(1, 1));
    }
  }
  return w.take();
}

inline PdfBundle decode_pdf_bundle(const std::vector<unsigned char>& bytes) {
  ByteReader r(bytes);
  PdfBundle b;
  b.round = r.get<std::uint32_t>();
  const int start = r.get<std::int32_t>();
  const int H = r.get<std::uint16_t>();
  const int M = r.get<std::uint16_t>();
  for (int i = 0; i < M; ++i) {
    FusedTrajectory f;
    b.target_ids.push_back(r.get<std::int32_t>());
    f.prior_entropy = r.get<double>();
    const auto mask = r.get<std::uint64_t>();
    for (int c = 0; c < 64; ++c)
      if (mask & (std::uint64_t{1} << c)) f.contributors.insert(c);
    f.pdf.start_step = start;
    f.pdf.mean.resize(2 * H);
    for (int k = 0; k < 2 * H; ++k) f.pdf.mean[k] = r.get<double>();
    for (int t = 0; t < H; ++t) {
      Mat2 c;
      c(0, 0) = r.get<double>();
      c(0, 1) = c(1, 0) = r.get<double>();
      c(1, 1) = r.get<double>();
      f.pdf.cov_blocks.push_back(c);
    }
    b.pdfs.push_back(std::move(f));
  }
  if (!r.done()) throw StructuralError("trailing bytes after pdf bundle");
  return b;
}

// ---------------------------------------------------------------------------

/// Fuses every target's local pdfs over the tree: leaves to root by pairwise
/// fusion (children in ascending id), then the root's result is broadcast
/// back down. Each edge carries one bundle upward and one downward. Returns
/// the fused pdf per target slot, identical at every sensor.
inline std::vector<FusedTrajectory> tree_fuse_targets(const std::map<int, std::vector<FusedTrajectory>>& locals,
                                                      const std::vector<int>& target_ids, const TreeTopology& tree,
                                                      const FusionOptions& opts = {}, MessageLedger* ledger = nullptr,
                                                      int round = 0) {
  try {
    tree.validate();
  } catch (const StructuralError& e) {
    throw ProtocolError(std::string("fusion over invalid topology: ") + e.what());
  }
  for (int n : tree.nodes) {
    const auto it = locals.find(n);
    if (it == locals.end()) throw ProtocolError("sensor " + std::to_string(n) + " has no local prediction");
    if (it->second.size() != target_ids.size()) throw ProtocolError("sensor holds the wrong number of targets");
  }
  if (locals.size() != tree.nodes.size()) throw ProtocolError("local predictions for sensors outside the tree");

  const std::size_t M = target_ids.size();
  const int H = M == 0 ? 0 : locals.begin()->second.front().pdf.horizon();
  const std::size_t bundle_bytes = pdf_bundle_size(static_cast<int>(M), H);

  std::map<int, std::vector<FusedTrajectory>> acc;
  for (int n : tree.leaves_to_root_order()) {
    std::vector<FusedTrajectory> mine = locals.at(n);
    for (int c : tree.children(n)) {
      if (ledger) ledger->send(round, c, n, MessageKind::LocalPdf, bundle_bytes, tree);
      const auto& theirs = acc.at(c);
      for (std::size_t i = 0; i < M; ++i)
        mine[i] = fuse_pair(mine[i], theirs[i], information_weight(mine[i]), information_weight(theirs[i]), opts);
      acc.erase(c);
    }
    acc[n] = std::move(mine);
  }
  if (ledger) {
    for (int n : tree.depth_first_order())
      for (int c : tree.children(n)) ledger->send(round, n, c, MessageKind::FusedPdf, bundle_bytes, tree);
  }
  return acc.at(tree.root);
}

/// Single-target form of tree_fuse_targets.
inline FusedTrajectory tree_fuse(const std::map<int, FusedTrajectory>& locals, const TreeTopology& tree,
                                 const FusionOptions& opts = {}, MessageLedger* ledger = nullptr, int round = 0) {
  std::map<int, std::vector<FusedTrajectory>> wrapped;
  for (const auto& [id, f] : locals) wrapped[id] = {f};
  return tree_fuse_targets(wrapped, {0}, tree, opts, ledger, round).front();
}

}  // namespace resin
