#pragma once

// Small derivative-free optimizers shared by the GP, fusion and planning
// code. Everything here is deterministic for a fixed input.

#include <resin/core.hpp>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace resin::opt {

struct ScalarResult {
  double x = 0.0;
  double value = 0.0;
  int iterations = 0;
};

/// Golden-section minimization of a unimodal f on [lo, hi]. When the two
/// interior probes tie exactly, both ends contract, so a constant function
/// converges to the midpoint.
template <class F>
ScalarResult golden_section_min(F&& f, double lo, double hi, double tol = 1e-6, int max_iter = 200) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  int it = 0;
  while (b - a > tol && it < max_iter) {
    ++it;
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else if (fd < fc) {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    } else {
      a = c;
      b = d;
      c = b - inv_phi * (b - a);
      d = a + inv_phi * (b - a);
      fc = f(c);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x), it};
}

using Point = std::vector<double>;

struct BoxResult {
  Point x;
  double value = -std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool budget_exhausted = false;
};

struct CompassOptions {
  int max_evaluations = 2000;
  /// Local searches are started from this many of the best seeds.
  int local_starts = 3;
  /// Initial step as a fraction of each coordinate's range.
  double initial_step = 0.25;
  /// Stop a local search when the step falls below this fraction of the range.
  double min_step = 1e-3;
};

/// Multi-start bounded compass search maximizing f over [lower, upper].
/// All seeds are evaluated first; local searches then run from the best
/// `local_starts` of them. The result is never worse than the best seed.
template <class F>
BoxResult maximize_box(F&& f, const Point& lower, const Point& upper, const std::vector<Point>& seeds,
                       const CompassOptions& opts) {
  const std::size_t dim = lower.size();
  BoxResult best;
  if (seeds.empty()) return best;

  auto project = [&](Point p) {
    for (std::size_t i = 0; i < dim; ++i) p[i] = std::clamp(p[i], lower[i], upper[i]);
    return p;
  };
  int evals = 0;
  auto eval = [&](const Point& p) {
    ++evals;
    return f(p);
  };

  std::vector<std::pair<double, std::size_t>> ranked;
  std::vector<Point> starts;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    Point p = project(seeds[s]);
    const double v = eval(p);
    ranked.emplace_back(v, s);
    starts.push_back(std::move(p));
    if (v > best.value) {
      best.value = v;
      best.x = starts.back();
    }
  }
  // Stable so that ties keep seed order.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& l, const auto& r) { return l.first > r.first; });

  Point range(dim);
  for (std::size_t i = 0; i < dim; ++i) range[i] = upper[i] - lower[i];

  const int n_local = std::min<int>(opts.local_starts, static_cast<int>(ranked.size()));
  for (int ls = 0; ls < n_local; ++ls) {
    Point x = starts[ranked[ls].second];
    double fx = ranked[ls].first;
    double frac = opts.initial_step;
    while (frac >= opts.min_step) {
      if (evals >= opts.max_evaluations) {
        best.budget_exhausted = true;
        break;
      }
      bool improved = false;
      for (std::size_t i = 0; i < dim && evals < opts.max_evaluations; ++i) {
        if (range[i] <= 0.0) continue;
        for (const double sign : {1.0, -1.0}) {
          Point y = x;
          y[i] = std::clamp(x[i] + sign * frac * range[i], lower[i], upper[i]);
          if (y[i] == x[i]) continue;
          const double fy = eval(y);
          if (fy > fx) {
            x = std::move(y);
            fx = fy;
            improved = true;
            break;
          }
          if (evals >= opts.max_evaluations) break;
        }
      }
      if (!improved) frac *= 0.5;
    }
    if (fx > best.value) {
      best.value = fx;
      best.x = x;
    }
    if (best.budget_exhausted) break;
  }
  best.evaluations = evals;
  return best;
}

struct SimplexOptions {
  int max_evaluations = 200;
  double initial_step = 0.5;
  double tolerance = 1e-6;
};

/// Nelder-Mead minimization with every vertex clamped into [lower, upper].
template <class F>
BoxResult nelder_mead_min(F&& f, const Point& x0, const Point& lower, const Point& upper, const SimplexOptions& opts) {
  const std::size_t n = x0.size();
  auto project = [&](Point p) {
    for (std::size_t i = 0; i < n; ++i) p[i] = std::clamp(p[i], lower[i], upper[i]);
    return p;
  };
  int evals = 0;
  auto eval = [&](const Point& p) {
    ++evals;
    return f(p);
  };

  std::vector<Point> simplex{project(x0)};
  for (std::size_t i = 0; i < n; ++i) {
    Point p = x0;
    p[i] += (p[i] + opts.initial_step <= upper[i]) ? opts.initial_step : -opts.initial_step;
    simplex.push_back(project(p));
  }
  std::vector<double> fv;
  for (const auto& p : simplex) fv.push_back(eval(p));

  std::vector<std::size_t> order(n + 1);
  while (evals < opts.max_evaluations) {
    for (std::size_t i = 0; i <= n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return fv[l] < fv[r]; });
    const std::size_t lo = order.front(), hi = order.back(), second = order[n - 1];
    if (std::abs(fv[hi] - fv[lo]) <= opts.tolerance * (std::abs(fv[lo]) + opts.tolerance)) break;

    Point centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i)
      if (i != hi)
        for (std::size_t d = 0; d < n; ++d) centroid[d] += simplex[i][d] / static_cast<double>(n);
    auto along = [&](double t) {
      Point p(n);
      for (std::size_t d = 0; d < n; ++d) p[d] = centroid[d] + t * (simplex[hi][d] - centroid[d]);
      return project(std::move(p));
    };

    Point xr = along(-1.0);
    const double fr = eval(xr);
    if (fr < fv[lo]) {
      Point xe = along(-2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[hi] = std::move(xe);
        fv[hi] = fe;
      } else {
        simplex[hi] = std::move(xr);
        fv[hi] = fr;
      }
    } else if (fr < fv[second]) {
      simplex[hi] = std::move(xr);
      fv[hi] = fr;
    } else {
      Point xc = along(fr < fv[hi] ? -0.5 : 0.5);
      const double fc = eval(xc);
      if (fc < std::min(fr, fv[hi])) {
        simplex[hi] = std::move(xc);
        fv[hi] = fc;
      } else {
        for (std::size_t i = 0; i <= n; ++i) {
          if (i == lo) continue;
          for (std::size_t d = 0; d < n; ++d) simplex[i][d] = simplex[lo][d] + 0.5 * (simplex[i][d] - simplex[lo][d]);
          fv[i] = eval(simplex[i]);
        }
      }
    }
  }
  const auto it = std::min_element(fv.begin(), fv.end());
  BoxResult r;
  r.x = simplex[static_cast<std::size_t>(std::distance(fv.begin(), it))];
  r.value = *it;
  r.evaluations = evals;
  r.budget_exhausted = evals >= opts.max_evaluations;
  return r;
}

}  // namespace resin::opt
