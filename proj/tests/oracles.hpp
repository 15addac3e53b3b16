#pragma once

// Independent reference implementations used only by the tests. None of
// these call into the library's numerics.

#include <resin/core.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

struct Point3 {
  double x, y, t;
};

inline double rbf(const Point3& a, const Point3& b, double sf, double lx, double lt) {
  const double dx = a.x - b.x, dy = a.y - b.y, dt = a.t - b.t;
  return sf * sf * std::exp(-0.5 * (dx * dx + dy * dy) / (lx * lx) - 0.5 * dt * dt / (lt * lt));
}

// Plain textbook GP regression with an explicit matrix inverse.
struct DirectGp {
  std::vector<Point3> X;
  std::vector<Eigen::Vector2d> Z;
  double sf = 1, lx = 2, lt = 4, noise = 0.1;
  double jitter = 0.0;

  void predict(const Point3& q, Eigen::Vector2d& mean, double& var) const {
    const int n = static_cast<int>(X.size());
    if (n == 0) {
      mean.setZero();
      var = sf * sf;
      return;
    }
    Eigen::MatrixXd K(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) K(i, j) = rbf(X[i], X[j], sf, lx, lt) + (i == j ? noise * noise + jitter : 0.0);
    const Eigen::MatrixXd Kinv = K.inverse();
    Eigen::VectorXd k(n);
    for (int i = 0; i < n; ++i) k(i) = rbf(q, X[i], sf, lx, lt);
    Eigen::MatrixXd Zm(n, 2);
    for (int i = 0; i < n; ++i) Zm.row(i) = Z[i].transpose();
    mean = (k.transpose() * Kinv * Zm).transpose();
    var = sf * sf - k.dot(Kinv * k);
  }
};

// log \int N(x; ma, A)^w N(x; mb, B)^(1-w) dx through the information form
// of the unnormalized product.
inline double log_chernoff(const Eigen::VectorXd& ma, const Eigen::MatrixXd& A, const Eigen::VectorXd& mb,
                           const Eigen::MatrixXd& B, double w) {
  const double d = static_cast<double>(ma.size());
  const Eigen::MatrixXd Ai = A.inverse(), Bi = B.inverse();
  const Eigen::MatrixXd J = w * Ai + (1 - w) * Bi;
  const Eigen::VectorXd h = w * Ai * ma + (1 - w) * Bi * mb;
  const double c = w * ma.dot(Ai * ma) + (1 - w) * mb.dot(Bi * mb);
  const double log2pi = std::log(2 * std::numbers::pi);
  return -0.5 * d * log2pi - 0.5 * w * std::log(A.determinant()) - 0.5 * (1 - w) * std::log(B.determinant()) +
         0.5 * d * log2pi - 0.5 * std::log(J.determinant()) - 0.5 * (c - h.dot(J.inverse() * h));
}

inline double log_gauss(const Eigen::Vector2d& x, const Eigen::Vector2d& m, const Eigen::Matrix2d& S) {
  const Eigen::Vector2d d = x - m;
  return -std::log(2 * std::numbers::pi) - 0.5 * std::log(S.determinant()) - 0.5 * d.dot(S.inverse() * d);
}

// Kalman covariance update, one measurement of the full state.
inline Eigen::Matrix2d bayes_update(const Eigen::Matrix2d& P, const Eigen::Matrix2d& R) {
  return P - P * (P + R).inverse() * P;
}

// I(X; Z) for Z = X + V from the entropies of X and X | Z.
inline double entropy_mi(const Eigen::Matrix2d& P, const Eigen::Matrix2d& R) {
  const double c = std::log(2 * std::numbers::pi * std::numbers::e);
  const double hx = 0.5 * (2 * c + std::log(P.determinant()));
  const double hxz = 0.5 * (2 * c + std::log(bayes_update(P, R).determinant()));
  return hx - hxz;
}

inline Eigen::Matrix2d random_spd(auto& rng, double lo = 0.05, double hi = 3.0) {
  std::uniform_real_distribution<double> u(lo, hi), a(0.0, std::numbers::pi);
  const double th = a(rng);
  Eigen::Matrix2d Q;
  Q << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  const Eigen::Vector2d ev(u(rng), u(rng));
  const Eigen::Matrix2d S = Q * ev.asDiagonal() * Q.transpose();
  return 0.5 * (S + S.transpose());
}

}  // namespace oracle
