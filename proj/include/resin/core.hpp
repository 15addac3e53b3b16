#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace resin {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Error taxonomy. Every failure the library reports derives from resin::Error.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BoundsError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct StructuralError : Error {
  using Error::Error;
};
struct ProtocolError : Error {
  using Error::Error;
};
struct RoutingError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

/// Wraps an angle into [0, 2*pi).
inline double wrap_angle(double a) {
  double w = std::fmod(a, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  // fmod can return exactly 2*pi after the correction for tiny negatives
  if (w >= kTwoPi) w = 0.0;
  return w;
}

/// Wraps an angle difference into [-pi, pi).
inline double wrap_pi(double a) {
  return wrap_angle(a + std::numbers::pi) - std::numbers::pi;
}

inline double log_det2(const Mat2& m) {
  return std::log(m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0));
}

inline bool is_spd(const Mat2& m) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return m(0, 0) > 0.0 && det > 0.0 && std::abs(m(0, 1) - m(1, 0)) <= 1e-9 * (std::abs(m(0, 0)) + std::abs(m(1, 1)));
}

}  // namespace resin
