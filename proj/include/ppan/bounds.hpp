#pragma once

// Leakage-distortion trade-off curves: exact Gaussian solutions and the
// KSG-based lower / upper envelopes used for non-Gaussian attributes.
// Distortion is squared error; all information quantities are in nats.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "error.hpp"
#include "ksg.hpp"
#include "matrix.hpp"
#include "observation.hpp"

namespace ppan {

inline constexpr double kEqualVarianceTolerance = 0.05;
inline constexpr double kCenteringTolerance = 0.02;  // |mean| <= tol * std

struct MomentSummary {
  double rho = 0.0;
  double var_x = 1.0;
  double var_y = 1.0;
  double h_knn_x = 0.0;
  double i_knn_xy = 0.0;  // clamped at 0
};

struct BoundCurve {
  ObservationMode observation_mode = ObservationMode::useful_only;
  std::vector<double> deltas;
  std::vector<double> lower;
  std::vector<double> upper;
  MomentSummary moments;
};

namespace detail {

inline void check_rho(double rho) {
  if (!(std::abs(rho) <= 1.0)) throw Error(ErrorKind::domain, "correlation must lie in [-1, 1]");
}
inline void check_delta(double delta) {
  if (!(delta >= 0.0)) throw Error(ErrorKind::domain, "distortion budget must be >= 0");
}

inline double half_log_2pie(double v) {
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * v);
}

}  // namespace detail

/// Optimal leakage for jointly Gaussian attributes when only Y is observed.
inline double gaussian_useful_leakage(double rho, double var_y, double delta) {
  detail::check_rho(rho);
  detail::check_delta(delta);
  if (!(var_y > 0.0)) throw Error(ErrorKind::domain, "var_y must be positive");
  const double r2 = rho * rho;
  return std::max(0.0, 0.5 * std::log(1.0 / (1.0 - r2 + r2 * delta / var_y)));
}

/// min E^2[XZ]/E[Z^2] over E[(Y-Z)^2] <= delta for sigma_X = sigma_Y = sigma,
/// solved in closed form (t3 = 0, boundary optimum).
inline double full_min_ratio(double rho, double var, double delta) {
  detail::check_rho(rho);
  detail::check_delta(delta);
  const double r2 = rho * rho;
  if (delta >= var * r2) return 0.0;
  const double s = std::sqrt(r2 * (var - delta)) - std::sqrt((1.0 - r2) * delta);
  return s * s;
}

/// Optimal leakage for unit-variance jointly Gaussian attributes, full observation.
inline double gaussian_full_leakage(double rho, double delta) {
  detail::check_rho(rho);
  detail::check_delta(delta);
  if (delta >= rho * rho) return 0.0;
  return -0.5 * std::log(1.0 - full_min_ratio(rho, 1.0, delta));
}

/// Useful-data lower bound: max{0, H(X) - 1/2 log[2 pi e var_x (rho^2 delta / var_y + 1 - rho^2)]}.
inline double useful_lower_bound(const MomentSummary& m, double delta) {
  detail::check_delta(delta);
  const double r2 = m.rho * m.rho;
  return std::max(0.0, m.h_knn_x - detail::half_log_2pie(m.var_x * (r2 * delta / m.var_y + (1.0 - r2))));
}

/// Time-sharing upper bound I(X;Y) (1 - delta / var_y), zero from var_y on.
/// Budgets within 1e-9 (relative) of var_y count as var_y, so a rounding
/// residue in the standardized variance does not leave a 1e-15 tail.
inline double tradeoff_upper_bound(const MomentSummary& m, double delta) {
  detail::check_delta(delta);
  if (delta >= m.var_y * (1.0 - 1e-9)) return 0.0;
  return std::max(0.0, m.i_knn_xy) * (1.0 - delta / m.var_y);
}

inline double full_lower_bound_unit_variance(const MomentSummary& m, double delta) {
  detail::check_delta(delta);
  if (std::abs(m.var_x - 1.0) > kEqualVarianceTolerance || std::abs(m.var_y - 1.0) > kEqualVarianceTolerance)
    throw Error(ErrorKind::argument,
                "unit-variance bound needs var_x, var_y within 0.05 of 1; use the equal-variance form");
  const double c = m.h_knn_x - detail::half_log_2pie(1.0);
  if (delta >= m.rho * m.rho) return std::max(0.0, c);
  return std::max(0.0, c - 0.5 * std::log(1.0 - full_min_ratio(m.rho, 1.0, delta)));
}

/// Full-data lower bound for sigma_X^2 = sigma_Y^2 = sigma^2. sigma^2 is taken
/// as var_x (the second moment entering the max-entropy step).
inline double full_lower_bound_equal_variance(const MomentSummary& m, double delta) {
  detail::check_delta(delta);
  if (std::abs(m.var_x - m.var_y) > kEqualVarianceTolerance)
    throw Error(ErrorKind::argument,
                "full-data lower bound needs equal variances (standardize the attributes first)");
  const double var = m.var_x;
  const double c = m.h_knn_x - detail::half_log_2pie(1.0);
  if (delta >= var * m.rho * m.rho) return std::max(0.0, c - 0.5 * std::log(var));
  return std::max(0.0, c - 0.5 * std::log(var - full_min_ratio(m.rho, var, delta)));
}

inline double lower_bound(ObservationMode mode, const MomentSummary& m, double delta) {
  return mode == ObservationMode::useful_only ? useful_lower_bound(m, delta)
                                              : full_lower_bound_equal_variance(m, delta);
}

namespace oracle {

/// Brute-force minimum of sigma^2 (t1 + sigma rho)^2 / |z|^2 with
/// z = t + y, over a polar grid covering the disc t1^2 + t2^2 <= delta
/// (t3 = 0). Independent of the closed form; used to check it.
inline double min_ratio(double rho, double sigma, double delta, std::size_t grid_resolution) {
  detail::check_rho(rho);
  detail::check_delta(delta);
  if (grid_resolution < 200) throw Error(ErrorKind::argument, "grid_resolution must be >= 200");
  const double s2 = sigma * sigma;
  const double yj = sigma * std::sqrt(1.0 - rho * rho);
  const double radius = std::sqrt(delta);
  double best = INFINITY;
  const std::size_t n = grid_resolution;
  for (std::size_t a = 0; a < n; ++a) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(a) / static_cast<double>(n);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (std::size_t b = 0; b < n; ++b) {
      const double r = radius * static_cast<double>(b) / static_cast<double>(n - 1);
      const double t1 = r * ct, t2 = r * st;
      const double num = s2 * (t1 + sigma * rho) * (t1 + sigma * rho);
      const double den = t1 * t1 + t2 * t2 + 2.0 * t1 * sigma * rho + 2.0 * t2 * yj + s2;
      if (den <= 0.0) continue;
      best = std::min(best, num / den);
    }
  }
  return best;
}

}  // namespace oracle

/// Sample moments (1/N normalisation) plus KSG entropy and clamped MI.
inline MomentSummary compute_moments(const SampleMatrix& x, const SampleMatrix& y,
                                     std::size_t k = kDefaultNeighbors) {
  if (x.cols() != 1 || y.cols() != 1)
    throw Error(ErrorKind::argument, "bounds are defined for scalar private and useful attributes");
  if (x.rows() != y.rows()) throw Error(ErrorKind::argument, "x and y sample counts differ");
  const std::size_t n = x.rows();
  if (n < 2) throw Error(ErrorKind::argument, "need at least two samples");
  const double nn = static_cast<double>(n);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x(i, 0);
    my += y(i, 0);
  }
  mx /= nn;
  my /= nn;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x(i, 0) - mx, dy = y(i, 0) - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  MomentSummary m;
  m.var_x = sxx / nn;
  m.var_y = syy / nn;
  if (!(m.var_x > 0.0) || !(m.var_y > 0.0)) throw Error(ErrorKind::degenerate, "attribute with zero variance");
  m.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(mx) > kCenteringTolerance * std::sqrt(m.var_x) ||
      std::abs(my) > kCenteringTolerance * std::sqrt(m.var_y))
    throw Error(ErrorKind::precondition, "attributes must be centered (standardize the data first)");
  m.h_knn_x = knn_entropy(x, k);
  m.i_knn_xy = ksg_leakage(x, y, k);
  return m;
}

/// n evenly spaced budgets from 0.05 var_y to var_y inclusive.
inline std::vector<double> default_delta_grid(double var_y = 1.0, std::size_t n = 21) {
  std::vector<double> g(n);
  const double lo = 0.05 * var_y;
  for (std::size_t i = 0; i < n; ++i)
    g[i] = n == 1 ? var_y : lo + (var_y - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

inline void check_delta_grid(const std::vector<double>& deltas) {
  if (deltas.empty()) throw Error(ErrorKind::argument, "empty distortion grid");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    detail::check_delta(deltas[i]);
    if (i > 0 && !(deltas[i] > deltas[i - 1]))
      throw Error(ErrorKind::argument, "distortion grid must be strictly increasing");
  }
}

inline BoundCurve bound_curve_from_moments(const MomentSummary& m, ObservationMode mode,
                                           const std::vector<double>& deltas) {
  check_delta_grid(deltas);
  if (mode == ObservationMode::full_data && std::abs(m.var_x - m.var_y) > kEqualVarianceTolerance)
    throw Error(ErrorKind::precondition,
                "full-data bounds require equal variances; standardize the attributes first");
  BoundCurve c;
  c.observation_mode = mode;
  c.deltas = deltas;
  c.moments = m;
  for (double d : deltas) {
    c.lower.push_back(lower_bound(mode, m, d));
    c.upper.push_back(tradeoff_upper_bound(m, d));
  }
  return c;
}

inline BoundCurve build_bound_curve(const SampleMatrix& x, const SampleMatrix& y, ObservationMode mode,
                                    const std::vector<double>& deltas, std::size_t k = kDefaultNeighbors) {
  check_delta_grid(deltas);
  return bound_curve_from_moments(compute_moments(x, y, k), mode, deltas);
}

inline void write_bound_curve_csv(std::ostream& os, const BoundCurve& c) {
  const auto old = os.precision(17);
  os << "delta,lower_nats,upper_nats\n";
  for (std::size_t i = 0; i < c.deltas.size(); ++i) os << c.deltas[i] << ',' << c.lower[i] << ',' << c.upper[i] << '\n';
  os.precision(old);
}

}  // namespace ppan
