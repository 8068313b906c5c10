// Closed-form convergence and potential bounds, evaluated verbatim.
//
// All three take the interaction-time horizon T (one unit per edge
// activation), the mean local-step count H, and the graph quantities
// (degree r, spectral gap lambda2). The rate bounds assume the step
// size eta = n / sqrt(T); the potential bound takes eta explicitly.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace swarm {

namespace detail {

inline void check_bound_args(double mean_h, int r, double lambda2) {
  if (mean_h < 1.0) throw std::invalid_argument("bound requires H >= 1");
  if (r < 1) throw std::invalid_argument("bound requires r >= 1");
  if (!(lambda2 > 0.0)) throw std::invalid_argument("bound requires lambda2 > 0");
}

inline double graph_ratio_term(int r, double lambda2) {
  const double ratio = static_cast<double>(r) / lambda2;
  return ratio * ratio + 1.0;
}

}  // namespace detail

// Second-moment regime rate bound on (1/T) sum_t E||grad f(mu_t)||^2:
//   4 * f0_gap / (sqrt(T) * H)
//   + 2304 * H^2 * max(1, L^2) * M2 / sqrt(T) * (r^2/lambda2^2 + 1).
inline double bound_rate_second_moment(double f0_gap, std::int64_t total_t,
                                       double mean_h, double smoothness,
                                       double m2, int r, double lambda2) {
  detail::check_bound_args(mean_h, r, lambda2);
  if (total_t < 1) throw std::invalid_argument("bound requires T >= 1");
  const double sqrt_t = std::sqrt(static_cast<double>(total_t));
  const double l_sq = std::max(1.0, smoothness * smoothness);
  return 4.0 * f0_gap / (sqrt_t * mean_h) +
         2304.0 * mean_h * mean_h * l_sq * m2 / sqrt_t *
             detail::graph_ratio_term(r, lambda2);
}

// Variance regime rate bound (f = average of the agent objectives):
//   f0_gap / (sqrt(T) * H)
//   + 376 * H^2 * max(1, L^2) * (sigma2 + 4*rho2) / sqrt(T)
//     * (r^2/lambda2^2 + 1).
inline double bound_rate_variance(double f0_gap, std::int64_t total_t,
                                  double mean_h, double smoothness,
                                  double sigma2, double rho2, int r,
                                  double lambda2) {
  detail::check_bound_args(mean_h, r, lambda2);
  if (total_t < 1) throw std::invalid_argument("bound requires T >= 1");
  const double sqrt_t = std::sqrt(static_cast<double>(total_t));
  const double l_sq = std::max(1.0, smoothness * smoothness);
  return f0_gap / (sqrt_t * mean_h) +
         376.0 * mean_h * mean_h * l_sq * (sigma2 + 4.0 * rho2) / sqrt_t *
             detail::graph_ratio_term(r, lambda2);
}

// Steady-state bound on the variance potential:
//   E[Gamma_t] <= (40*r/lambda2 + 80*r^2/lambda2^2) * n * eta^2 * H^2 * M2.
inline double bound_gamma_steady(int n, int r, double lambda2, double eta,
                                 double mean_h, double m2) {
  detail::check_bound_args(mean_h, r, lambda2);
  if (n < 2) throw std::invalid_argument("bound requires n >= 2");
  const double ratio = static_cast<double>(r) / lambda2;
  return (40.0 * ratio + 80.0 * ratio * ratio) * static_cast<double>(n) *
         eta * eta * mean_h * mean_h * m2;
}

// Horizon preconditions attached to the rate bounds.
inline bool horizon_precondition_second_moment(std::int64_t total_t, int n) {
  const double n4 = std::pow(static_cast<double>(n), 4.0);
  return static_cast<double>(total_t) >= n4;
}

inline double horizon_threshold_variance(int n, double mean_h,
                                         double smoothness, int r,
                                         double lambda2) {
  detail::check_bound_args(mean_h, r, lambda2);
  const double n4 = std::pow(static_cast<double>(n), 4.0);
  const double l_sq = std::max(1.0, smoothness * smoothness);
  const double graph = detail::graph_ratio_term(r, lambda2);
  return 57600.0 * n4 * mean_h * mean_h * l_sq * graph * graph;
}

}  // namespace swarm
