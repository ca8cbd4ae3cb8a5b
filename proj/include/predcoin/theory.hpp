#ifndef PREDCOIN_THEORY_HPP
#define PREDCOIN_THEORY_HPP

// Empirical checks of the boundary-estimate convergence bound and of its
// collapse under fair label flips, on the quadratic analytic oracle.

#include <iosfwd>

#include "predcoin/attacks.hpp"

namespace predcoin {

/// u.v / (|u||v|), clamped to [-1, 1]. Throws on a zero vector.
double cos_angle(std::span<const double> u, std::span<const double> v);

/// Curvature constant of the quadratic oracle (its Hessian is -2I).
inline constexpr double kQuadraticL = 2.0;

/// 1 - 9 L^2 delta^2 (d-1)^2 / (8 |grad S|^2).
double convergence_bound(std::size_t d, double delta, double grad_norm, double L = kQuadraticL);

struct ConvergenceConfig {
  std::vector<std::size_t> dims{5, 20};
  std::vector<double> deltas{1e-2, 1e-3};
  std::size_t samples = 20000;
  double radius = 1.0;
  std::uint64_t seed = 0;
};

struct ConvergenceRow {
  std::size_t d = 0;
  double delta = 0.0;
  std::size_t samples = 0;
  double cos_measured = 0.0;
  double bound_rhs = 1.0;
  double slack = 0.0;
  bool pass = false;
  /// delta == 0: no estimate is formed and the row passes vacuously.
  bool degenerate = false;
};

/// One row per (d, delta). Each row estimates the gradient at r*e_1 on the
/// sphere of radius r; rows for the same d share their sphere draws.
std::vector<ConvergenceRow> convergence_experiment(const ConvergenceConfig& cfg);
std::vector<ConvergenceRow> convergence_experiment_serial(const ConvergenceConfig& cfg);

void write_convergence_csv(std::ostream& os, std::span<const ConvergenceRow> rows);

/// Eq. 3 estimate with each answer negated with probability flip_prob.
/// Sphere directions come from `sphere_rng`, coins from `coin_rng`.
GradientEstimate flipped_estimate(HardLabelOracle& o, ClassIndex c_star, std::span<const double> x_t, double delta,
                                  std::size_t samples, double flip_prob, Rng& sphere_rng, Rng& coin_rng);

struct CollapseConfig {
  std::size_t d = 20;
  double delta = 1e-3;
  std::size_t samples = 10000;
  std::size_t trials = 50;
  double flip_prob = 0.5;
  double radius = 1.0;
  std::uint64_t seed = 0;
};

struct CollapseStats {
  double mean_norm = 0.0;
  double mean_cos = 0.0;
  double std_cos = 0.0;
  /// Same statistics without flips, on the same sphere draws.
  double baseline_mean_norm = 0.0;
  double baseline_mean_cos = 0.0;
  /// sqrt(trace Cov(phi u) / B) of the unflipped estimator, averaged over trials.
  double baseline_se = 0.0;
};

CollapseStats flip_collapse_experiment(const CollapseConfig& cfg);

struct BetaCheck {
  std::size_t d = 0;
  std::size_t samples = 0;
  double mean = 0.0;
  double var = 0.0;
  double expected_mean = 0.0;
  double expected_var = 0.0;
  double se_mean = 0.0;
  double se_var = 0.0;
  bool pass = false;
};

/// Moments of <e_1, u>^2 for u uniform on the sphere vs Beta(1/2, (d-1)/2).
BetaCheck beta_projection_check(std::size_t d, std::size_t samples, std::uint64_t seed);

/// Margin max_{i != c} F_i(x) - F_c(x) of a network.
double network_margin(const DenseNetwork& net, std::span<const double> x, ClassIndex c);

/// Central finite-difference gradient of network_margin.
Vec network_margin_gradient(const DenseNetwork& net, std::span<const double> x, ClassIndex c, double h = 1e-5);

}  // namespace predcoin

#endif
