#ifndef PREDCOIN_ADAPTIVE_HPP
#define PREDCOIN_ADAPTIVE_HPP

// Defense-aware attacks: detector bypass and repeated-query voting.

#include <optional>

#include "predcoin/attacks.hpp"

namespace predcoin {

struct BypassResult {
  std::optional<double> delta_b;
  std::size_t queries_to_detector = 0;
  bool feasible() const { return delta_b.has_value(); }
};

/// Log-spaced grid used by bypass_delta: 50 values from delta_max/1000 to delta_max.
Vec bypass_grid(double delta_max);

/// Smallest radius along u at which x_t + delta*u stays inside [0,1]^d and
/// escapes the detector (y1 < gamma). White-box: uses the target and detector
/// directly, never the oracle.
BypassResult bypass_delta(const DefenseState& ds, std::span<const double> x_t, std::span<const double> u,
                          double delta_max);

struct BypassEstimate {
  GradientEstimate estimate;
  std::size_t draws = 0;
  std::size_t feasible = 0;
  std::size_t detector_evaluations = 0;
  double feasible_fraction() const { return draws ? static_cast<double>(feasible) / static_cast<double>(draws) : 0.0; }
};

/// Gradient estimate that only queries the oracle along directions for which
/// a detector-evading radius exists. One oracle query per feasible direction.
BypassEstimate bypass_gradient_estimate(const DefenseState& ds, HardLabelOracle& o, ClassIndex c_star,
                                        std::span<const double> x_t, std::size_t samples, double delta_max, Rng& rng);

/// Majority vote over k identical queries; a tie counts as a miss.
Phi uncertainty_phi(HardLabelOracle& o, ClassIndex c_star, std::span<const double> x_q, std::size_t k);

/// estimate_gradient with every probe answered by uncertainty_phi (B*k queries).
GradientEstimate uncertainty_gradient_estimate(HardLabelOracle& o, ClassIndex c_star, std::span<const double> x_t,
                                               double delta, std::size_t samples, std::size_t k, Rng& rng);

}  // namespace predcoin

#endif
