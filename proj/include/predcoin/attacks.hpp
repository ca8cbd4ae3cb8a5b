#ifndef PREDCOIN_ATTACKS_HPP
#define PREDCOIN_ATTACKS_HPP

#include <optional>
#include <string>

#include "predcoin/oracle.hpp"

namespace predcoin {

enum class Norm { kL2, kLinf };
enum class AttackKind { kBoundary, kSignOpt, kHsja, kSfa };
enum class AdaptiveMode { kNone, kBypass, kUncertainty };

std::string to_string(Norm n);
std::string to_string(AttackKind k);
std::string to_string(AdaptiveMode m);
Norm parse_norm(const std::string& s);
AttackKind parse_attack(const std::string& s);
AdaptiveMode parse_adaptive(const std::string& s);

struct AttackConfig {
  Norm norm = Norm::kL2;
  std::uint64_t query_budget = 2000;
  std::uint64_t seed = 0;

  // adversarial initialisation
  std::size_t init_draws = 200;
  double linf_init_radius = 0.5;
  /// Bracket width on the interpolation parameter when bisecting to the boundary.
  double bisection_tol = 1e-4;

  // HSJA
  std::size_t b0 = 100;
  std::size_t max_batch = 10000;

  // Boundary attack
  double ba_spherical_step = 0.01;
  double ba_source_step = 0.01;
  std::size_t ba_window = 30;

  // Sign-OPT
  std::size_t signopt_init_dirs = 10;
  std::size_t signopt_probes = 200;
  double signopt_probe_scale = 1e-3;
  double signopt_step = 0.2;
  double signopt_tol = 1e-3;
  std::optional<Vec> signopt_init_direction;

  // SFA
  double sfa_init_eps = 0.5;
  double sfa_flip_fraction = 0.05;
  double sfa_shrink = 0.03;
  std::size_t sfa_window = 10;
  bool sfa_project = true;

  // defense-aware variants
  AdaptiveMode adaptive = AdaptiveMode::kNone;
  std::size_t vote_k = 1;
  const DefenseState* whitebox = nullptr;
  double bypass_delta_max = 1.0;

  void validate() const;
};

struct TracePoint {
  std::uint64_t queries = 0;
  double distance = 0.0;
};

struct AttackResult {
  Vec x_adv;
  double l2_dist = 0.0;
  double linf_dist = 0.0;
  std::uint64_t queries_used = 0;
  bool success = false;
  std::vector<TracePoint> trace;

  double distance(Norm n) const { return n == Norm::kL2 ? l2_dist : linf_dist; }
};

struct GradientEstimate {
  /// Unit-length estimate, or the zero vector when `degenerate`.
  Vec direction;
  /// Raw Monte-Carlo mean (1/B) sum phi_b u_b before normalisation.
  Vec mean;
  bool degenerate = false;
  std::uint64_t queries = 0;
};

/// Monte-Carlo boundary-normal estimate from B sphere probes of radius delta
/// around x_t. Consumes exactly B queries; on budget exhaustion rethrows
/// BudgetExhausted with the number of probes already spent.
GradientEstimate estimate_gradient(HardLabelOracle& o, ClassIndex c_star, std::span<const double> x_t,
                                   double delta, std::size_t samples, Rng& rng);

/// Shrinks an adversarial point toward x_star until the interpolation bracket
/// is at most `tol`. For l2 the path is the straight segment; for linf it is
/// the box projection onto x_star's ball of growing radius. Verifies x_adv
/// first (one query) unless `assume_adversarial`.
Vec bisect_to_boundary(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star,
                       std::span<const double> x_adv, double tol, Norm norm = Norm::kL2,
                       bool assume_adversarial = false);

/// Random adversarial starting point: uniform draws for l2; random sign
/// patterns of radius `linf_init_radius` around x_star (then uniform) for linf.
std::optional<Vec> find_adversarial_init(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star,
                                         const AttackConfig& cfg, Rng& rng);

/// Distance g(theta) from x_star to the boundary along unit direction theta,
/// searching from the initial guess `g0`. Returns nullopt if no adversarial
/// point is reached along the ray.
std::optional<double> boundary_distance(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star,
                                        std::span<const double> theta, double g0, double rel_tol);

AttackResult hsja(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star, const AttackConfig& cfg);
AttackResult boundary_attack(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star,
                             const AttackConfig& cfg);
AttackResult sign_opt(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star, const AttackConfig& cfg);
AttackResult sfa(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star, const AttackConfig& cfg);

AttackResult run_attack(AttackKind kind, HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star,
                        const AttackConfig& cfg);

}  // namespace predcoin

#endif
