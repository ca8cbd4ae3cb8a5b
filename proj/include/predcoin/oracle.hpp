#ifndef PREDCOIN_ORACLE_HPP
#define PREDCOIN_ORACLE_HPP

#include <memory>
#include <optional>
#include <utility>
#include <variant>

#include "predcoin/defense.hpp"
#include "predcoin/nn.hpp"

namespace predcoin {

/// Success indicator seen by a hard-label attacker.
enum class Phi : int { kMiss = -1, kHit = 1 };

inline int to_int(Phi p) { return static_cast<int>(p); }

/// Binary oracle with margin S(x) = w.x + b; class 1 iff S > 0.
struct LinearBoundary {
  Vec w;
  double b = 0.0;
};

/// Binary oracle with margin S(x) = r^2 - |x - c|^2; class 1 iff S > 0.
/// Its Hessian is -2I, so the curvature constant is L = 2.
struct QuadraticBoundary {
  Vec center;
  double radius = 1.0;
};

struct ModelBackend {
  std::shared_ptr<const DenseNetwork> net;
  std::optional<DefenseState> defense;
};

/// Query interface that reveals only the predicted class and counts every
/// query. An optional query limit turns the counter into a budget: the query
/// that would exceed it throws BudgetExhausted instead of being answered.
class HardLabelOracle {
 public:
  static HardLabelOracle model(std::shared_ptr<const DenseNetwork> net);
  /// Defended oracle; `seed` drives the probabilistic flip coin.
  static HardLabelOracle defended(DefenseState defense, std::uint64_t seed);
  static HardLabelOracle linear(Vec w, double b);
  static HardLabelOracle quadratic(Vec center, double radius);

  std::size_t dim() const;
  std::size_t num_classes() const;
  bool is_analytic() const;

  ClassIndex query_label(std::span<const double> x);

  std::uint64_t query_count() const { return count_; }
  void set_query_limit(std::optional<std::uint64_t> limit) { limit_ = limit; }
  std::optional<std::uint64_t> query_limit() const { return limit_; }
  /// Queries left before the limit; max() when unlimited.
  std::uint64_t remaining() const;

  /// Closed-form (S(x), grad S(x)); analytic oracles only.
  std::pair<double, Vec> margin_gradient(std::span<const double> x) const;

  const ModelBackend* model_backend() const { return std::get_if<ModelBackend>(&backend_); }

 private:
  using Backend = std::variant<ModelBackend, LinearBoundary, QuadraticBoundary>;
  explicit HardLabelOracle(Backend b, std::uint64_t seed = 0) : backend_(std::move(b)), rng_(seed) {}

  Backend backend_;
  Rng rng_;
  std::uint64_t count_ = 0;
  std::optional<std::uint64_t> limit_;
};

/// +1 iff the oracle's label for x differs from c_star. One query.
Phi phi(HardLabelOracle& o, ClassIndex c_star, std::span<const double> x);

}  // namespace predcoin

#endif
