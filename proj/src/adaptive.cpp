#include "predcoin/adaptive.hpp"

namespace predcoin {

namespace {

constexpr std::size_t kGridSize = 50;
constexpr int kRefineSteps = 20;

// Outside [0,1]^d the candidate violates the box constraint of the bypass problem.
bool inside_unit_box(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

}  // namespace

Vec bypass_grid(double delta_max) {
  if (!(delta_max > 0.0)) throw Error("bypass: delta_max must be positive");
  Vec grid(kGridSize);
  const double lo = std::log(delta_max / 1000.0);
  const double hi = std::log(delta_max);
  for (std::size_t i = 0; i < kGridSize; ++i)
    grid[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kGridSize - 1));
  grid.back() = delta_max;
  return grid;
}

BypassResult bypass_delta(const DefenseState& ds, std::span<const double> x_t, std::span<const double> u,
                          double delta_max) {
  check_dim("bypass direction", x_t.size(), u.size());
  BypassResult res;
  Vec q(x_t.size());
  auto feasible = [&](double delta) {
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = x_t[i] + delta * u[i];
    if (!inside_unit_box(q)) return false;
    ++res.queries_to_detector;
    return !detect(ds, ds.target->forward(q)).flagged;
  };
  const Vec grid = bypass_grid(delta_max);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!feasible(grid[i])) continue;
    if (i == 0) {
      res.delta_b = grid[0];
      return res;
    }
    double lo = grid[i - 1], hi = grid[i];
    for (int s = 0; s < kRefineSteps; ++s) {
      const double mid = 0.5 * (lo + hi);
      if (feasible(mid))
        hi = mid;
      else
        lo = mid;
    }
    res.delta_b = hi;
    return res;
  }
  return res;
}

BypassEstimate bypass_gradient_estimate(const DefenseState& ds, HardLabelOracle& o, ClassIndex c_star,
                                        std::span<const double> x_t, std::size_t samples, double delta_max, Rng& rng) {
  check_dim("bypass x_t", o.dim(), x_t.size());
  BypassEstimate out;
  out.estimate.mean.assign(x_t.size(), 0.0);
  Vec q(x_t.size());
  for (std::size_t b = 0; b < samples; ++b) {
    const Vec u = sample_sphere(x_t.size(), rng);
    ++out.draws;
    const BypassResult r = bypass_delta(ds, x_t, u, delta_max);
    out.detector_evaluations += r.queries_to_detector;
    if (!r.feasible()) continue;
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = x_t[i] + *r.delta_b * u[i];
    const int s = to_int(phi(o, c_star, q));
    ++out.feasible;
    for (std::size_t i = 0; i < q.size(); ++i) out.estimate.mean[i] += s * u[i];
  }
  GradientEstimate& est = out.estimate;
  est.queries = out.feasible;
  if (out.feasible > 0)
    for (double& v : est.mean) v /= static_cast<double>(out.feasible);
  const double n = norm2(est.mean);
  est.degenerate = out.feasible == 0 || n == 0.0;
  est.direction.assign(x_t.size(), 0.0);
  if (!est.degenerate)
    for (std::size_t i = 0; i < est.mean.size(); ++i) est.direction[i] = est.mean[i] / n;
  return out;
}

Phi uncertainty_phi(HardLabelOracle& o, ClassIndex c_star, std::span<const double> x_q, std::size_t k) {
  if (k == 0) throw Error("uncertainty_phi: k must be >= 1");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i)
    if (phi(o, c_star, x_q) == Phi::kHit) ++hits;
  return 2 * hits > k ? Phi::kHit : Phi::kMiss;
}

GradientEstimate uncertainty_gradient_estimate(HardLabelOracle& o, ClassIndex c_star, std::span<const double> x_t,
                                               double delta, std::size_t samples, std::size_t k, Rng& rng) {
  if (samples == 0) throw Error("uncertainty estimate: B must be >= 1");
  const std::size_t d = x_t.size();
  GradientEstimate est;
  est.mean.assign(d, 0.0);
  Vec q(d);
  for (std::size_t b = 0; b < samples; ++b) {
    const Vec u = sample_sphere(d, rng);
    for (std::size_t i = 0; i < d; ++i) q[i] = x_t[i] + delta * u[i];
    if (!o.is_analytic()) clip_unit(q);
    const int s = to_int(uncertainty_phi(o, c_star, q, k));
    for (std::size_t i = 0; i < d; ++i) est.mean[i] += s * u[i];
  }
  for (double& v : est.mean) v /= static_cast<double>(samples);
  est.queries = samples * k;
  const double n = norm2(est.mean);
  est.degenerate = n == 0.0;
  est.direction.assign(d, 0.0);
  if (!est.degenerate)
    for (std::size_t i = 0; i < d; ++i) est.direction[i] = est.mean[i] / n;
  return est;
}

}  // namespace predcoin
