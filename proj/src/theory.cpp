#include "predcoin/theory.hpp"

#include <ostream>

namespace predcoin {

double cos_angle(std::span<const double> u, std::span<const double> v) {
  check_dim("cos_angle", u.size(), v.size());
  const double nu = norm2(u), nv = norm2(v);
  if (nu == 0.0 || nv == 0.0) throw Error("cos_angle: zero vector");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

double convergence_bound(std::size_t d, double delta, double grad_norm, double L) {
  const double dm1 = static_cast<double>(d) - 1.0;
  return 1.0 - 9.0 * L * L * delta * delta * dm1 * dm1 / (8.0 * grad_norm * grad_norm);
}

namespace {

std::uint64_t row_seed(std::uint64_t seed, std::size_t d) { return seed ^ (0x9e3779b97f4a7c15ULL * (d + 1)); }

ConvergenceRow convergence_row(const ConvergenceConfig& cfg, std::size_t d, double delta) {
  ConvergenceRow row;
  row.d = d;
  row.delta = delta;
  row.samples = cfg.samples;
  row.slack = 5.0 / std::sqrt(static_cast<double>(cfg.samples));
  auto o = HardLabelOracle::quadratic(Vec(d, 0.0), cfg.radius);
  Vec x_t(d, 0.0);
  x_t[0] = cfg.radius;
  const auto [s, grad] = o.margin_gradient(x_t);
  row.bound_rhs = convergence_bound(d, delta, norm2(grad));
  if (delta == 0.0) {
    row.degenerate = true;
    row.pass = true;
    return row;
  }
  Rng rng(row_seed(cfg.seed, d));
  const GradientEstimate est = estimate_gradient(o, 0, x_t, delta, cfg.samples, rng);
  row.cos_measured = est.degenerate ? 0.0 : cos_angle(est.direction, grad);
  row.pass = row.cos_measured >= row.bound_rhs - row.slack;
  return row;
}

}  // namespace

std::vector<ConvergenceRow> convergence_experiment_serial(const ConvergenceConfig& cfg) {
  std::vector<ConvergenceRow> rows;
  for (std::size_t d : cfg.dims)
    for (double delta : cfg.deltas) rows.push_back(convergence_row(cfg, d, delta));
  return rows;
}

std::vector<ConvergenceRow> convergence_experiment(const ConvergenceConfig& cfg) {
  const std::size_t nd = cfg.deltas.size();
  std::vector<ConvergenceRow> rows(cfg.dims.size() * nd);
  const long n = static_cast<long>(rows.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    rows[k] = convergence_row(cfg, cfg.dims[k / nd], cfg.deltas[k % nd]);
  }
  return rows;
}

void write_convergence_csv(std::ostream& os, std::span<const ConvergenceRow> rows) {
  os << "d,delta,B,cos_measured,bound_rhs,slack,pass\n";
  const auto old = os.precision(17);
  for (const auto& r : rows) {
    os << r.d << ',' << r.delta << ',' << r.samples << ',';
    if (r.degenerate)
      os << "nan";
    else
      os << r.cos_measured;
    os << ',' << r.bound_rhs << ',' << r.slack << ',' << (r.pass ? "true" : "false") << '\n';
  }
  os.precision(old);
}

GradientEstimate flipped_estimate(HardLabelOracle& o, ClassIndex c_star, std::span<const double> x_t, double delta,
                                  std::size_t samples, double flip_prob, Rng& sphere_rng, Rng& coin_rng) {
  if (samples == 0) throw Error("flipped_estimate: B must be >= 1");
  const std::size_t d = x_t.size();
  GradientEstimate est;
  est.mean.assign(d, 0.0);
  Vec q(d);
  for (std::size_t b = 0; b < samples; ++b) {
    const Vec u = sample_sphere(d, sphere_rng);
    for (std::size_t i = 0; i < d; ++i) q[i] = x_t[i] + delta * u[i];
    int s = to_int(phi(o, c_star, q));
    if (uniform01(coin_rng) < flip_prob) s = -s;
    for (std::size_t i = 0; i < d; ++i) est.mean[i] += s * u[i];
  }
  for (double& v : est.mean) v /= static_cast<double>(samples);
  est.queries = samples;
  const double n = norm2(est.mean);
  est.degenerate = n == 0.0;
  est.direction.assign(d, 0.0);
  if (!est.degenerate)
    for (std::size_t i = 0; i < d; ++i) est.direction[i] = est.mean[i] / n;
  return est;
}

CollapseStats flip_collapse_experiment(const CollapseConfig& cfg) {
  if (cfg.trials == 0) throw Error("flip collapse: trials must be >= 1");
  const std::size_t d = cfg.d;
  Vec x_t(d, 0.0);
  x_t[0] = cfg.radius;
  Vec grad(d, 0.0);
  grad[0] = -2.0 * cfg.radius;

  struct Trial {
    double norm, cos, base_norm, base_cos, base_se;
  };
  std::vector<Trial> trials(cfg.trials);
  const long n = static_cast<long>(cfg.trials);
#pragma omp parallel for schedule(dynamic)
  for (long t = 0; t < n; ++t) {
    auto o = HardLabelOracle::quadratic(Vec(d, 0.0), cfg.radius);
    const std::uint64_t base = cfg.seed ^ (0xd1b54a32d192ed03ULL * static_cast<std::uint64_t>(t + 1));
    Rng sphere(base), coin(base ^ 0xa5a5a5a5a5a5a5a5ULL), sphere_again(base), no_coin(0);
    const GradientEstimate flipped = flipped_estimate(o, 0, x_t, cfg.delta, cfg.samples, cfg.flip_prob, sphere, coin);
    const GradientEstimate plain = flipped_estimate(o, 0, x_t, cfg.delta, cfg.samples, 0.0, sphere_again, no_coin);
    const double m2 = dot(plain.mean, plain.mean);
    trials[static_cast<std::size_t>(t)] = {
        norm2(flipped.mean), flipped.degenerate ? 0.0 : cos_angle(flipped.direction, grad), std::sqrt(m2),
        plain.degenerate ? 0.0 : cos_angle(plain.direction, grad),
        // each phi*u has unit norm, so trace Cov = 1 - |E phi u|^2
        std::sqrt(std::max(0.0, 1.0 - m2) / static_cast<double>(cfg.samples))};
  }
  CollapseStats s;
  for (const Trial& t : trials) {
    s.mean_norm += t.norm;
    s.mean_cos += t.cos;
    s.baseline_mean_norm += t.base_norm;
    s.baseline_mean_cos += t.base_cos;
    s.baseline_se += t.base_se;
  }
  const double k = static_cast<double>(cfg.trials);
  s.mean_norm /= k;
  s.mean_cos /= k;
  s.baseline_mean_norm /= k;
  s.baseline_mean_cos /= k;
  s.baseline_se /= k;
  double var = 0.0;
  for (const Trial& t : trials) var += (t.cos - s.mean_cos) * (t.cos - s.mean_cos);
  s.std_cos = cfg.trials > 1 ? std::sqrt(var / (k - 1.0)) : 0.0;
  return s;
}

BetaCheck beta_projection_check(std::size_t d, std::size_t samples, std::uint64_t seed) {
  if (d < 2) throw Error("beta check: d must be >= 2");
  if (samples < 10000) throw Error("beta check: need at least 10^4 samples");
  Rng rng(seed);
  std::vector<double> z(samples);
  for (double& v : z) {
    const Vec u = sample_sphere(d, rng);
    v = u[0] * u[0];
  }
  BetaCheck c;
  c.d = d;
  c.samples = samples;
  const double n = static_cast<double>(samples);
  for (double v : z) c.mean += v;
  c.mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : z) {
    const double e = v - c.mean;
    m2 += e * e;
    m4 += e * e * e * e;
  }
  c.var = m2 / (n - 1.0);
  m4 /= n;
  const double dd = static_cast<double>(d);
  c.expected_mean = 1.0 / dd;
  c.expected_var = 2.0 * (dd - 1.0) / (dd * dd * (dd + 2.0));
  c.se_mean = std::sqrt(c.var / n);
  c.se_var = std::sqrt(std::max(0.0, m4 - c.var * c.var) / n);
  c.pass = std::abs(c.mean - c.expected_mean) <= 3.0 * c.se_mean && std::abs(c.var - c.expected_var) <= 3.0 * c.se_var;
  return c;
}

double network_margin(const DenseNetwork& net, std::span<const double> x, ClassIndex c) {
  const Vec p = net.forward(x);
  double best = -1.0;
  for (ClassIndex i = 0; i < p.size(); ++i)
    if (i != c) best = std::max(best, p[i]);
  return best - p[c];
}

Vec network_margin_gradient(const DenseNetwork& net, std::span<const double> x, ClassIndex c, double h) {
  Vec g(x.size());
  Vec xp(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double up = network_margin(net, xp, c);
    xp[i] = x[i] - h;
    const double down = network_margin(net, xp, c);
    xp[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace predcoin
