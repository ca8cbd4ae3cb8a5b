#include "predcoin/attacks.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "predcoin/adaptive.hpp"

namespace predcoin {

std::string to_string(Norm n) { return n == Norm::kL2 ? "l2" : "linf"; }

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kBoundary:
      return "ba";
    case AttackKind::kSignOpt:
      return "signopt";
    case AttackKind::kHsja:
      return "hsja";
    case AttackKind::kSfa:
      return "sfa";
  }
  return "hsja";
}

std::string to_string(AdaptiveMode m) {
  switch (m) {
    case AdaptiveMode::kNone:
      return "none";
    case AdaptiveMode::kBypass:
      return "bypass";
    case AdaptiveMode::kUncertainty:
      return "uncertainty";
  }
  return "none";
}

Norm parse_norm(const std::string& s) {
  if (s == "l2") return Norm::kL2;
  if (s == "linf") return Norm::kLinf;
  throw Error("unknown norm '" + s + "'");
}

AttackKind parse_attack(const std::string& s) {
  if (s == "ba") return AttackKind::kBoundary;
  if (s == "signopt") return AttackKind::kSignOpt;
  if (s == "hsja") return AttackKind::kHsja;
  if (s == "sfa") return AttackKind::kSfa;
  throw Error("unknown attack '" + s + "'");
}

AdaptiveMode parse_adaptive(const std::string& s) {
  if (s == "none") return AdaptiveMode::kNone;
  if (s == "bypass") return AdaptiveMode::kBypass;
  if (s == "uncertainty") return AdaptiveMode::kUncertainty;
  throw Error("unknown adaptive mode '" + s + "'");
}

void AttackConfig::validate() const {
  if (b0 == 0) throw Error("attack config: b0 must be >= 1");
  if (!(bisection_tol > 0.0 && bisection_tol < 1.0)) throw Error("attack config: bisection_tol must lie in (0,1)");
  if (vote_k == 0) throw Error("attack config: k must be >= 1");
  if (adaptive == AdaptiveMode::kBypass && whitebox == nullptr)
    throw Error("attack config: bypass requires white-box defense access");
}

namespace {

// Model-backed oracles live on [0,1]^d; analytic ones on R^d.
void to_domain(const HardLabelOracle& o, Vec& x) {
  if (!o.is_analytic()) clip_unit(x);
}

Vec lerp(std::span<const double> a, std::span<const double> b, double t) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1.0 - t) * a[i] + t * b[i];
  return out;
}

// Point on the linf path: x_adv clamped into the box of radius t*D around x_star.
Vec linf_path(std::span<const double> x_star, std::span<const double> x_adv, double t, double full) {
  Vec out(x_star.size());
  const double r = t * full;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x_adv[i], x_star[i] - r, x_star[i] + r);
  return out;
}

Vec normalized(Vec v) {
  const double n = norm2(v);
  if (n > 0.0)
    for (double& x : v) x /= n;
  return v;
}

// Queries attack probes through the configured voting rule.
Phi probe(HardLabelOracle& o, ClassIndex c_star, std::span<const double> x, const AttackConfig& cfg) {
  if (cfg.adaptive == AdaptiveMode::kUncertainty && cfg.vote_k > 1) return uncertainty_phi(o, c_star, x, cfg.vote_k);
  return phi(o, c_star, x);
}

// Reserves one query of the budget for the final confirmation and restores
// the oracle's previous limit on exit.
class BudgetScope {
 public:
  BudgetScope(HardLabelOracle& o, std::uint64_t budget)
      : o_(o), previous_(o.query_limit()), start_(o.query_count()), budget_(budget) {
    set_limit(budget > 0 ? budget - 1 : 0);
  }
  ~BudgetScope() { o_.set_query_limit(previous_); }
  BudgetScope(const BudgetScope&) = delete;
  BudgetScope& operator=(const BudgetScope&) = delete;

  void release_reserve() { set_limit(budget_); }
  std::uint64_t used() const { return o_.query_count() - start_; }

 private:
  void set_limit(std::uint64_t n) {
    std::uint64_t lim = start_ + n;
    if (previous_) lim = std::min(lim, *previous_);
    o_.set_query_limit(lim);
  }

  HardLabelOracle& o_;
  std::optional<std::uint64_t> previous_;
  std::uint64_t start_;
  std::uint64_t budget_;
};

struct Tracker {
  Norm norm;
  std::span<const double> x_star;
  std::optional<Vec> best;
  double best_dist = std::numeric_limits<double>::infinity();
  std::vector<TracePoint> trace;

  void offer(const Vec& x, std::uint64_t queries) {
    const double d = norm == Norm::kL2 ? dist2(x, x_star) : dist_inf(x, x_star);
    if (d < best_dist) {
      best_dist = d;
      best = x;
      trace.push_back({queries, d});
    }
  }
};

AttackResult finalize(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star, Tracker& t,
                      BudgetScope& scope, const AttackConfig& cfg) {
  AttackResult r;
  r.trace = std::move(t.trace);
  if (!t.best) {
    r.x_adv.assign(x_star.begin(), x_star.end());
    r.queries_used = scope.used();
    return r;
  }
  r.x_adv = std::move(*t.best);
  scope.release_reserve();
  try {
    r.success = probe(o, c_star, r.x_adv, cfg) == Phi::kHit;
  } catch (const BudgetExhausted&) {
    r.success = false;
  }
  r.l2_dist = dist2(r.x_adv, x_star);
  r.linf_dist = dist_inf(r.x_adv, x_star);
  r.queries_used = scope.used();
  return r;
}

}  // namespace

GradientEstimate estimate_gradient(HardLabelOracle& o, ClassIndex c_star, std::span<const double> x_t, double delta,
                                   std::size_t samples, Rng& rng) {
  if (samples == 0) throw Error("estimate_gradient: B must be >= 1");
  if (!(delta > 0.0)) throw Error("estimate_gradient: delta must be positive");
  const std::size_t d = x_t.size();
  GradientEstimate est;
  est.mean.assign(d, 0.0);
  Vec q(d);
  for (std::size_t b = 0; b < samples; ++b) {
    const Vec u = sample_sphere(d, rng);
    for (std::size_t i = 0; i < d; ++i) q[i] = x_t[i] + delta * u[i];
    to_domain(o, q);
    int s = 0;
    try {
      s = to_int(phi(o, c_star, q));
    } catch (const BudgetExhausted&) {
      throw BudgetExhausted(b);
    }
    for (std::size_t i = 0; i < d; ++i) est.mean[i] += s * u[i];
  }
  for (double& v : est.mean) v /= static_cast<double>(samples);
  est.queries = samples;
  est.direction = normalized(est.mean);
  est.degenerate = norm2(est.mean) == 0.0;
  return est;
}

Vec bisect_to_boundary(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star,
                       std::span<const double> x_adv, double tol, Norm norm, bool assume_adversarial) {
  check_dim("bisect x_adv", x_star.size(), x_adv.size());
  if (!(tol > 0.0)) throw Error("bisect_to_boundary: tol must be positive");
  if (!assume_adversarial && phi(o, c_star, x_adv) != Phi::kHit)
    throw Error("bisect_to_boundary: x_adv is not adversarial");
  const double full = dist_inf(x_star, x_adv);
  auto point = [&](double t) {
    Vec p = norm == Norm::kL2 ? lerp(x_star, x_adv, t) : linf_path(x_star, x_adv, t, full);
    to_domain(o, p);
    return p;
  };
  double lo = 0.0, hi = 1.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (phi(o, c_star, point(mid)) == Phi::kHit)
      hi = mid;
    else
      lo = mid;
  }
  if (hi == 1.0) return Vec(x_adv.begin(), x_adv.end());
  return point(hi);
}

std::optional<Vec> find_adversarial_init(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star,
                                         const AttackConfig& cfg, Rng& rng) {
  const std::size_t d = x_star.size();
  for (std::size_t i = 0; i < cfg.init_draws; ++i) {
    Vec x;
    if (cfg.norm == Norm::kLinf && i < cfg.init_draws / 2) {
      x.assign(x_star.begin(), x_star.end());
      for (double& v : x) v += uniform01(rng) < 0.5 ? -cfg.linf_init_radius : cfg.linf_init_radius;
      to_domain(o, x);
    } else {
      x = sample_uniform_box(d, rng);
    }
    if (probe(o, c_star, x, cfg) == Phi::kHit) return x;
  }
  return std::nullopt;
}

std::optional<double> boundary_distance(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star,
                                        std::span<const double> theta, double g0, double rel_tol) {
  auto point = [&](double lambda) {
    Vec p(x_star.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = x_star[i] + lambda * theta[i];
    to_domain(o, p);
    return p;
  };
  double lo = 0.0;
  double hi = g0;
  if (phi(o, c_star, point(hi)) != Phi::kHit) {
    bool found = false;
    for (int i = 0; i < 30 && !found; ++i) {
      lo = hi;
      hi *= 2.0;
      found = phi(o, c_star, point(hi)) == Phi::kHit;
    }
    if (!found) return std::nullopt;
  }
  while (hi - lo > rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (phi(o, c_star, point(mid)) == Phi::kHit)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

// ---------------------------------------------------------------------------
// HopSkipJump: bisect -> estimate boundary normal -> geometric step.

AttackResult hsja(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star, const AttackConfig& cfg) {
  cfg.validate();
  check_dim("hsja x_star", o.dim(), x_star.size());
  Rng rng(cfg.seed);
  BudgetScope scope(o, cfg.query_budget);
  Tracker track{cfg.norm, x_star, std::nullopt, std::numeric_limits<double>::infinity(), {}};
  const std::size_t d = x_star.size();
  const std::size_t k = cfg.adaptive == AdaptiveMode::kUncertainty ? cfg.vote_k : 1;
  try {
    auto init = find_adversarial_init(o, x_star, c_star, cfg, rng);
    if (!init) return finalize(o, x_star, c_star, track, scope, cfg);
    Vec x_b = bisect_to_boundary(o, x_star, c_star, *init, cfg.bisection_tol, cfg.norm, true);
    track.offer(x_b, scope.used());
    for (std::size_t t = 1;; ++t) {
      const double dist_l2 = dist2(x_b, x_star);
      const double dist_p = cfg.norm == Norm::kL2 ? dist_l2 : dist_inf(x_b, x_star);
      if (dist_p == 0.0) break;
      const double delta = dist_l2 / static_cast<double>(d);
      std::size_t batch = std::min<std::size_t>(
          cfg.b0 * static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(t)))), cfg.max_batch);
      batch = static_cast<std::size_t>(std::min<std::uint64_t>(batch, o.remaining() / k));
      if (batch == 0) break;

      GradientEstimate est;
      if (cfg.adaptive == AdaptiveMode::kBypass) {
        est = bypass_gradient_estimate(*cfg.whitebox, o, c_star, x_b, batch, cfg.bypass_delta_max, rng).estimate;
      } else if (k > 1) {
        est = uncertainty_gradient_estimate(o, c_star, x_b, delta, batch, k, rng);
      } else {
        est = estimate_gradient(o, c_star, x_b, delta, batch, rng);
      }
      if (est.degenerate) continue;
      Vec step = est.direction;
      if (cfg.norm == Norm::kLinf)
        for (double& v : step) v = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);

      double xi = dist_p / std::sqrt(static_cast<double>(t));
      std::optional<Vec> next;
      for (int halvings = 0; halvings < 30; ++halvings) {
        Vec cand(d);
        for (std::size_t i = 0; i < d; ++i) cand[i] = x_b[i] + xi * step[i];
        to_domain(o, cand);
        if (probe(o, c_star, cand, cfg) == Phi::kHit) {
          next = std::move(cand);
          break;
        }
        xi *= 0.5;
      }
      if (!next) continue;
      x_b = bisect_to_boundary(o, x_star, c_star, *next, cfg.bisection_tol, cfg.norm, true);
      track.offer(x_b, scope.used());
    }
  } catch (const BudgetExhausted&) {
  }
  return finalize(o, x_star, c_star, track, scope, cfg);
}

// ---------------------------------------------------------------------------
// Boundary attack: orthogonal step on the sphere around x_star, then contract.

AttackResult boundary_attack(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star,
                             const AttackConfig& cfg) {
  cfg.validate();
  check_dim("boundary_attack x_star", o.dim(), x_star.size());
  Rng rng(cfg.seed);
  BudgetScope scope(o, cfg.query_budget);
  Tracker track{Norm::kL2, x_star, std::nullopt, std::numeric_limits<double>::infinity(), {}};
  const std::size_t d = x_star.size();
  std::normal_distribution<double> normal(0.0, 1.0);
  double spherical = cfg.ba_spherical_step;
  double source = cfg.ba_source_step;
  std::vector<int> sph_hist, src_hist;
  try {
    auto init = find_adversarial_init(o, x_star, c_star, cfg, rng);
    if (!init) return finalize(o, x_star, c_star, track, scope, cfg);
    Vec x = bisect_to_boundary(o, x_star, c_star, *init, cfg.bisection_tol, Norm::kL2, true);
    track.offer(x, scope.used());
    for (;;) {
      Vec diff(d);
      for (std::size_t i = 0; i < d; ++i) diff[i] = x[i] - x_star[i];
      const double dist = norm2(diff);
      if (dist == 0.0) break;
      Vec eta(d);
      for (double& v : eta) v = normal(rng);
      const double proj = dot(eta, diff) / (dist * dist);
      for (std::size_t i = 0; i < d; ++i) eta[i] -= proj * diff[i];
      const double eta_norm = norm2(eta);
      if (eta_norm > 0.0)
        for (double& v : eta) v *= spherical * dist / eta_norm;
      Vec dir(d);
      for (std::size_t i = 0; i < d; ++i) dir[i] = diff[i] + eta[i];
      const double dir_norm = norm2(dir);
      Vec sphere_pt(d);
      for (std::size_t i = 0; i < d; ++i) sphere_pt[i] = x_star[i] + dir[i] * dist / dir_norm;
      to_domain(o, sphere_pt);

      const bool sphere_ok = probe(o, c_star, sphere_pt, cfg) == Phi::kHit;
      sph_hist.push_back(sphere_ok);
      if (sphere_ok) {
        Vec cand = lerp(x_star, sphere_pt, 1.0 - source);
        to_domain(o, cand);
        const bool cand_ok = probe(o, c_star, cand, cfg) == Phi::kHit;
        src_hist.push_back(cand_ok);
        if (cand_ok) {
          x = std::move(cand);
          track.offer(x, scope.used());
        }
      }
      auto rate = [](const std::vector<int>& h) {
        return static_cast<double>(std::accumulate(h.begin(), h.end(), 0)) / static_cast<double>(h.size());
      };
      if (sph_hist.size() >= cfg.ba_window) {
        const double r = rate(sph_hist);
        if (r > 0.5) spherical *= 1.5;
        if (r < 0.5) spherical *= 0.67;
        sph_hist.clear();
      }
      if (src_hist.size() >= cfg.ba_window) {
        const double r = rate(src_hist);
        if (r > 0.25) source = std::min(source * 1.5, 0.5);
        if (r < 0.25) source *= 0.67;
        src_hist.clear();
      }
    }
  } catch (const BudgetExhausted&) {
  }
  return finalize(o, x_star, c_star, track, scope, cfg);
}

// ---------------------------------------------------------------------------
// Sign-OPT: descend on g(theta) with sign-only directional derivatives.

AttackResult sign_opt(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star,
                      const AttackConfig& cfg) {
  cfg.validate();
  check_dim("sign_opt x_star", o.dim(), x_star.size());
  Rng rng(cfg.seed);
  BudgetScope scope(o, cfg.query_budget);
  Tracker track{Norm::kL2, x_star, std::nullopt, std::numeric_limits<double>::infinity(), {}};
  const std::size_t d = x_star.size();
  Vec theta;
  double g = std::numeric_limits<double>::infinity();

  auto point = [&](const Vec& dir, double lambda) {
    Vec p(d);
    for (std::size_t i = 0; i < d; ++i) p[i] = x_star[i] + lambda * dir[i];
    to_domain(o, p);
    return p;
  };
  try {
    if (cfg.signopt_init_direction) {
      check_dim("sign_opt init direction", d, cfg.signopt_init_direction->size());
      theta = normalized(*cfg.signopt_init_direction);
      if (auto gi = boundary_distance(o, x_star, c_star, theta, 1.0, cfg.signopt_tol)) g = *gi;
    } else {
      std::size_t found = 0;
      for (std::size_t i = 0; i < cfg.init_draws && found < cfg.signopt_init_dirs; ++i) {
        const Vec x = sample_uniform_box(d, rng);
        if (probe(o, c_star, x, cfg) != Phi::kHit) continue;
        ++found;
        Vec dir(d);
        for (std::size_t j = 0; j < d; ++j) dir[j] = x[j] - x_star[j];
        const double g0 = norm2(dir);
        dir = normalized(std::move(dir));
        double lo = 0.0, hi = 1.0;
        while (hi - lo > cfg.signopt_tol) {
          const double mid = 0.5 * (lo + hi);
          if (probe(o, c_star, point(dir, mid * g0), cfg) == Phi::kHit)
            hi = mid;
          else
            lo = mid;
        }
        if (hi * g0 < g) {
          g = hi * g0;
          theta = dir;
        }
      }
    }
    if (theta.empty() || !std::isfinite(g)) return finalize(o, x_star, c_star, track, scope, cfg);
    track.offer(point(theta, g), scope.used());

    for (;;) {
      Vec grad(d, 0.0);
      for (std::size_t k = 0; k < cfg.signopt_probes; ++k) {
        const Vec u = sample_sphere(d, rng);
        Vec probe_dir(d);
        for (std::size_t i = 0; i < d; ++i) probe_dir[i] = theta[i] + cfg.signopt_probe_scale * u[i];
        probe_dir = normalized(std::move(probe_dir));
        // adversarial at the current distance means g decreases along u
        const double s = probe(o, c_star, point(probe_dir, g), cfg) == Phi::kHit ? -1.0 : 1.0;
        for (std::size_t i = 0; i < d; ++i) grad[i] += s * u[i];
      }
      for (double& v : grad) v /= static_cast<double>(cfg.signopt_probes);

      double alpha = cfg.signopt_step;
      for (int attempt = 0; attempt < 10; ++attempt, alpha *= 0.5) {
        Vec cand(d);
        for (std::size_t i = 0; i < d; ++i) cand[i] = theta[i] - alpha * grad[i];
        cand = normalized(std::move(cand));
        if (probe(o, c_star, point(cand, g), cfg) != Phi::kHit) continue;
        double lo = 0.0, hi = g;
        while (hi - lo > cfg.signopt_tol * hi) {
          const double mid = 0.5 * (lo + hi);
          if (probe(o, c_star, point(cand, mid), cfg) == Phi::kHit)
            hi = mid;
          else
            lo = mid;
        }
        theta = std::move(cand);
        g = hi;
        track.offer(point(theta, g), scope.used());
        break;
      }
    }
  } catch (const BudgetExhausted&) {
  }
  return finalize(o, x_star, c_star, track, scope, cfg);
}

// ---------------------------------------------------------------------------
// Sign flip attack: shrink an linf perturbation, flipping coordinate signs to
// keep it adversarial.

AttackResult sfa(HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star, const AttackConfig& cfg) {
  cfg.validate();
  check_dim("sfa x_star", o.dim(), x_star.size());
  Rng rng(cfg.seed);
  BudgetScope scope(o, cfg.query_budget);
  Tracker track{Norm::kLinf, x_star, std::nullopt, std::numeric_limits<double>::infinity(), {}};
  const std::size_t d = x_star.size();
  AttackConfig init_cfg = cfg;
  init_cfg.norm = Norm::kLinf;
  init_cfg.linf_init_radius = cfg.sfa_init_eps;
  double flip_fraction = cfg.sfa_flip_fraction;
  std::vector<int> window;
  std::vector<std::size_t> coords(d);
  std::iota(coords.begin(), coords.end(), 0);
  try {
    auto init = find_adversarial_init(o, x_star, c_star, init_cfg, rng);
    if (!init) return finalize(o, x_star, c_star, track, scope, cfg);
    Vec x = std::move(*init);
    track.offer(x, scope.used());
    double eps = dist_inf(x, x_star);
    for (;;) {
      const std::size_t flips =
          flip_fraction > 0.0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(flip_fraction * d))) : 0;
      if (!cfg.sfa_project && flips == 0) break;
      if (eps == 0.0) break;
      if (cfg.sfa_project) {
        const double target = (1.0 - cfg.sfa_shrink) * eps;
        Vec cand(d);
        for (std::size_t i = 0; i < d; ++i)
          cand[i] = x_star[i] + std::clamp(x[i] - x_star[i], -target, target);
        to_domain(o, cand);
        if (probe(o, c_star, cand, cfg) == Phi::kHit) {
          x = std::move(cand);
          eps = dist_inf(x, x_star);
          track.offer(x, scope.used());
        }
      }
      if (flips > 0) {
        std::shuffle(coords.begin(), coords.end(), rng);
        Vec cand = x;
        for (std::size_t j = 0; j < std::min(flips, d); ++j) {
          const std::size_t i = coords[j];
          const double cur = x[i] - x_star[i];
          const double sign = cur > 0.0 ? -1.0 : (cur < 0.0 ? 1.0 : (uniform01(rng) < 0.5 ? -1.0 : 1.0));
          cand[i] = x_star[i] + sign * eps;
        }
        to_domain(o, cand);
        const bool ok = probe(o, c_star, cand, cfg) == Phi::kHit;
        window.push_back(ok);
        if (ok) x = std::move(cand);
        if (window.size() >= cfg.sfa_window) {
          const double rate =
              static_cast<double>(std::accumulate(window.begin(), window.end(), 0)) / static_cast<double>(window.size());
          if (rate >= 0.5) flip_fraction = std::min(1.0, flip_fraction * 2.0);
          if (rate <= 0.2) flip_fraction = std::max(1.0 / static_cast<double>(d), flip_fraction * 0.5);
          window.clear();
        }
      }
    }
  } catch (const BudgetExhausted&) {
  }
  return finalize(o, x_star, c_star, track, scope, cfg);
}

AttackResult run_attack(AttackKind kind, HardLabelOracle& o, std::span<const double> x_star, ClassIndex c_star,
                        const AttackConfig& cfg) {
  if (cfg.adaptive == AdaptiveMode::kBypass && kind != AttackKind::kHsja)
    throw UnsupportedOperation("bypass adaptive attack is only defined for hsja");
  if (cfg.adaptive == AdaptiveMode::kUncertainty && kind != AttackKind::kHsja && kind != AttackKind::kSfa)
    throw UnsupportedOperation("uncertainty-aware adaptive attack is only defined for hsja and sfa");
  switch (kind) {
    case AttackKind::kBoundary:
      return boundary_attack(o, x_star, c_star, cfg);
    case AttackKind::kSignOpt:
      return sign_opt(o, x_star, c_star, cfg);
    case AttackKind::kHsja:
      return hsja(o, x_star, c_star, cfg);
    case AttackKind::kSfa:
      return sfa(o, x_star, c_star, cfg);
  }
  throw Error("unknown attack");
}

}  // namespace predcoin
