#include "doctest.h"
#include "predcoin/attacks.hpp"
#include "predcoin/theory.hpp"
#include "support.hpp"

using namespace predcoin;

namespace {

// Linear oracle with S(x) = w.x + b and a source point on the negative side.
struct LinearCase {
  Vec w{0.9, -0.4, 0.3, 1.1, -0.2, 0.5, 0.7, -0.8, 0.25, 0.6};
  double b = -1.0;
  Vec x_star = Vec(10, 0.2);

  HardLabelOracle oracle() const { return HardLabelOracle::linear(w, b); }
  double margin() const { return dot(w, x_star) + b; }
  // closed-form projection distances to the hyperplane
  double l2_opt() const { return std::abs(margin()) / norm2(w); }
  double linf_opt() const {
    double l1 = 0.0;
    for (double v : w) l1 += std::abs(v);
    return std::abs(margin()) / l1;
  }
};

}  // namespace

TEST_CASE("sphere sampling") {
  Rng rng(3);
  Vec mean(20, 0.0);
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const Vec u = sample_sphere(20, rng);
    if (i % 1000 == 0) CHECK(std::abs(norm2(u) - 1.0) <= 1e-9);
    for (std::size_t j = 0; j < 20; ++j) mean[j] += u[j];
  }
  for (double& v : mean) v /= n;
  CHECK(norm2(mean) <= 5e-3);
}

TEST_CASE("gradient estimate aligns with a linear boundary") {
  Vec w(20);
  Rng wr(8);
  for (double& v : w) v = std::normal_distribution<double>(0.0, 1.0)(wr);
  auto o = HardLabelOracle::linear(w, 0.0);
  const Vec x_t(20, 0.0);
  Rng rng(1);
  const auto est = estimate_gradient(o, 0, x_t, 1e-3, 10000, rng);
  CHECK(est.queries == 10000);
  CHECK(o.query_count() == 10000);
  CHECK(cos_angle(est.direction, w) >= 0.9);
  CHECK(std::abs(norm2(est.direction) - 1.0) <= 1e-12);
}

TEST_CASE("single-sample estimate is a signed sphere draw") {
  auto o = HardLabelOracle::linear({1.0, 2.0, -1.0}, 0.0);
  const Vec x_t(3, 0.0);
  Rng a(5), b(5);
  const auto est = estimate_gradient(o, 0, x_t, 1e-2, 1, a);
  const Vec u = sample_sphere(3, b);
  const double s = dot(Vec{1.0, 2.0, -1.0}, u) > 0.0 ? 1.0 : -1.0;
  for (std::size_t i = 0; i < 3; ++i) CHECK(est.direction[i] == doctest::Approx(s * u[i]).epsilon(1e-12));
  CHECK(std::abs(norm2(est.direction) - 1.0) <= 1e-12);
}

TEST_CASE("estimate quality improves as delta shrinks") {
  // High curvature (r = 0.05) makes the bias term dominate the Monte-Carlo
  // noise; cosines are averaged over a family of seeds with shared draws.
  const std::size_t d = 20;
  const double r = 0.05;
  Vec x_t(d, 0.0);
  x_t[0] = r;
  std::vector<double> mean_cos;
  for (double delta : {1e-1, 1e-2, 1e-3}) {
    double sum = 0.0;
    for (std::uint64_t s = 0; s < 8; ++s) {
      auto o = HardLabelOracle::quadratic(Vec(d, 0.0), r);
      Rng rng(100 + s);
      const auto est = estimate_gradient(o, 0, x_t, delta, 20000, rng);
      sum += est.direction[0] * -1.0;
    }
    mean_cos.push_back(sum / 8.0);
  }
  CHECK(mean_cos[1] > mean_cos[0]);
  CHECK(mean_cos[2] > mean_cos[1]);
}

TEST_CASE("partial estimate reports spent queries") {
  auto o = HardLabelOracle::linear({1.0, 0.0}, 0.0);
  o.set_query_limit(7);
  Rng rng(1);
  try {
    estimate_gradient(o, 0, Vec{0.0, 0.0}, 1e-3, 50, rng);
    FAIL("expected budget exhaustion");
  } catch (const BudgetExhausted& e) {
    CHECK(e.spent == 7);
  }
}

TEST_CASE("bisection on a one-dimensional threshold") {
  auto o = HardLabelOracle::linear({1.0}, -0.5);
  const Vec x_star{0.0}, x_adv{1.0};
  const Vec xb = bisect_to_boundary(o, x_star, 0, x_adv, 1e-6);
  CHECK(std::abs(xb[0] - 0.5) <= 1e-6);
  CHECK(xb[0] > 0.5);

  auto o2 = HardLabelOracle::linear({1.0}, -0.5);
  const Vec xb2 = bisect_to_boundary(o2, x_star, 0, x_adv, 0.01);
  CHECK(o2.query_count() <= 8);
  CHECK(phi(o2, 0, xb2) == Phi::kHit);

  auto o3 = HardLabelOracle::linear({1.0}, -0.5);
  CHECK_THROWS_AS(bisect_to_boundary(o3, x_star, 0, Vec{0.2}, 0.01), Error);
}

TEST_CASE("bisection always lands on the adversarial side") {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    auto o = HardLabelOracle::quadratic(Vec(5, 0.5), 0.3);
    const Vec x_star(5, 0.5);
    Vec x_adv = sample_uniform_box(5, rng);
    x_adv[0] = 1.0;
    x_adv[1] = 1.0;
    const Norm norm = i % 2 ? Norm::kL2 : Norm::kLinf;
    const Vec xb = bisect_to_boundary(o, x_star, 1, x_adv, 1e-3, norm);
    CHECK(to_int(phi(o, 1, xb)) == 1);
  }
}

TEST_CASE("hsja approaches the hyperplane projection") {
  LinearCase lc;
  auto o = lc.oracle();
  AttackConfig cfg;
  cfg.query_budget = 2000;
  cfg.seed = 3;
  const auto r = hsja(o, lc.x_star, 0, cfg);
  CHECK(r.success);
  CHECK(r.queries_used <= 2000);
  CHECK(o.query_count() == r.queries_used);
  CHECK(r.l2_dist <= 1.2 * lc.l2_opt());
  CHECK(r.l2_dist >= lc.l2_opt() * (1.0 - 1e-9));
  REQUIRE(!r.trace.empty());
  CHECK(r.l2_dist <= r.trace.front().distance);
  for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].distance <= r.trace[i - 1].distance);
}

TEST_CASE("zero budget fails without querying") {
  LinearCase lc;
  for (AttackKind k : {AttackKind::kBoundary, AttackKind::kSignOpt, AttackKind::kHsja, AttackKind::kSfa}) {
    auto o = lc.oracle();
    AttackConfig cfg;
    cfg.query_budget = 0;
    cfg.norm = k == AttackKind::kSfa ? Norm::kLinf : Norm::kL2;
    const auto r = run_attack(k, o, lc.x_star, 0, cfg);
    CHECK_FALSE(r.success);
    CHECK(r.queries_used == 0);
    CHECK(o.query_count() == 0);
  }
}

TEST_CASE("boundary attack approaches the hyperplane projection") {
  LinearCase lc;
  auto o = lc.oracle();
  AttackConfig cfg;
  cfg.query_budget = 5000;
  cfg.seed = 4;
  const auto r = boundary_attack(o, lc.x_star, 0, cfg);
  CHECK(r.success);
  CHECK(o.query_count() == r.queries_used);
  CHECK(r.l2_dist <= 1.5 * lc.l2_opt());
  for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].distance <= r.trace[i - 1].distance);
}

TEST_CASE("boundary attack without contraction keeps its distance") {
  LinearCase lc;
  auto o = lc.oracle();
  AttackConfig cfg;
  cfg.query_budget = 600;
  cfg.ba_source_step = 0.0;
  cfg.seed = 2;
  const auto r = boundary_attack(o, lc.x_star, 0, cfg);
  REQUIRE(!r.trace.empty());
  // spherical steps preserve the distance, so nothing beyond rounding is gained
  for (const auto& t : r.trace) CHECK(t.distance == doctest::Approx(r.trace.front().distance).epsilon(1e-9));
  CHECK(r.l2_dist == doctest::Approx(r.trace.front().distance).epsilon(1e-9));
}

TEST_CASE("sign-opt approaches the hyperplane projection") {
  LinearCase lc;
  auto o = lc.oracle();
  AttackConfig cfg;
  cfg.query_budget = 5000;
  cfg.seed = 5;
  const auto r = sign_opt(o, lc.x_star, 0, cfg);
  CHECK(r.success);
  CHECK(o.query_count() == r.queries_used);
  CHECK(r.l2_dist <= 1.3 * lc.l2_opt());
  for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].distance <= r.trace[i - 1].distance);
}

TEST_CASE("sign-opt started on the optimal direction is already optimal") {
  LinearCase lc;
  auto o = lc.oracle();
  AttackConfig cfg;
  cfg.query_budget = 200;
  cfg.signopt_init_direction = lc.w;
  const auto r = sign_opt(o, lc.x_star, 0, cfg);
  REQUIRE(!r.trace.empty());
  CHECK(r.trace.front().distance <= lc.l2_opt() * (1.0 + cfg.signopt_tol));
  CHECK(r.trace.front().distance >= lc.l2_opt());
}

TEST_CASE("sfa approaches the minimal linf perturbation") {
  LinearCase lc;
  auto o = lc.oracle();
  AttackConfig cfg;
  cfg.norm = Norm::kLinf;
  cfg.query_budget = 5000;
  cfg.seed = 6;
  const auto r = sfa(o, lc.x_star, 0, cfg);
  CHECK(r.success);
  CHECK(o.query_count() == r.queries_used);
  CHECK(r.linf_dist <= 1.5 * lc.linf_opt());
  CHECK(r.linf_dist >= lc.linf_opt() * (1.0 - 1e-9));
}

TEST_CASE("sfa with no flips and no projection keeps epsilon") {
  LinearCase lc;
  auto o = lc.oracle();
  AttackConfig cfg;
  cfg.norm = Norm::kLinf;
  cfg.query_budget = 500;
  cfg.sfa_flip_fraction = 0.0;
  cfg.sfa_project = false;
  const auto r = sfa(o, lc.x_star, 0, cfg);
  REQUIRE(r.trace.size() == 1);
  CHECK(r.linf_dist == r.trace.front().distance);
}

TEST_CASE("accepted iterates are adversarial") {
  LinearCase lc;
  for (AttackKind k : {AttackKind::kBoundary, AttackKind::kSignOpt, AttackKind::kHsja, AttackKind::kSfa}) {
    auto o = lc.oracle();
    AttackConfig cfg;
    cfg.query_budget = 1500;
    cfg.seed = 9;
    cfg.norm = k == AttackKind::kSfa ? Norm::kLinf : Norm::kL2;
    const auto r = run_attack(k, o, lc.x_star, 0, cfg);
    CHECK(r.success);
    CHECK(o.margin_gradient(r.x_adv).first > 0.0);
    CHECK(r.l2_dist == dist2(r.x_adv, lc.x_star));
    CHECK(r.linf_dist == dist_inf(r.x_adv, lc.x_star));
  }
}

TEST_CASE("budget law and accounting on a model-backed oracle") {
  auto net = testing::small_mnist_target();
  const auto data = testing::mnist_test(20);
  for (AttackKind k : {AttackKind::kBoundary, AttackKind::kSignOpt, AttackKind::kHsja, AttackKind::kSfa}) {
    for (std::uint64_t budget : {1u, 37u, 400u}) {
      auto o = HardLabelOracle::model(net);
      AttackConfig cfg;
      cfg.query_budget = budget;
      cfg.norm = k == AttackKind::kSfa ? Norm::kLinf : Norm::kL2;
      const auto r = run_attack(k, o, data.inputs[3], data.labels[3], cfg);
      CHECK(r.queries_used <= budget);
      CHECK(o.query_count() == r.queries_used);
      for (double v : r.x_adv) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("attacks are deterministic for a fixed seed") {
  LinearCase lc;
  for (AttackKind k : {AttackKind::kBoundary, AttackKind::kSignOpt, AttackKind::kHsja, AttackKind::kSfa}) {
    AttackConfig cfg;
    cfg.query_budget = 800;
    cfg.seed = 77;
    cfg.norm = k == AttackKind::kSfa ? Norm::kLinf : Norm::kL2;
    auto o1 = lc.oracle();
    auto o2 = lc.oracle();
    const auto a = run_attack(k, o1, lc.x_star, 0, cfg);
    const auto b = run_attack(k, o2, lc.x_star, 0, cfg);
    CHECK(a.x_adv == b.x_adv);
    CHECK(a.queries_used == b.queries_used);
    CHECK(a.trace.size() == b.trace.size());
  }
}

TEST_CASE("attack option parsing") {
  CHECK(parse_attack("signopt") == AttackKind::kSignOpt);
  CHECK(to_string(parse_norm("linf")) == "linf");
  CHECK(parse_adaptive("bypass") == AdaptiveMode::kBypass);
  CHECK_THROWS_AS(parse_attack("pgd"), Error);
  AttackConfig cfg;
  cfg.adaptive = AdaptiveMode::kBypass;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
