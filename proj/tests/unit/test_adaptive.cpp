#include "doctest.h"
#include "predcoin/adaptive.hpp"
#include "support.hpp"

using namespace predcoin;

namespace {

DefenseState state(double y1, double gamma, bool flag_all = false) {
  DefenseState ds;
  ds.target = testing::small_mnist_target();
  ds.detector = testing::constant_detector(y1);
  ds.gamma = gamma;
  ds.mode = FlipMode::kProbabilistic;
  ds.flag_all = flag_all;
  return ds;
}

}  // namespace

TEST_CASE("bypass grid is log-spaced over three decades") {
  const Vec g = bypass_grid(2.0);
  REQUIRE(g.size() == 50);
  CHECK(g.front() == doctest::Approx(2e-3));
  CHECK(g.back() == 2.0);
  for (std::size_t i = 1; i < g.size(); ++i)
    CHECK(g[i] / g[i - 1] == doctest::Approx(std::pow(1000.0, 1.0 / 49.0)));
}

TEST_CASE("an inactive detector is bypassed at the smallest radius") {
  const auto ds = state(0.5, 1.0);
  const Vec x_t(784, 0.5);
  Rng rng(1);
  const Vec u = sample_sphere(784, rng);
  const auto r = bypass_delta(ds, x_t, u, 0.1);
  REQUIRE(r.feasible());
  CHECK(*r.delta_b == bypass_grid(0.1).front());
  CHECK(r.queries_to_detector == 1);
}

TEST_CASE("a detector that flags everything cannot be bypassed") {
  const auto ds = state(0.5, 0.0);
  const Vec x_t(784, 0.5);
  Rng rng(2);
  const auto r = bypass_delta(ds, x_t, sample_sphere(784, rng), 0.1);
  CHECK_FALSE(r.feasible());
  CHECK(r.queries_to_detector == 50);
}

TEST_CASE("bypass radius sits on the detector threshold") {
  // y1 = sigmoid(40 (top1 - 0.8)) is flagged at gamma 0.5 iff top1 >= 0.8
  DefenseState ds;
  ds.target = testing::small_mnist_target();
  ds.detector = testing::top1_detector(0.8, 40.0);
  ds.gamma = 0.5;
  const auto data = testing::mnist_test(50);
  Rng rng(3);
  std::size_t checked = 0;
  for (const auto& x : data.inputs) {
    if (ds.target->forward(x)[argmax(ds.target->forward(x))] < 0.8) continue;
    Vec u(784, 0.0);
    // walk toward the image mean, keeping inside the box
    for (std::size_t i = 0; i < 784; ++i) u[i] = 0.5 - x[i];
    const double n = norm2(u);
    for (double& v : u) v /= n;
    const auto r = bypass_delta(ds, x, u, n);
    if (!r.feasible() || *r.delta_b == bypass_grid(n).front()) continue;
    Vec at(784);
    for (std::size_t i = 0; i < 784; ++i) at[i] = x[i] + *r.delta_b * u[i];
    CHECK_FALSE(detect(ds, ds.target->forward(at)).flagged);
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("bypass estimate with an inactive detector is the plain estimate") {
  const auto ds = state(0.5, 1.0);
  auto o1 = HardLabelOracle::defended(ds, 1);
  auto o2 = HardLabelOracle::model(ds.target);
  Rng r1(9), r2(9);
  // plain estimate on an interior point so that no clipping occurs
  const Vec mid(784, 0.5);
  const ClassIndex c = argmax(ds.target->forward(mid));
  const auto b = bypass_gradient_estimate(ds, o1, c, mid, 200, 0.5, r1);
  const auto e = estimate_gradient(o2, c, mid, bypass_grid(0.5).front(), 200, r2);
  CHECK(b.feasible == 200);
  CHECK(b.feasible_fraction() == 1.0);
  CHECK(b.estimate.queries == 200);
  CHECK(o1.query_count() == 200);
  CHECK(b.estimate.mean == e.mean);
}

TEST_CASE("bypass estimate without feasible directions is degenerate") {
  const auto ds = state(0.5, 0.0);
  auto o = HardLabelOracle::defended(ds, 1);
  Rng rng(4);
  const auto b = bypass_gradient_estimate(ds, o, 0, Vec(784, 0.5), 20, 0.5, rng);
  CHECK(b.estimate.degenerate);
  CHECK(b.feasible == 0);
  CHECK(o.query_count() == 0);
  CHECK(norm2(b.estimate.direction) == 0.0);
}

TEST_CASE("uncertainty vote spends exactly k queries") {
  auto o = HardLabelOracle::linear({1.0}, 0.0);
  CHECK(uncertainty_phi(o, 0, Vec{0.3}, 5) == Phi::kHit);
  CHECK(o.query_count() == 5);
  CHECK(uncertainty_phi(o, 0, Vec{-0.3}, 3) == Phi::kMiss);
  CHECK(o.query_count() == 8);
  CHECK_THROWS_AS(uncertainty_phi(o, 0, Vec{0.3}, 0), Error);
}

TEST_CASE("uncertainty vote matches the undefended answer when nothing is flagged") {
  const auto ds = state(0.1, 0.5);
  auto o = HardLabelOracle::defended(ds, 2);
  auto plain = HardLabelOracle::model(ds.target);
  const auto data = testing::mnist_test(30);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ClassIndex c = (data.labels[i] + 1) % 10;
    CHECK(uncertainty_phi(o, c, data.inputs[i], 3) == phi(plain, c, data.inputs[i]));
  }
}

TEST_CASE("majority of fair coins is still a fair coin") {
  // Every query flagged: each answer is the top or runner-up class with
  // probability 1/2, so phi against the top class is a fair coin.
  const auto ds = state(0.9, 0.5, true);
  const auto data = testing::mnist_test(1);
  const Vec& x = data.inputs[0];
  const ClassIndex top = argmax(ds.target->forward(x));
  auto o = HardLabelOracle::defended(ds, 77);
  const int n = 20000;
  int hits5 = 0, hits4 = 0;
  for (int i = 0; i < n; ++i) {
    hits5 += uncertainty_phi(o, top, x, 5) == Phi::kHit;
    hits4 += uncertainty_phi(o, top, x, 4) == Phi::kHit;
  }
  const double f5 = static_cast<double>(hits5) / n;
  const double f4 = static_cast<double>(hits4) / n;
  // binomial oracle: P(>=3 of 5) = 1/2, P(>=3 of 4) = 5/16 (ties are misses)
  const double se5 = std::sqrt(0.25 / n), se4 = std::sqrt(5.0 / 16.0 * 11.0 / 16.0 / n);
  CHECK(std::abs(f5 - 0.5) <= 4 * se5);
  CHECK(std::abs(f4 - 5.0 / 16.0) <= 4 * se4);
}

TEST_CASE("uncertainty estimate with k = 1 is the plain estimate") {
  auto o1 = HardLabelOracle::linear({1.0, -2.0, 0.5}, 0.1);
  auto o2 = HardLabelOracle::linear({1.0, -2.0, 0.5}, 0.1);
  Rng r1(5), r2(5);
  const Vec x{0.1, 0.2, 0.3};
  const auto a = uncertainty_gradient_estimate(o1, 0, x, 1e-2, 300, 1, r1);
  const auto b = estimate_gradient(o2, 0, x, 1e-2, 300, r2);
  CHECK(a.mean == b.mean);
  CHECK(a.queries == 300);

  auto o3 = HardLabelOracle::linear({1.0, -2.0, 0.5}, 0.1);
  Rng r3(5);
  const auto c = uncertainty_gradient_estimate(o3, 0, x, 1e-2, 300, 3, r3);
  CHECK(c.queries == 900);
  CHECK(o3.query_count() == 900);
  CHECK(c.mean == b.mean);
}
