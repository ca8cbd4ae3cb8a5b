#include <filesystem>

#include "doctest.h"
#include "predcoin/defense.hpp"
#include "predcoin/oracle.hpp"
#include "support.hpp"

using namespace predcoin;

namespace {

DefenseState make_state(double y1, double gamma, FlipMode mode) {
  DefenseState ds;
  ds.target = testing::small_mnist_target();
  ds.detector = testing::constant_detector(y1);
  ds.gamma = gamma;
  ds.mode = mode;
  return ds;
}

}  // namespace

TEST_CASE("top-3 transform") {
  const Vec p{0.1, 0.6, 0.05, 0.25};
  const auto t = top3_descending(p);
  CHECK(t == FQInput{0.6, 0.25, 0.1});
  CHECK(top3_descending(Vec{0.7, 0.3}) == FQInput{0.7, 0.3, 0.0});
  CHECK(top3_descending(Vec{0.2, 0.5, 0.3}) == FQInput{0.5, 0.3, 0.2});
}

TEST_CASE("gamma 0 flags every query, gamma above y1 flags none") {
  auto ds = make_state(0.3, 0.0, FlipMode::kProbabilistic);
  const auto data = testing::mnist_test(20);
  for (const auto& x : data.inputs) {
    const Vec p = ds.target->forward(x);
    CHECK(detect(ds, p).flagged);
    CHECK(detect(ds, p).y1 == doctest::Approx(0.3).epsilon(1e-12));
  }
  ds.gamma = 1.0;
  for (const auto& x : data.inputs) CHECK_FALSE(detect(ds, ds.target->forward(x)).flagged);
  ds.gamma = 0.3 + 1e-9;
  for (const auto& x : data.inputs) CHECK_FALSE(detect(ds, ds.target->forward(x)).flagged);
}

TEST_CASE("unflagged queries get the undefended label") {
  const auto ds = make_state(0.2, 0.5, FlipMode::kProbabilistic);
  const auto data = testing::mnist_test(100);
  Rng rng(1);
  for (const auto& x : data.inputs) CHECK(defended_predict(ds, x, rng) == argmax(ds.target->forward(x)));
}

TEST_CASE("probabilistic flip is a fair coin between the top two labels") {
  auto ds = make_state(0.9, 0.5, FlipMode::kProbabilistic);
  const auto data = testing::mnist_test(1);
  const Vec& x = data.inputs[0];
  const Vec p = ds.target->forward(x);
  Rng rng(11);
  int flips = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto y = defended_predict(ds, x, rng);
    CHECK((y == argmax(p) || y == second_argmax(p)));
    flips += y != argmax(p);
  }
  const double f = static_cast<double>(flips) / n;
  CHECK(f >= 0.48);
  CHECK(f <= 0.52);
}

TEST_CASE("flag_all overrides the detector") {
  auto ds = make_state(0.01, 0.99, FlipMode::kProbabilistic);
  ds.flag_all = true;
  CHECK(detect(ds, Vec{0.5, 0.3, 0.2}).flagged);
}

TEST_CASE("parity rule examples") {
  CHECK_FALSE(parity_of_sum(1.23454)); // round -> 12345, last digit odd
  CHECK(parity_of_sum(1.2346));        // 12346, even
  CHECK(parity_of_sum(3.14159));       // 31416, even
  CHECK(parity_of_sum(0.0));           // 0 is even
  CHECK(parity_of_sum(0.00024));       // round(2.4) = 2
  CHECK_FALSE(parity_of_sum(0.00026)); // round(2.6) = 3
  CHECK(parity_of_sum(-0.0008));       // |-8| even
}

TEST_CASE("parity answers are a deterministic function of the input") {
  auto ds = make_state(0.9, 0.5, FlipMode::kParity);
  auto o1 = HardLabelOracle::defended(ds, 1);
  auto o2 = HardLabelOracle::defended(ds, 999);
  const auto data = testing::mnist_test(50);
  int flipped = 0;
  for (const auto& x : data.inputs) {
    const auto a = o1.query_label(x);
    CHECK(a == o1.query_label(x));
    CHECK(a == o2.query_label(x));
    const Vec p = ds.target->forward(x);
    const bool expect_flip = parity_of_sum(ds.target->first_layer_sum(x));
    CHECK(a == (expect_flip ? second_argmax(p) : argmax(p)));
    flipped += expect_flip;
  }
  CHECK(flipped > 0);
  CHECK(flipped < 50);
}

TEST_CASE("mode off never consults the detector") {
  auto ds = make_state(0.99, 0.0, FlipMode::kOff);
  ds.flag_all = true;
  const auto data = testing::mnist_test(30);
  Rng rng(4);
  for (const auto& x : data.inputs) CHECK(defended_predict(ds, x, rng) == argmax(ds.target->forward(x)));
}

TEST_CASE("defense config roundtrip with relative model paths") {
  const auto dir = std::filesystem::temp_directory_path() / "predcoin_defense_cfg";
  std::filesystem::create_directories(dir);
  save_model(*testing::small_mnist_target(), dir / "target.pcnn");
  save_model(*testing::constant_detector(0.4), dir / "fq.pcnn");
  DefenseConfig cfg{0.375, FlipMode::kParity, "fq.pcnn", "target.pcnn", 42};
  save_defense_config(cfg, dir / "defense.json");
  const auto back = load_defense_config(dir / "defense.json");
  CHECK(back.gamma == 0.375);
  CHECK(back.mode == FlipMode::kParity);
  CHECK(back.seed == 42);
  CHECK(std::filesystem::path(back.fq_path) == dir / "fq.pcnn");
  const auto ds = load_defense(back);
  CHECK(ds.gamma == 0.375);
  CHECK(ds.detector->forward(Vec{0.5, 0.3, 0.2})[0] == doctest::Approx(0.4));
  std::filesystem::remove_all(dir);
}

TEST_CASE("defense validation") {
  auto ds = make_state(0.5, 1.5, FlipMode::kProbabilistic);
  CHECK_THROWS_AS(ds.validate(), Error);
  ds.gamma = 0.5;
  ds.detector = testing::small_mnist_target();
  CHECK_THROWS_AS(ds.validate(), DimensionError);
  CHECK_THROWS_AS(parse_flip_mode("always"), Error);
}
