#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "predcoin/dataset.hpp"
#include "predcoin/metrics.hpp"
#include "support.hpp"

using namespace predcoin;

namespace {

AttackResult result(double l2, double linf, bool success) {
  AttackResult r;
  r.l2_dist = l2;
  r.linf_dist = linf;
  r.success = success;
  return r;
}

void put_be32(std::ofstream& f, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

struct IdxFiles {
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "predcoin_idx_test";
  std::filesystem::path images = dir / "img";
  std::filesystem::path labels = dir / "lbl";

  IdxFiles(std::uint32_t n_img, std::uint32_t n_lbl, std::uint32_t img_magic = 2051, bool cut = false) {
    std::filesystem::create_directories(dir);
    std::ofstream fi(images, std::ios::binary);
    put_be32(fi, img_magic);
    put_be32(fi, n_img);
    put_be32(fi, 2);
    put_be32(fi, 2);
    for (std::uint32_t i = 0; i < n_img * 4 - (cut ? 1 : 0); ++i) fi.put(static_cast<char>(i % 4 == 0 ? 255 : i % 4 * 51));
    std::ofstream fl(labels, std::ios::binary);
    put_be32(fl, 2049);
    put_be32(fl, n_lbl);
    for (std::uint32_t i = 0; i < n_lbl; ++i) fl.put(static_cast<char>(i % 10));
  }
  ~IdxFiles() { std::filesystem::remove_all(dir); }
};

}  // namespace

TEST_CASE("median examples") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK(median({7.0}) == 7.0);
  CHECK_THROWS_AS(median({}), Error);
}

TEST_CASE("median distance ignores failures") {
  const std::vector<AttackResult> rs{result(1.0, 0.1, true), result(0.1, 0.01, false), result(3.0, 0.3, true),
                                     result(2.0, 0.5, true)};
  CHECK(median_lp(rs, Norm::kL2) == 2.0);
  CHECK(median_lp(rs, Norm::kLinf) == 0.3);
  const std::vector<AttackResult> none{result(1.0, 1.0, false)};
  CHECK_THROWS_AS(median_lp(none, Norm::kL2), Error);
}

TEST_CASE("attack success rate examples") {
  const std::vector<AttackResult> rs{result(1.0, 0.1, true), result(0.1, 0.01, false), result(3.0, 0.3, true),
                                     result(2.0, 0.5, true)};
  CHECK(asr(rs, 0.0, Norm::kL2) == 0.0);
  CHECK(asr(rs, 1.0, Norm::kL2) == 0.25);
  CHECK(asr(rs, 2.5, Norm::kL2) == 0.5);
  CHECK(asr(rs, 100.0, Norm::kL2) == 0.75);
  CHECK(asr(rs, 0.3, Norm::kLinf) == 0.5);
}

TEST_CASE("IDX reader") {
  IdxFiles f(3, 3);
  const auto data = load_idx(f.images, f.labels);
  REQUIRE(data.size() == 3);
  CHECK(data.inputs[0].size() == 4);
  CHECK(data.inputs[0][0] == 1.0);
  CHECK(data.inputs[0][1] == 51.0 / 255.0);
  CHECK(data.inputs[0][3] == 153.0 / 255.0);
  CHECK(data.labels == std::vector<ClassIndex>{0, 1, 2});
  CHECK(load_idx(f.images, f.labels, 2).size() == 2);
}

TEST_CASE("IDX reader errors") {
  {
    IdxFiles f(3, 2);
    CHECK_THROWS_AS(load_idx(f.images, f.labels), DimensionError);
  }
  {
    IdxFiles f(3, 3, 1234);
    CHECK_THROWS_WITH_AS(load_idx(f.images, f.labels), doctest::Contains("bad magic"), FormatError);
  }
  {
    IdxFiles f(3, 3, 2051, true);
    CHECK_THROWS_WITH_AS(load_idx(f.images, f.labels), doctest::Contains("truncated"), FormatError);
  }
}

TEST_CASE("MNIST files load with the expected shape") {
  const auto data = testing::mnist_test(100);
  REQUIRE(data.size() == 100);
  for (const auto& x : data.inputs) {
    CHECK(x.size() == 784);
    for (double v : x) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("blobs") {
  BlobsConfig cfg;
  cfg.per_class = 100;
  cfg.dim = 3;
  cfg.seed = 2;
  const auto data = make_blobs(cfg);
  REQUIRE(data.size() == 200);
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(data.labels[i] == i % 2);
    (data.labels[i] ? m1 : m0) += data.inputs[i][0] / 100.0;
  }
  CHECK(m0 == doctest::Approx(0.5 - 0.15).epsilon(0.05));
  CHECK(m1 == doctest::Approx(0.5 + 0.15).epsilon(0.05));
}

TEST_CASE("correct picks are correct and cover classes") {
  const auto net = testing::small_mnist_target();
  const auto data = testing::mnist_test(500);
  const auto idx = pick_correct(*net, data, 20);
  REQUIRE(idx.size() == 20);
  std::vector<int> seen(10, 0), available(10, 0);
  for (auto i : idx) {
    CHECK(argmax(net->forward(data.inputs[i])) == data.labels[i]);
    seen[data.labels[i]]++;
  }
  for (std::size_t i = 0; i < data.size(); ++i) available[data.labels[i]] += argmax(net->forward(data.inputs[i])) == data.labels[i];
  // round-robin: every class contributes two unless it has fewer correct examples
  for (int c = 0; c < 10; ++c) CHECK(seen[c] >= std::min(2, available[c]));
}

TEST_CASE("accuracy loss") {
  DefenseState ds;
  ds.target = testing::small_mnist_target();
  ds.detector = testing::constant_detector(0.9);
  ds.gamma = 0.5;
  const auto data = testing::mnist_test(400);
  double base_oracle = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) base_oracle += argmax(ds.target->forward(data.inputs[i])) == data.labels[i];
  base_oracle /= 400.0;

  ds.mode = FlipMode::kOff;
  const auto off = accuracy_loss(ds, data, 1);
  CHECK(off.delta == 0.0);
  CHECK(off.acc_base == base_oracle);
  CHECK(off.flagged == 0.0);

  // everything flagged: the loss is half the rows the target gets right, less
  // the rows where the runner-up is correct, within coin noise
  ds.mode = FlipMode::kProbabilistic;
  const auto all = accuracy_loss(ds, data, 1);
  CHECK(all.flagged == 1.0);
  double runner_up = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) runner_up += second_argmax(ds.target->forward(data.inputs[i])) == data.labels[i];
  runner_up /= 400.0;
  const double expected = 0.5 * (base_oracle - runner_up);
  CHECK(std::abs(all.delta - expected) <= 4.0 * all.se + 1e-12);
  CHECK(all.se > 0.0);

  ds.mode = FlipMode::kParity;
  const auto p1 = accuracy_loss(ds, data, 1);
  const auto p2 = accuracy_loss(ds, data, 2);
  CHECK(p1.delta == p2.delta);
}

TEST_CASE("timing ratio with the defense off is near one") {
  DefenseState ds;
  ds.target = testing::small_mnist_target();
  ds.detector = testing::constant_detector(0.5);
  ds.mode = FlipMode::kOff;
  const auto data = testing::mnist_test(256);
  const auto t = inference_time_ratio(ds, data.inputs, 9);
  CHECK(t.ratio >= 0.9);
  CHECK(t.ratio <= 1.1);
  CHECK_THROWS_AS(inference_time_ratio(ds, data.inputs, 3), Error);
}
