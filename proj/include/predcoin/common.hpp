#ifndef PREDCOIN_COMMON_HPP
#define PREDCOIN_COMMON_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace predcoin {

using Vec = std::vector<double>;
using ClassIndex = std::size_t;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  DimensionError(const std::string& what, std::size_t expected, std::size_t actual)
      : Error(what + ": expected dimension " + std::to_string(expected) + ", got " +
              std::to_string(actual)),
        expected(expected),
        actual(actual) {}
  std::size_t expected;
  std::size_t actual;
};

struct FormatError : Error {
  using Error::Error;
};

struct UnsupportedOperation : Error {
  using Error::Error;
};

/// Raised when an oracle's query limit is hit. `spent` is the number of
/// queries the interrupted operation had already consumed.
struct BudgetExhausted : Error {
  explicit BudgetExhausted(std::uint64_t spent)
      : Error("query budget exhausted after " + std::to_string(spent) + " queries"), spent(spent) {}
  std::uint64_t spent;
};

inline void check_dim(const char* what, std::size_t expected, std::size_t actual) {
  if (expected != actual) throw DimensionError(what, expected, actual);
}

using Rng = std::mt19937_64;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double dist_inf(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline void clip_unit(Vec& x) {
  for (double& v : x) v = std::clamp(v, 0.0, 1.0);
}

/// Uniform direction on the unit sphere in R^d via normalised Gaussian draws.
inline Vec sample_sphere(std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec u(d);
  double n = 0.0;
  do {
    for (double& v : u) v = normal(rng);
    n = norm2(u);
  } while (n == 0.0);
  for (double& v : u) v /= n;
  return u;
}

inline Vec sample_uniform_box(std::size_t d, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec x(d);
  for (double& v : x) v = unif(rng);
  return x;
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Index of the largest entry; ties go to the lowest index.
inline ClassIndex argmax(std::span<const double> p) {
  ClassIndex best = 0;
  for (ClassIndex i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

/// Index of the second-largest entry (ties to the lowest index, excluding argmax).
inline ClassIndex second_argmax(std::span<const double> p) {
  if (p.size() < 2) return 0;
  const ClassIndex top = argmax(p);
  ClassIndex best = top == 0 ? 1 : 0;
  for (ClassIndex i = 0; i < p.size(); ++i)
    if (i != top && p[i] > p[best]) best = i;
  return best;
}

}  // namespace predcoin

#endif
