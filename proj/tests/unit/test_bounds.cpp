#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "egal/bounds.hpp"

using namespace egal::bounds;

namespace {

// Independent KL evaluation in long double.
long double kl_oracle(long double p, long double q) {
  long double r = 0;
  if (p > 0) r += p * std::log(p / q);
  if (p < 1) r += (1 - p) * std::log((1 - p) / (1 - q));
  return r;
}

WeightedSampleStats make_stats(std::size_t n, double mean, double variance, double m) {
  WeightedSampleStats s;
  s.n = n;
  s.mean = mean;
  s.m2 = variance * static_cast<double>(n - 1);
  s.range_max = m;
  return s;
}

}  // namespace

TEST_CASE("bernoulli_kl") {
  CHECK(bernoulli_kl(0.5, 0.5) == 0.0);
  CHECK(bernoulli_kl(0.0, 0.3) == doctest::Approx(-std::log(0.7)).epsilon(1e-15));
  CHECK(bernoulli_kl(0.1, 0.2) == doctest::Approx(static_cast<double>(kl_oracle(0.1L, 0.2L))).epsilon(1e-14));
  CHECK(bernoulli_kl(0.1, 0.2) == doctest::Approx(0.03669).epsilon(1e-4));
  CHECK(std::isinf(bernoulli_kl(0.2, 0.0)));
  CHECK(std::isinf(bernoulli_kl(0.2, 1.0)));
  CHECK(bernoulli_kl(1.0, 1.0) == 0.0);
  // Increasing in |q - p| on each side.
  CHECK(bernoulli_kl(0.3, 0.5) < bernoulli_kl(0.3, 0.6));
  CHECK(bernoulli_kl(0.3, 0.2) < bernoulli_kl(0.3, 0.1));
}

TEST_CASE("chernoff bounds against closed forms") {
  CHECK(chernoff_upper(1.0, 10, 0.05) == 1.0);
  CHECK(chernoff_lower(0.0, 10, 0.05) == 0.0);
  CHECK(chernoff_upper(0.0, 59, 0.05) == doctest::Approx(1.0 - std::pow(0.05, 1.0 / 59)).epsilon(1e-12));
  CHECK(chernoff_upper(0.0, 59, 0.05) == doctest::Approx(0.0495).epsilon(1e-3));
  CHECK(chernoff_lower(1.0, 59, 0.05) == doctest::Approx(std::pow(0.05, 1.0 / 59)).epsilon(1e-12));
  CHECK(chernoff_upper(0.5, 100000000, 0.05) == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("chernoff root finder is consistent and ordered on random triples") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> up(0.0, 1.0), ud(0.001, 0.5);
  std::uniform_int_distribution<std::size_t> un(10, 10000);
  for (int t = 0; t < 1000; ++t) {
    const double p = up(gen), delta = ud(gen);
    const std::size_t n = un(gen);
    const double level = std::log(1.0 / delta) / static_cast<double>(n);
    const double u = chernoff_upper(p, n, delta), l = chernoff_lower(p, n, delta);
    CHECK(l <= p);
    CHECK(p <= u);
    if (u < 1.0) CHECK(std::abs(static_cast<double>(kl_oracle(p, u)) - level) <= 1e-9);
    if (l > 0.0) CHECK(std::abs(static_cast<double>(kl_oracle(p, l)) - level) <= 1e-9);
  }
}

TEST_CASE("chernoff monotonicity and nesting") {
  CHECK(chernoff_upper(0.2, 100, 0.05) >= chernoff_upper(0.2, 200, 0.05));
  CHECK(chernoff_upper(0.2, 100, 0.05) <= chernoff_upper(0.3, 100, 0.05));
  const auto wide = chernoff_interval(20, 100, 0.01), narrow = chernoff_interval(20, 100, 0.1);
  CHECK(wide.lower <= narrow.lower);
  CHECK(wide.upper >= narrow.upper);
  const auto empty = chernoff_interval(0, 0, 0.05);
  CHECK(empty.lower == 0.0);
  CHECK(empty.upper == 1.0);
  CHECK_THROWS(chernoff_upper(0.5, 0, 0.05));
  CHECK_THROWS(chernoff_upper(0.5, 5, 1.0));
}

TEST_CASE("empirical Bernstein width") {
  const double delta = 2.0 * std::exp(-2.0);  // log(2/delta) = 2
  CHECK(bernstein_width(make_stats(101, 0.3, 0.0, 1.0), delta) == doctest::Approx(14.0 / 300.0).epsilon(1e-12));
  CHECK(bernstein_width(make_stats(50, 0.0, 0.0, 0.0), 0.05) == 0.0);
  // sqrt(2 V L / n) + 7 m L / (3 (n-1)) with V = 0.25, n = 101, L = 2
  CHECK(bernstein_width(make_stats(101, 0.5, 0.25, 1.0), delta) ==
        doctest::Approx(std::sqrt(2 * 0.25 * 2 / 101.0) + 14.0 / 300.0).epsilon(1e-12));
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t n = 2; n < 500; n += 7) {
    const double w = bernstein_width(make_stats(n, 0.2, 0.1, 3.0), 0.05);
    CHECK(w <= prev);
    prev = w;
  }
  CHECK_THROWS(bernstein_width(make_stats(1, 0.0, 0.0, 1.0), 0.05));

  const auto iv = bernstein_interval(make_stats(10, 0.1, 0.5, 2.0), 0.05);
  CHECK(iv.lower == 0.0);
  CHECK(iv.upper == 2.0);
  WeightedSampleStats one;
  one.range_max = 5.0;
  one.add(1.0);
  CHECK(bernstein_interval(one, 0.05).upper == 5.0);
}

TEST_CASE("Welford statistics match two-pass formulas") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  std::vector<double> xs(257);
  WeightedSampleStats s;
  for (auto& x : xs) {
    x = u(gen);
    s.add(x);
  }
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  CHECK(s.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(s.variance() == doctest::Approx(ss / static_cast<double>(xs.size() - 1)).epsilon(1e-12));
}

TEST_CASE("Bernstein coverage on bounded draws") {
  // z = 4 * Bernoulli(0.05): mean 0.2 on the range [0, 4].
  std::mt19937_64 gen(11);
  std::bernoulli_distribution coin(0.05);
  int misses = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    WeightedSampleStats s;
    s.range_max = 4.0;
    for (int i = 0; i < 400; ++i) s.add(coin(gen) ? 4.0 : 0.0);
    const auto iv = bernstein_interval(s, 0.05);
    if (0.2 < iv.lower || 0.2 > iv.upper) ++misses;
  }
  CHECK(misses <= 2 * 0.05 * trials);
}

TEST_CASE("uniform_stopping_count") {
  CHECK(uniform_stopping_count(0.1, 0.05) == 300);
  CHECK(uniform_stopping_count(1.0, std::exp(-1.0)) == 1);
  const auto a = uniform_stopping_count(0.2, 0.05), b = uniform_stopping_count(0.1, 0.05);
  CHECK(b >= 4 * a - 4);
  CHECK(b <= 4 * a);
}
