#include "egal/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace egal::bounds {

namespace {

// Bisection runs until the bracket stops shrinking in double precision,
// which happens well before this cap.
constexpr int kMaxIterations = 200;

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
}

void check_args(double p_hat, std::size_t n, double delta) {
  if (!(p_hat >= 0.0 && p_hat <= 1.0)) throw std::invalid_argument("p_hat must lie in [0, 1]");
  if (n == 0) throw std::invalid_argument("n must be positive");
  check_delta(delta);
}

// p log(p/q) with the 0 log 0 = 0 convention.
double xlogy_ratio(double p, double q) {
  if (p == 0.0) return 0.0;
  if (q == 0.0) return std::numeric_limits<double>::infinity();
  return p * std::log(p / q);
}

}  // namespace

void WeightedSampleStats::add(double z) {
  ++n;
  const double d = z - mean;
  mean += d / static_cast<double>(n);
  m2 += d * (z - mean);
}

double bernoulli_kl(double p, double q) {
  if (!(p >= 0.0 && p <= 1.0) || !(q >= 0.0 && q <= 1.0)) {
    throw std::invalid_argument("bernoulli_kl arguments must lie in [0, 1]");
  }
  return std::max(0.0, xlogy_ratio(p, q) + xlogy_ratio(1.0 - p, 1.0 - q));
}

double chernoff_upper(double p_hat, std::size_t n, double delta) {
  check_args(p_hat, n, delta);
  if (p_hat >= 1.0) return 1.0;
  const double level = std::log(1.0 / delta) / static_cast<double>(n);
  // KL(p_hat, .) is increasing on [p_hat, 1); it diverges at 1 when p_hat < 1.
  double lo = p_hat;
  double hi = 1.0;
  for (int it = 0; it < kMaxIterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (bernoulli_kl(p_hat, mid) <= level) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

double chernoff_lower(double p_hat, std::size_t n, double delta) {
  check_args(p_hat, n, delta);
  if (p_hat <= 0.0) return 0.0;
  const double level = std::log(1.0 / delta) / static_cast<double>(n);
  double lo = 0.0;
  double hi = p_hat;
  for (int it = 0; it < kMaxIterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (bernoulli_kl(p_hat, mid) <= level) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

Interval chernoff_interval(std::size_t successes, std::size_t n, double delta) {
  check_delta(delta);
  if (n == 0) return {0.0, 1.0, delta, 0};
  const double p_hat = static_cast<double>(successes) / static_cast<double>(n);
  return {chernoff_lower(p_hat, n, delta), chernoff_upper(p_hat, n, delta), delta, n};
}

double bernstein_width(const WeightedSampleStats& stats, double delta) {
  check_delta(delta);
  if (stats.n < 2) throw std::invalid_argument("bernstein_width needs at least 2 observations");
  const double log_term = std::log(2.0 / delta);
  const double n = static_cast<double>(stats.n);
  return std::sqrt(2.0 * stats.variance() * log_term / n) + 7.0 * stats.range_max * log_term / (3.0 * (n - 1.0));
}

Interval bernstein_interval(const WeightedSampleStats& stats, double delta) {
  check_delta(delta);
  if (stats.n < 2) return {0.0, stats.range_max, delta, stats.n};
  const double w = bernstein_width(stats, delta);
  return {std::max(0.0, stats.mean - w), std::min(stats.range_max, stats.mean + w), delta, stats.n};
}

std::uint64_t uniform_stopping_count(double gamma, double delta) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  check_delta(delta);
  return static_cast<std::uint64_t>(std::ceil(std::log(1.0 / delta) / (gamma * gamma)));
}

}  // namespace egal::bounds
