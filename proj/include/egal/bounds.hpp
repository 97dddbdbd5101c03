#pragma once

// Anytime confidence bounds on class frequencies.
//
// Two interval families are used by the stopping rule: the Chernoff (KL)
// interval for Bernoulli observations from uniform draws, and the empirical
// Bernstein interval for bounded importance-weighted observations. All logs
// are natural.

#include <cstddef>
#include <cstdint>

namespace egal::bounds {

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
  double delta = 0.05;
  std::size_t n = 0;
};

/// Running statistics of nonnegative observations z_i in [0, range_max].
/// Welford update; variance uses the n-1 denominator.
struct WeightedSampleStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;  // sum of squared deviations from the running mean
  double range_max = 0.0;

  void add(double z);
  double variance() const noexcept { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }

  friend bool operator==(const WeightedSampleStats&, const WeightedSampleStats&) = default;
};

/// KL(Ber(p) || Ber(q)) in nats, with 0 log 0 = 0. Returns +inf when q is 0
/// or 1 and p differs from it.
double bernoulli_kl(double p, double q);

/// Largest x in [p_hat, 1] with KL(p_hat, x) <= log(1/delta)/n, bisected
/// until the bracket stops shrinking. Throws std::invalid_argument on bad
/// arguments.
double chernoff_upper(double p_hat, std::size_t n, double delta);

/// Smallest x in [0, p_hat] with KL(p_hat, x) <= log(1/delta)/n.
double chernoff_lower(double p_hat, std::size_t n, double delta);

/// Chernoff interval for `successes` out of `n` Bernoulli draws. With n = 0
/// the interval is [0, 1].
Interval chernoff_interval(std::size_t successes, std::size_t n, double delta);

/// Empirical Bernstein half-width for observations on [0, m]:
///   sqrt(2 V log(2/delta) / n) + 7 m log(2/delta) / (3 (n - 1))
/// with V the sample variance of the raw observations. Needs n >= 2.
double bernstein_width(const WeightedSampleStats& stats, double delta);

/// [mean - w, mean + w] clipped to [0, range_max]. For n < 2 the interval is
/// the whole range.
Interval bernstein_interval(const WeightedSampleStats& stats, double delta);

/// Number of uniform draws after which a class of frequency >= gamma has
/// been seen with probability >= 1 - delta: ceil(log(1/delta) / gamma^2).
std::uint64_t uniform_stopping_count(double gamma, double delta);

}  // namespace egal::bounds
