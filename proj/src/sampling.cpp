#include "egal/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace egal {

namespace {

constexpr double kSumTolerance = 1e-9;

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (auto& x : out) x /= total;
  return out;
}

void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be positive and finite");
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto pos = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1));
  return v[pos];
}

double effective_support(std::span<const double> shifted, double lambda) {
  double total = 0.0;
  double total_sq = 0.0;
  for (double s : shifted) {
    const double w = std::exp(-s / lambda);
    total += w;
    total_sq += w * w;
  }
  return total * total / total_sq;
}

}  // namespace

SamplingDistribution::SamplingDistribution(std::vector<double> probs, double lambda, double floor)
    : probs_(std::move(probs)), lambda_(lambda), floor_(floor) {
  if (probs_.empty()) throw std::invalid_argument("sampling distribution over an empty pool");
  cdf_.resize(probs_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (!(probs_[i] >= floor_)) throw std::invalid_argument("probability below the floor");
    total += probs_[i];
    cdf_[i] = total;
  }
  if (std::abs(total - 1.0) > kSumTolerance) throw std::invalid_argument("probabilities do not sum to 1");
}

std::size_t SamplingDistribution::quantile(double u) const {
  const double target = u * cdf_.back();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
  if (it == cdf_.end()) --it;
  return static_cast<std::size_t>(it - cdf_.begin());
}

void apply_floor(std::vector<double>& probs, double alpha) {
  const double n = static_cast<double>(probs.size());
  const double beta = alpha * n;
  if (!(alpha >= 0.0) || beta > 1.0 + 1e-12) throw std::invalid_argument("floor alpha must satisfy 0 <= alpha * n <= 1");
  if (alpha == 0.0) return;
  const double keep = std::max(0.0, 1.0 - beta);
  for (auto& q : probs) q = keep * q + alpha;
}

SamplingDistribution boltzmann_distribution(std::span<const double> distances, double lambda, double alpha) {
  check_lambda(lambda);
  std::vector<double> logits(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (!(distances[i] >= 0.0) || !std::isfinite(distances[i])) {
      throw std::invalid_argument("distances must be finite and nonnegative");
    }
    logits[i] = -distances[i] / lambda;
  }
  if (logits.empty()) throw std::invalid_argument("sampling distribution over an empty pool");
  auto q = softmax(logits);
  apply_floor(q, alpha);
  return SamplingDistribution(std::move(q), lambda, alpha);
}

SamplingDistribution score_distribution(std::span<const double> scores, double lambda, double alpha) {
  check_lambda(lambda);
  if (scores.empty()) throw std::invalid_argument("sampling distribution over an empty pool");
  std::vector<double> logits(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw std::invalid_argument("scores must be finite");
    logits[i] = scores[i] / lambda;
  }
  auto q = softmax(logits);
  apply_floor(q, alpha);
  return SamplingDistribution(std::move(q), lambda, alpha);
}

void DrawLedger::record(const DrawRecord& r) {
  ++counts_.at(r.index);
  draws_.push_back(r);
}

std::size_t draw(const SamplingDistribution& dist, DrawLedger& ledger, Rng& rng) {
  const std::size_t i = dist.quantile(rng.uniform());
  ledger.record({i, dist.prob(i), false});
  return i;
}

FrequencyEstimate make_estimate(std::string class_id, EstimateMode mode, double range_max) {
  FrequencyEstimate est;
  est.class_id = std::move(class_id);
  est.mode = mode;
  est.stats.range_max = mode == EstimateMode::kUniform ? 1.0 : range_max;
  est.upper = est.stats.range_max;
  est.sigma = est.upper;
  return est;
}

void update_importance(FrequencyEstimate& est, bool label_matches, double prob_at_draw, std::size_t n_pool,
                       double delta) {
  if (!(prob_at_draw > 0.0)) throw std::invalid_argument("importance update needs a positive draw probability");
  const double weight = (1.0 / static_cast<double>(n_pool)) / prob_at_draw;
  if (weight > est.stats.range_max * (1.0 + 1e-9)) {
    throw std::invalid_argument("importance weight exceeds the floor-implied range");
  }
  est.stats.add(label_matches ? weight : 0.0);
  const auto iv = bounds::bernstein_interval(est.stats, delta);
  est.p_hat = est.stats.mean;
  est.lower = iv.lower;
  est.upper = std::max(iv.upper, est.p_hat);
  est.sigma = est.upper - est.p_hat;
}

void update_uniform(FrequencyEstimate& est, bool label_matches, double delta) {
  est.stats.add(label_matches ? 1.0 : 0.0);
  const auto successes = static_cast<std::size_t>(std::llround(est.stats.mean * static_cast<double>(est.stats.n)));
  const auto iv = bounds::chernoff_interval(successes, est.stats.n, delta);
  est.p_hat = est.stats.mean;
  est.lower = iv.lower;
  est.upper = std::max(iv.upper, est.p_hat);
  est.sigma = est.upper - est.p_hat;
}

FrequencyEstimate update_frequency_estimate(FrequencyEstimate est, const std::string& drawn_label,
                                            double prob_at_draw, bool uniform_step, std::size_t n_pool,
                                            double delta) {
  const bool match = drawn_label == est.class_id;
  if (est.mode == EstimateMode::kImportance) {
    update_importance(est, match, prob_at_draw, n_pool, delta);
  } else {
    if (!uniform_step) throw std::invalid_argument("uniform-mode estimates only take uniform-step draws");
    update_uniform(est, match, delta);
  }
  return est;
}

double ess_score(std::span<const std::size_t> counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  if (total == 0.0) throw std::invalid_argument("ess_score of all-zero counts");
  double sum_sq = 0.0;
  for (auto c : counts) {
    const double w = static_cast<double>(c) / total;
    sum_sq += w * w;
  }
  return 1.0 / sum_sq;
}

LengthScaleResult optimize_length_scale(std::span<const double> distances, std::size_t batch_size, std::size_t runs,
                                        std::span<const double> lambda_grid, Rng& rng) {
  if (lambda_grid.empty()) throw std::invalid_argument("empty length-scale grid");
  if (batch_size == 0 || runs == 0) throw std::invalid_argument("batch_size and runs must be positive");

  LengthScaleResult result;
  result.grid.assign(lambda_grid.begin(), lambda_grid.end());
  std::vector<std::size_t> batch(batch_size);
  std::vector<std::size_t> counts;
  for (double lambda : lambda_grid) {
    const auto dist = boltzmann_distribution(distances, lambda, 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < runs; ++r) {
      for (auto& i : batch) i = dist.quantile(rng.uniform());
      std::sort(batch.begin(), batch.end());
      counts.clear();
      for (std::size_t j = 0; j < batch.size(); ++j) {
        if (j == 0 || batch[j] != batch[j - 1]) counts.push_back(0);
        ++counts.back();
      }
      total += ess_score(counts);
    }
    result.mean_ess.push_back(total / static_cast<double>(runs));
  }

  std::size_t best = 0;
  for (std::size_t k = 1; k < result.grid.size(); ++k) {
    const double a = result.mean_ess[k];
    const double b = result.mean_ess[best];
    if (a < b || (a == b && result.grid[k] < result.grid[best])) best = k;
  }
  result.lambda = result.grid[best];
  return result;
}

std::vector<double> default_length_scale_grid(std::span<const double> distances, std::size_t min_support,
                                              std::size_t count) {
  if (distances.empty() || count == 0) throw std::invalid_argument("default_length_scale_grid: empty input");
  const double dmin = *std::min_element(distances.begin(), distances.end());
  std::vector<double> shifted(distances.size());
  std::transform(distances.begin(), distances.end(), shifted.begin(), [dmin](double d) { return d - dmin; });

  double hi = percentile(shifted, 0.99);
  if (!(hi > 0.0)) hi = 1.0;  // all points equidistant: any lambda gives the uniform distribution
  const double target = static_cast<double>(std::min(min_support, distances.size()));

  double lo = hi;
  if (effective_support(shifted, hi) >= target) {
    // Support grows with lambda; bisect in log space for the smallest lambda
    // that still spreads mass over `target` points.
    double a = std::log(hi) - 30.0;
    double b = std::log(hi);
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (a + b);
      if (effective_support(shifted, std::exp(mid)) >= target) {
        b = mid;
      } else {
        a = mid;
      }
    }
    lo = std::exp(b);
  }

  std::vector<double> grid;
  if (count == 1 || lo >= hi) {
    grid.push_back(lo);
    return grid;
  }
  const double step = (std::log(hi) - std::log(lo)) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) grid.push_back(std::exp(std::log(lo) + step * static_cast<double>(k)));
  return grid;
}

std::size_t argmax_lowest(std::span<const double> scores) {
  std::size_t best = scores.size();
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > best_score) {
      best = i;
      best_score = scores[i];
    }
  }
  return best;
}

Selection epsilon_greedy_select(std::size_t n, double epsilon, Rng& rng, const std::function<std::size_t()>& argmax) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (n == 0) throw std::invalid_argument("epsilon_greedy_select over an empty pool");
  if (rng.uniform() < epsilon) return {rng.index(n), true};
  return {argmax(), false};
}

Selection epsilon_greedy_select(std::span<const double> scores, double epsilon, Rng& rng) {
  return epsilon_greedy_select(scores.size(), epsilon, rng, [&] {
    const auto i = argmax_lowest(scores);
    if (i == scores.size()) throw std::invalid_argument("no selectable candidate for the greedy step");
    return i;
  });
}

}  // namespace egal
