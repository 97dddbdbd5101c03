#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "egal/bounds.hpp"
#include "egal/rng.hpp"

namespace egal {

/// Categorical distribution over pool indices with a propensity floor.
class SamplingDistribution {
 public:
  SamplingDistribution() = default;

  /// Takes ownership of normalized probabilities. Throws std::invalid_argument
  /// when they do not sum to 1 within 1e-9 or an entry is below `floor`.
  SamplingDistribution(std::vector<double> probs, double lambda, double floor);

  std::span<const double> probs() const noexcept { return probs_; }
  double prob(std::size_t i) const { return probs_[i]; }
  std::size_t size() const noexcept { return probs_.size(); }
  double lambda() const noexcept { return lambda_; }
  double floor() const noexcept { return floor_; }

  /// Inverse-CDF lookup for u in [0, 1).
  std::size_t quantile(double u) const;

 private:
  std::vector<double> probs_;
  std::vector<double> cdf_;
  double lambda_ = 1.0;
  double floor_ = 0.0;
};

/// Mixes in the floor: q' = (1 - alpha n) q + alpha. Requires alpha n <= 1.
void apply_floor(std::vector<double>& probs, double alpha);

/// q_i proportional to exp(-d_i / lambda), max-shifted, then floored.
/// Throws std::invalid_argument for lambda <= 0, alpha n > 1, or non-finite /
/// negative distances.
SamplingDistribution boltzmann_distribution(std::span<const double> distances, double lambda, double alpha);

/// q_i proportional to exp(+s_i / lambda), then floored. Higher scores get
/// more mass.
SamplingDistribution score_distribution(std::span<const double> scores, double lambda, double alpha);

/// Draw record: pool index, the probability it had when drawn, and whether
/// the draw was a uniform exploration step.
struct DrawRecord {
  std::size_t index = 0;
  double prob = 0.0;
  bool uniform_step = false;

  friend bool operator==(const DrawRecord&, const DrawRecord&) = default;
};

/// With-replacement draw history and per-index counts.
class DrawLedger {
 public:
  DrawLedger() = default;
  explicit DrawLedger(std::size_t pool_size) : counts_(pool_size, 0) {}

  void record(const DrawRecord& r);
  std::span<const std::size_t> counts() const noexcept { return counts_; }
  const std::vector<DrawRecord>& draws() const noexcept { return draws_; }
  std::size_t pool_size() const noexcept { return counts_.size(); }

  friend bool operator==(const DrawLedger&, const DrawLedger&) = default;

 private:
  std::vector<std::size_t> counts_;
  std::vector<DrawRecord> draws_;
};

/// Categorical draw from dist; appends (index, prob, false) to the ledger.
std::size_t draw(const SamplingDistribution& dist, DrawLedger& ledger, Rng& rng);

enum class EstimateMode {
  kImportance,  // z = ((1/n) / q) * 1(label = y) on [0, 1/(alpha n)], Bernstein width
  kUniform,     // z = 1(label = y) from uniform draws only, Chernoff width
};

/// Frequency estimate for one class.
struct FrequencyEstimate {
  std::string class_id;
  EstimateMode mode = EstimateMode::kImportance;
  double p_hat = 0.0;
  double sigma = 1.0;  // upper bound minus p_hat
  double lower = 0.0;
  double upper = 1.0;
  bounds::WeightedSampleStats stats;

  std::size_t n_draws() const noexcept { return stats.n; }

  friend bool operator==(const FrequencyEstimate&, const FrequencyEstimate&) = default;
};

FrequencyEstimate make_estimate(std::string class_id, EstimateMode mode, double range_max);

/// Folds one observation into an importance-mode estimate. prob_at_draw must
/// be positive; range_max (= 1 / (alpha n_pool)) is taken from est.stats.
/// Throws std::invalid_argument for prob_at_draw <= 0 or a weight beyond the
/// range.
void update_importance(FrequencyEstimate& est, bool label_matches, double prob_at_draw, std::size_t n_pool,
                       double delta);

/// Folds one uniform-step observation into a uniform-mode estimate.
void update_uniform(FrequencyEstimate& est, bool label_matches, double delta);

/// Single entry point mirroring the two modes: importance mode uses
/// prob_at_draw; uniform mode ignores it and requires uniform_step.
FrequencyEstimate update_frequency_estimate(FrequencyEstimate est, const std::string& drawn_label,
                                            double prob_at_draw, bool uniform_step, std::size_t n_pool,
                                            double delta);

/// 1 / sum(w_i^2), w = counts / sum(counts). Throws on all-zero counts.
double ess_score(std::span<const std::size_t> counts);

struct LengthScaleResult {
  double lambda = 1.0;
  std::vector<double> grid;
  std::vector<double> mean_ess;  // one per grid entry
};

/// For each candidate lambda, simulates `runs` batches of `batch_size`
/// with-replacement draws from boltzmann_distribution(distances, lambda, 0)
/// and averages their ESS. Returns the minimizer (ties go to the smaller
/// lambda). Throws std::invalid_argument on an empty grid.
LengthScaleResult optimize_length_scale(std::span<const double> distances, std::size_t batch_size, std::size_t runs,
                                        std::span<const double> lambda_grid, Rng& rng);

/// Default candidate grid: `count` log-spaced values from the smallest
/// lambda whose Boltzmann distribution has effective support
/// 1/sum(q^2) >= min_support, up to the 99th percentile of d - min(d).
std::vector<double> default_length_scale_grid(std::span<const double> distances, std::size_t min_support,
                                              std::size_t count = 16);

struct Selection {
  std::size_t index = 0;
  bool uniform_step = false;
};

/// Epsilon-greedy: with probability epsilon a uniform index over all
/// candidates, otherwise the argmax of `scores` (lowest index on ties).
/// Entries equal to -inf are never chosen by the greedy step.
Selection epsilon_greedy_select(std::span<const double> scores, double epsilon, Rng& rng);

/// Same coin flip, but the greedy argmax is computed only when needed.
Selection epsilon_greedy_select(std::size_t n, double epsilon, Rng& rng, const std::function<std::size_t()>& argmax);

/// Index of the largest entry, lowest index on ties, skipping -inf entries.
/// Returns scores.size() when every entry is -inf.
std::size_t argmax_lowest(std::span<const double> scores);

}  // namespace egal
