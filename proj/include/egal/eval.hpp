#pragma once

// Metrics and the simulation harness: balanced accuracy over common classes,
// the imbalance statistic, class coverage, single runs and seeded sweeps.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "egal/classifier.hpp"
#include "egal/dataset.hpp"
#include "egal/engine.hpp"

namespace egal {

/// Classes whose hidden-label pool frequency is >= gamma, sorted.
std::vector<std::string> common_classes(const Dataset& ds, double gamma);

/// Mean per-class accuracy over `common`. Common classes without test
/// examples are skipped with a warning. Throws std::invalid_argument when no
/// common class has a test example.
double balanced_accuracy(std::span<const std::string> truth, std::span<const std::string> predicted,
                         std::span<const std::string> common);

/// Same, predicting with `model`; a null model predicts nothing.
double balanced_accuracy(const ClassifierModel* model, std::span<const ExampleRecord> test,
                         std::span<const std::string> common);

/// 1 - KL(p, u) / KL(q, u) in nats, where p is `collected` normalized after
/// adding 1e-12 to empty cells and q is `pool` normalized. Throws
/// std::invalid_argument when q is uniform or the sizes differ.
double imbalance_score(std::span<const double> collected, std::span<const double> pool);

/// Fraction of `common` with at least one collected label.
double class_coverage(const std::map<std::string, std::size_t>& collected, std::span<const std::string> common);

/// Metrics of a session against a held-out test set. Imbalance is taken over
/// the common classes and is NaN when their pool frequencies are equal.
MetricsFn make_metrics_fn(std::shared_ptr<const Dataset> pool, std::vector<ExampleRecord> test, double gamma);

struct StrategyRun {
  std::vector<TrajectoryStep> trajectory;
  std::vector<MetricsRecord> checkpoints;   // one per retrain
  std::vector<double> checkpoint_wall_ms;   // elapsed time at each checkpoint
  std::optional<EventType> end;             // event that ended the session
  std::optional<std::size_t> full_coverage_at;  // spent when every common class first had a label
};

/// Runs one strategy to the end of its budget with the hidden-label oracle.
/// Throws ConfigError for guided_oracle on a pool without hidden labels.
StrategyRun run_strategy(Strategy strategy, std::shared_ptr<const Dataset> pool, const std::vector<ExampleRecord>& test,
                         RunConfig config);

struct SweepDataset {
  std::string name;
  std::shared_ptr<const Dataset> pool;
  std::vector<ExampleRecord> test;
};

struct SweepRow {
  std::string strategy;
  std::string dataset;
  std::uint64_t seed = 0;
  MetricsRecord metrics;
  double wall_ms = 0.0;
};

struct SummaryRow {
  std::string strategy;
  std::string dataset;
  std::size_t spent = 0;
  std::size_t n_seeds = 0;
  double balanced_accuracy_mean = 0.0, balanced_accuracy_ci = 0.0;
  double imbalance_mean = 0.0, imbalance_ci = 0.0;
  double coverage_mean = 0.0, coverage_ci = 0.0;
  bool degenerate = false;  // fewer than two seeds, so no spread
};

/// Every (strategy, dataset, seed) triple, run on up to `parallelism`
/// threads. Rows are sorted by (strategy, dataset, seed, spent) so the output
/// does not depend on scheduling.
std::vector<SweepRow> run_sweep(std::span<const Strategy> strategies, std::span<const SweepDataset> datasets,
                                std::span<const std::uint64_t> seeds, const RunConfig& base, std::size_t parallelism);

/// Mean and normal-approximation 95% half-width (1.96 s / sqrt(k)) per
/// (strategy, dataset, spent).
std::vector<SummaryRow> summarize(std::span<const SweepRow> rows);

void write_rows_csv(std::ostream& out, std::span<const SweepRow> rows);
void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows);

}  // namespace egal
