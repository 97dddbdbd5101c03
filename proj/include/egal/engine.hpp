#pragma once

// Exemplar-guided active learning as a pull-style state machine.
//
// A Session alternates next_query() / submit_label(). While some known class
// has not been observed and its frequency upper bound is still >= gamma, the
// session searches around that class's exemplar; the rest of each batch, and
// everything after search ends, goes to uncertainty sampling. The same loop
// drives the baselines (random, entropy, least confidence, guided oracle) so
// that every strategy shares one budget and retraining cadence.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "egal/classifier.hpp"
#include "egal/dataset.hpp"
#include "egal/rng.hpp"
#include "egal/sampling.hpp"

namespace egal {

enum class Strategy {
  kRandom,
  kEntropy,
  kLeastConfidence,
  kEgalIw,      // importance-weighted search + Boltzmann uncertainty sampling
  kEgalEps,     // epsilon-greedy search + epsilon-greedy uncertainty sampling
  kEgalHybrid,  // importance-weighted search + epsilon-greedy uncertainty sampling
  kGuidedOracle,
};

enum class AlScore { kEntropy, kLeastConfidence };

std::string_view to_string(Strategy s) noexcept;
std::optional<Strategy> parse_strategy(std::string_view name);
std::string_view to_string(AlScore s) noexcept;
std::optional<AlScore> parse_al_score(std::string_view name);

bool is_egal(Strategy s) noexcept;

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct RunConfig {
  double gamma = 0.01;
  double delta = 0.05;
  std::size_t budget = 300;
  std::size_t batch_size = 20;
  Strategy strategy = Strategy::kEgalHybrid;
  double epsilon = 0.1;
  /// Propensity floor as an absolute probability. Unset means 0.1 / n.
  std::optional<double> alpha_floor;
  AlScore al_score = AlScore::kEntropy;
  double al_lambda = 0.1;
  bool unknown_class_guarantee = false;
  std::uint64_t seed = 0;
  double reg_strength = 1.0;
  double train_tol = 1e-6;
  std::size_t train_max_iter = 1000;
  std::size_t lambda_runs = 32;
  std::size_t lambda_grid_size = 16;

  /// Throws ConfigError naming the first offending field.
  void validate() const;
  /// validate() plus the pool-dependent check alpha * n <= 1.
  void validate_for(std::size_t pool_size) const;
  double resolved_alpha(std::size_t pool_size) const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

enum class ClassStatus { kSearching, kFound, kRuledOut, kUnknownDiscovered };
std::string_view to_string(ClassStatus s) noexcept;

struct ClassLifecycle {
  std::string class_id;
  ClassStatus status = ClassStatus::kSearching;
  bool known = true;              // listed in the dataset's class ids
  std::size_t observations = 0;   // T_y: draws that returned this label
  FrequencyEstimate importance;   // Bernstein, fed by draws with a floored propensity
  FrequencyEstimate uniform;      // Chernoff, fed by uniform steps only
  std::optional<double> lambda;   // search temperature (known classes under EGAL)
  std::vector<double> lambda_grid;
  std::vector<double> lambda_mean_ess;
  std::size_t search_draws = 0;
  std::size_t batch_labels = 0;   // paid labels charged to this class's search this batch

  friend bool operator==(const ClassLifecycle&, const ClassLifecycle&) = default;
};

enum class Phase { kSearch, kActiveLearning, kExhausted };
std::string_view to_string(Phase p) noexcept;

enum class QueryMode { kExemplarSearch, kUncertainty, kUniform, kOracle };
std::string_view to_string(QueryMode m) noexcept;

struct QueryTicket {
  std::string ticket_id;
  std::size_t example_index = 0;
  std::string example_id;
  QueryMode mode = QueryMode::kUniform;
  std::optional<std::string> target_class;  // set for exemplar search
  double prob_at_draw = 1.0;
  bool uniform_step = false;
  bool importance_eligible = false;  // drawn from a floored distribution
  bool free_lookup = false;

  friend bool operator==(const QueryTicket&, const QueryTicket&) = default;
};

enum class EventType {
  kClassFound,
  kClassRuledOut,
  kUnknownClassDiscovered,
  kBatchComplete,
  kBudgetExhausted,
  kAllClassesRuledOut,
  kPoolExhausted,
};
std::string_view to_string(EventType e) noexcept;

struct Event {
  EventType type;
  std::string class_id;  // empty for session-level events
  std::size_t spent = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

class SessionError : public std::runtime_error {
 public:
  enum class Code { kExhausted, kStaleTicket, kEmptyLabel, kLabelConflict, kMissingLabel, kUnsupported };
  SessionError(Code code, const std::string& message) : std::runtime_error(message), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

class Session {
 public:
  /// Initializes every known class as searching (EGAL strategies) and picks
  /// its search temperature. Throws ConfigError on invalid config or a
  /// strategy the dataset cannot support.
  Session(RunConfig config, std::shared_ptr<const Dataset> dataset);

  /// Next example to label. Idempotent while a ticket is outstanding.
  /// Throws SessionError(kExhausted) once the session has ended.
  const QueryTicket& next_query();

  /// Records the label for the outstanding ticket and returns the events it
  /// triggered. Free lookups must repeat the stored label.
  std::vector<Event> submit_label(const std::string& ticket_id, const std::string& label);

  const RunConfig& config() const noexcept { return config_; }
  const Dataset& dataset() const noexcept { return *dataset_; }
  std::shared_ptr<const Dataset> dataset_ptr() const noexcept { return dataset_; }
  Phase phase() const noexcept { return phase_; }
  std::size_t spent() const noexcept { return spent_; }
  double alpha() const noexcept { return alpha_; }
  std::size_t uniform_clean_run() const noexcept { return uniform_clean_run_; }
  std::uint64_t required_uniform_run() const noexcept { return required_uniform_run_; }

  const std::vector<ClassLifecycle>& lifecycles() const noexcept { return lifecycles_; }
  const ClassLifecycle* lifecycle(const std::string& class_id) const;
  /// Estimate that gates rule-out for this class right now.
  const FrequencyEstimate& active_estimate(const ClassLifecycle& lc) const;

  const std::optional<QueryTicket>& pending() const noexcept { return pending_; }
  const DrawLedger& ledger() const noexcept { return ledger_; }
  /// Labels in the order they were bought.
  const std::vector<std::pair<std::size_t, std::string>>& labeled() const noexcept { return labeled_order_; }
  std::optional<std::string> label_of(std::size_t example_index) const;
  const std::optional<ClassifierModel>& model() const noexcept { return model_; }

  /// Classes whose examples currently count as classifier targets.
  std::vector<std::string> target_classes() const;

 private:
  friend struct SessionCodec;
  Session() = default;

  void init_common_classes();
  void init_search();
  void rebuild_caches();
  void refresh_scores();
  std::size_t batch_allowance() const;
  ClassLifecycle* find_lifecycle(const std::string& id);
  ClassLifecycle& add_lifecycle(const std::string& id, ClassStatus status);
  void observe(ClassLifecycle& lc, std::size_t draw_index);
  bool uses_stopping_rule() const noexcept;
  void retrain();
  void finish(std::vector<Event>& events, EventType why);

  QueryTicket draw_search(ClassLifecycle& lc);
  QueryTicket draw_active_learning();
  QueryTicket draw_uniform(QueryMode mode);
  QueryTicket draw_guided_oracle();
  std::size_t argmax_unlabeled() const;

  RunConfig config_;
  std::shared_ptr<const Dataset> dataset_;
  double alpha_ = 0.0;
  std::uint64_t required_uniform_run_ = 0;

  std::vector<ClassLifecycle> lifecycles_;
  std::vector<std::optional<std::string>> labels_;  // by pool index
  std::vector<std::pair<std::size_t, std::string>> labeled_order_;
  DrawLedger ledger_;
  std::vector<std::uint8_t> draw_importance_;  // parallel to ledger draws
  std::size_t spent_ = 0;
  std::size_t labels_since_retrain_ = 0;
  std::size_t searching_at_batch_start_ = 0;
  Phase phase_ = Phase::kSearch;
  std::optional<ClassifierModel> model_;
  std::size_t uniform_clean_run_ = 0;
  std::uint64_t ticket_counter_ = 0;
  std::optional<QueryTicket> pending_;
  Rng rng_;

  // Derived from dataset + state; rebuilt after a restore.
  std::map<std::string, SamplingDistribution> search_dists_;
  std::map<std::string, std::vector<std::size_t>> nearest_order_;
  std::vector<double> scores_;  // uncertainty score per pool index, empty without a model
  std::vector<std::string> common_classes_;  // hidden-label frequency >= gamma (oracle strategy only)
};

struct MetricsRecord {
  std::size_t spent = 0;
  double balanced_accuracy = 0.0;
  double imbalance = 0.0;
  double coverage = 0.0;
  std::size_t n_classes_found = 0;
  std::size_t n_classes_ruled_out = 0;
  std::map<std::string, std::size_t> class_counts;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct TrajectoryStep {
  std::size_t spent = 0;
  std::string example_id;
  std::string label;
  QueryMode mode = QueryMode::kUniform;
  std::vector<Event> events;
  std::optional<MetricsRecord> metrics;  // after every retrain

  friend bool operator==(const TrajectoryStep&, const TrajectoryStep&) = default;
};

using Oracle = std::function<std::optional<std::string>(const std::string& example_id)>;
using MetricsFn = std::function<MetricsRecord(const Session&)>;

/// Hidden-label oracle over the session's dataset.
Oracle hidden_label_oracle(std::shared_ptr<const Dataset> dataset);

/// Drives the session until it ends. Free lookups are answered from the
/// stored label. `max_draws` caps the number of draws (0 = no cap).
/// Throws SessionError(kMissingLabel) when the oracle has no label.
std::vector<TrajectoryStep> run_to_budget(Session& session, const Oracle& oracle, const MetricsFn& metrics = {},
                                          std::size_t max_draws = 0);

}  // namespace egal
