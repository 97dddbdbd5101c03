#include "egal/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "egal/bounds.hpp"

namespace egal {

namespace {

constexpr struct {
  Strategy strategy;
  std::string_view name;
} kStrategyNames[] = {
    {Strategy::kRandom, "random"},          {Strategy::kEntropy, "entropy"},
    {Strategy::kLeastConfidence, "least_confidence"}, {Strategy::kEgalIw, "egal_iw"},
    {Strategy::kEgalEps, "egal_eps"},       {Strategy::kEgalHybrid, "egal_hybrid"},
    {Strategy::kGuidedOracle, "guided_oracle"},
};

std::vector<double> euclidean_distances(const Dataset& ds, std::span<const double> query) {
  std::vector<double> d(ds.size());
  kernels::squared_distances(query, ds.matrix(), d);
  for (auto& x : d) x = std::sqrt(x);
  return d;
}

}  // namespace

std::string_view to_string(Strategy s) noexcept {
  for (const auto& e : kStrategyNames) {
    if (e.strategy == s) return e.name;
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (const auto& e : kStrategyNames) {
    if (e.name == name) return e.strategy;
  }
  return std::nullopt;
}

std::string_view to_string(AlScore s) noexcept {
  return s == AlScore::kEntropy ? "entropy" : "least_confidence";
}

std::optional<AlScore> parse_al_score(std::string_view name) {
  if (name == "entropy") return AlScore::kEntropy;
  if (name == "least_confidence") return AlScore::kLeastConfidence;
  return std::nullopt;
}

bool is_egal(Strategy s) noexcept {
  return s == Strategy::kEgalIw || s == Strategy::kEgalEps || s == Strategy::kEgalHybrid;
}

std::string_view to_string(ClassStatus s) noexcept {
  switch (s) {
    case ClassStatus::kSearching:
      return "searching";
    case ClassStatus::kFound:
      return "found";
    case ClassStatus::kRuledOut:
      return "ruled_out";
    case ClassStatus::kUnknownDiscovered:
      return "unknown_discovered";
  }
  return "unknown";
}

std::string_view to_string(Phase p) noexcept {
  switch (p) {
    case Phase::kSearch:
      return "search";
    case Phase::kActiveLearning:
      return "active_learning";
    case Phase::kExhausted:
      return "exhausted";
  }
  return "unknown";
}

std::string_view to_string(QueryMode m) noexcept {
  switch (m) {
    case QueryMode::kExemplarSearch:
      return "exemplar_search";
    case QueryMode::kUncertainty:
      return "uncertainty";
    case QueryMode::kUniform:
      return "uniform";
    case QueryMode::kOracle:
      return "oracle";
  }
  return "unknown";
}

std::string_view to_string(EventType e) noexcept {
  switch (e) {
    case EventType::kClassFound:
      return "class_found";
    case EventType::kClassRuledOut:
      return "class_ruled_out";
    case EventType::kUnknownClassDiscovered:
      return "unknown_class_discovered";
    case EventType::kBatchComplete:
      return "batch_complete";
    case EventType::kBudgetExhausted:
      return "budget_exhausted";
    case EventType::kAllClassesRuledOut:
      return "all_classes_ruled_out";
    case EventType::kPoolExhausted:
      return "pool_exhausted";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma", "must lie in (0, 1)");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta", "must lie in (0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (budget > 0 && batch_size > budget) throw ConfigError("batch_size", "must not exceed the budget");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon", "must lie in [0, 1]");
  if (alpha_floor && !(*alpha_floor >= 0.0 && *alpha_floor < 1.0)) throw ConfigError("alpha_floor", "must lie in [0, 1)");
  if (!(al_lambda > 0.0) || !std::isfinite(al_lambda)) throw ConfigError("al_lambda", "must be positive");
  if (!(reg_strength > 0.0)) throw ConfigError("reg_strength", "must be positive");
  if (!(train_tol > 0.0)) throw ConfigError("train_tol", "must be positive");
  if (train_max_iter == 0) throw ConfigError("train_max_iter", "must be positive");
  if (lambda_runs == 0) throw ConfigError("lambda_runs", "must be positive");
  if (lambda_grid_size == 0) throw ConfigError("lambda_grid_size", "must be positive");
}

void RunConfig::validate_for(std::size_t pool_size) const {
  validate();
  const double alpha = resolved_alpha(pool_size);
  if (alpha * static_cast<double>(pool_size) > 1.0) throw ConfigError("alpha_floor", "alpha * n must not exceed 1");
  if (alpha <= 0.0 && (strategy == Strategy::kEgalIw || strategy == Strategy::kEgalHybrid)) {
    throw ConfigError("alpha_floor", "must be positive for importance-weighted search");
  }
}

double RunConfig::resolved_alpha(std::size_t pool_size) const {
  if (alpha_floor) return *alpha_floor;
  return pool_size == 0 ? 0.0 : 0.1 / static_cast<double>(pool_size);
}

// ---------------------------------------------------------------------------
// Session

Session::Session(RunConfig config, std::shared_ptr<const Dataset> dataset)
    : config_(std::move(config)), dataset_(std::move(dataset)) {
  if (!dataset_ || dataset_->empty()) throw ConfigError("dataset", "pool is empty");
  const std::size_t n = dataset_->size();
  config_.validate_for(n);
  if (config_.strategy == Strategy::kGuidedOracle && !dataset_->fully_labeled()) {
    throw ConfigError("strategy", "guided_oracle needs a hidden label on every pool example");
  }
  if (is_egal(config_.strategy)) {
    for (const auto& cls : dataset_->class_ids()) {
      if (!dataset_->exemplar_for(cls)) throw ConfigError("dataset", "class '" + cls + "' has no exemplar");
    }
  }

  alpha_ = config_.resolved_alpha(n);
  required_uniform_run_ = bounds::uniform_stopping_count(config_.gamma, config_.delta);
  labels_.assign(n, std::nullopt);
  ledger_ = DrawLedger(n);
  rng_ = Rng(derive_seed(config_.seed, Stream::kSession));

  init_common_classes();
  if (is_egal(config_.strategy)) init_search();
  rebuild_caches();

  if (config_.budget == 0) {
    phase_ = Phase::kExhausted;
  } else {
    phase_ = searching_at_batch_start_ > 0 ? Phase::kSearch : Phase::kActiveLearning;
  }
}

void Session::init_common_classes() {
  common_classes_.clear();
  if (config_.strategy != Strategy::kGuidedOracle) return;
  const auto n = static_cast<double>(dataset_->size());
  for (const auto& [cls, count] : dataset_->label_counts()) {
    if (static_cast<double>(count) / n >= config_.gamma) common_classes_.push_back(cls);
  }
}

void Session::init_search() {
  Rng lambda_rng(derive_seed(config_.seed, Stream::kLengthScale));
  for (const auto& cls : dataset_->class_ids()) {
    auto& lc = add_lifecycle(cls, ClassStatus::kSearching);
    const auto distances = euclidean_distances(*dataset_, dataset_->exemplar_for(cls)->vec);
    const auto grid = default_length_scale_grid(distances, config_.batch_size, config_.lambda_grid_size);
    auto result = optimize_length_scale(distances, config_.batch_size, config_.lambda_runs, grid, lambda_rng);
    lc.lambda = result.lambda;
    lc.lambda_grid = std::move(result.grid);
    lc.lambda_mean_ess = std::move(result.mean_ess);
  }
  searching_at_batch_start_ = lifecycles_.size();
}

void Session::rebuild_caches() {
  search_dists_.clear();
  nearest_order_.clear();
  for (const auto& lc : lifecycles_) {
    if (!lc.lambda) continue;
    const auto distances = euclidean_distances(*dataset_, dataset_->exemplar_for(lc.class_id)->vec);
    if (config_.strategy == Strategy::kEgalEps) {
      std::vector<std::size_t> order(distances.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });
      nearest_order_.emplace(lc.class_id, std::move(order));
    } else {
      search_dists_.emplace(lc.class_id, boltzmann_distribution(distances, *lc.lambda, alpha_));
    }
  }
  refresh_scores();
}

void Session::refresh_scores() {
  scores_.clear();
  if (!model_) return;
  const auto probs = predict_proba_batch(*model_, dataset_->matrix());
  const std::size_t k = model_->num_classes();
  const bool entropy = config_.strategy == Strategy::kEntropy ||
                       (config_.strategy != Strategy::kLeastConfidence && config_.al_score == AlScore::kEntropy);
  scores_.resize(dataset_->size());
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    std::span<const double> p{probs.data() + i * k, k};
    scores_[i] = entropy ? entropy_score(p) : least_confidence_score(p);
  }
}

const ClassLifecycle* Session::lifecycle(const std::string& class_id) const {
  for (const auto& lc : lifecycles_) {
    if (lc.class_id == class_id) return &lc;
  }
  return nullptr;
}

ClassLifecycle* Session::find_lifecycle(const std::string& id) {
  return const_cast<ClassLifecycle*>(std::as_const(*this).lifecycle(id));
}

ClassLifecycle& Session::add_lifecycle(const std::string& id, ClassStatus status) {
  ClassLifecycle lc;
  lc.class_id = id;
  lc.status = status;
  lc.known = std::find(dataset_->class_ids().begin(), dataset_->class_ids().end(), id) != dataset_->class_ids().end();
  const double range = alpha_ > 0.0 ? 1.0 / (alpha_ * static_cast<double>(dataset_->size())) : 0.0;
  lc.importance = make_estimate(id, EstimateMode::kImportance, range);
  lc.uniform = make_estimate(id, EstimateMode::kUniform, 1.0);
  lifecycles_.push_back(std::move(lc));
  return lifecycles_.back();
}

const FrequencyEstimate& Session::active_estimate(const ClassLifecycle& lc) const {
  switch (config_.strategy) {
    case Strategy::kEgalIw:
      return lc.importance;
    case Strategy::kEgalHybrid:
      return phase_ == Phase::kSearch ? lc.importance : lc.uniform;
    default:
      return lc.uniform;
  }
}

bool Session::uses_stopping_rule() const noexcept { return is_egal(config_.strategy); }

std::optional<std::string> Session::label_of(std::size_t example_index) const {
  if (example_index >= labels_.size()) return std::nullopt;
  return labels_[example_index];
}

std::vector<std::string> Session::target_classes() const {
  std::set<std::string> out;
  for (const auto& [idx, label] : labeled_order_) {
    const auto* lc = lifecycle(label);
    if (!lc || lc->status != ClassStatus::kRuledOut) out.insert(label);
  }
  return {out.begin(), out.end()};
}

std::size_t Session::batch_allowance() const {
  const std::size_t k = std::max<std::size_t>(1, searching_at_batch_start_);
  return (config_.batch_size + k - 1) / k;
}

void Session::observe(ClassLifecycle& lc, std::size_t draw_index) {
  const auto& d = ledger_.draws()[draw_index];
  const bool match = labels_[d.index] == lc.class_id;
  const std::size_t n = dataset_->size();
  if (draw_importance_[draw_index] && alpha_ > 0.0) update_importance(lc.importance, match, d.prob, n, config_.delta);
  if (d.uniform_step) update_uniform(lc.uniform, match, config_.delta);
}

std::size_t Session::argmax_unlabeled() const {
  std::size_t best = labels_.size();
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!labels_[i] && (best == labels_.size() || scores_[i] > best_score)) {
      best = i;
      best_score = scores_[i];
    }
  }
  return best;
}

QueryTicket Session::draw_uniform(QueryMode mode) {
  QueryTicket t;
  t.example_index = rng_.index(dataset_->size());
  t.mode = mode;
  t.prob_at_draw = 1.0 / static_cast<double>(dataset_->size());
  t.uniform_step = true;
  t.importance_eligible = alpha_ > 0.0;
  return t;
}

QueryTicket Session::draw_search(ClassLifecycle& lc) {
  QueryTicket t;
  t.mode = QueryMode::kExemplarSearch;
  t.target_class = lc.class_id;
  ++lc.search_draws;
  if (config_.strategy == Strategy::kEgalEps) {
    const auto& order = nearest_order_.at(lc.class_id);
    const auto sel = epsilon_greedy_select(dataset_->size(), config_.epsilon, rng_, [&] {
      for (auto i : order) {
        if (!labels_[i]) return i;
      }
      return order.front();
    });
    t.example_index = sel.index;
    t.uniform_step = sel.uniform_step;
    t.prob_at_draw = sel.uniform_step ? 1.0 / static_cast<double>(dataset_->size()) : 1.0;
    t.importance_eligible = sel.uniform_step && alpha_ > 0.0;
  } else {
    const auto& dist = search_dists_.at(lc.class_id);
    t.example_index = dist.quantile(rng_.uniform());
    t.prob_at_draw = dist.prob(t.example_index);
    t.importance_eligible = true;
  }
  return t;
}

QueryTicket Session::draw_guided_oracle() {
  std::map<std::string, std::size_t> counts;
  for (const auto& cls : common_classes_) counts[cls] = 0;
  for (const auto& [idx, label] : labeled_order_) {
    if (auto it = counts.find(label); it != counts.end()) ++it->second;
  }
  std::vector<std::vector<std::size_t>> unlabeled_by_class(common_classes_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i]) continue;
    auto it = std::lower_bound(common_classes_.begin(), common_classes_.end(), *dataset_->label(i));
    if (it != common_classes_.end() && *it == *dataset_->label(i)) {
      unlabeled_by_class[static_cast<std::size_t>(it - common_classes_.begin())].push_back(i);
    }
  }
  std::size_t best = common_classes_.size();
  for (std::size_t c = 0; c < common_classes_.size(); ++c) {
    if (unlabeled_by_class[c].empty()) continue;
    if (best == common_classes_.size() || counts[common_classes_[c]] < counts[common_classes_[best]]) best = c;
  }
  if (best == common_classes_.size()) return draw_uniform(QueryMode::kUniform);
  QueryTicket t;
  const auto& pool = unlabeled_by_class[best];
  t.example_index = pool[rng_.index(pool.size())];
  t.mode = QueryMode::kOracle;
  t.prob_at_draw = 1.0;
  return t;
}

QueryTicket Session::draw_active_learning() {
  if (config_.strategy == Strategy::kGuidedOracle) return draw_guided_oracle();
  if (config_.strategy == Strategy::kRandom) return draw_uniform(QueryMode::kUniform);
  if (is_egal(config_.strategy) && config_.unknown_class_guarantee && uniform_clean_run_ < required_uniform_run_) {
    return draw_uniform(QueryMode::kUniform);
  }
  if (scores_.empty()) return draw_uniform(QueryMode::kUniform);

  QueryTicket t;
  t.mode = QueryMode::kUncertainty;
  if (config_.strategy == Strategy::kEntropy || config_.strategy == Strategy::kLeastConfidence) {
    t.example_index = argmax_unlabeled();
    t.prob_at_draw = 1.0;
    return t;
  }
  if (config_.strategy == Strategy::kEgalIw) {
    const auto dist = score_distribution(scores_, config_.al_lambda, alpha_);
    t.example_index = dist.quantile(rng_.uniform());
    t.prob_at_draw = dist.prob(t.example_index);
    t.importance_eligible = true;
    return t;
  }
  const auto sel = epsilon_greedy_select(dataset_->size(), config_.epsilon, rng_, [&] { return argmax_unlabeled(); });
  if (sel.uniform_step) {
    t.mode = QueryMode::kUniform;
    t.prob_at_draw = 1.0 / static_cast<double>(dataset_->size());
    t.importance_eligible = alpha_ > 0.0;
  }
  t.example_index = sel.index;
  t.uniform_step = sel.uniform_step;
  return t;
}

const QueryTicket& Session::next_query() {
  if (pending_) return *pending_;
  if (phase_ == Phase::kExhausted) throw SessionError(SessionError::Code::kExhausted, "session is exhausted");

  ClassLifecycle* target = nullptr;
  if (phase_ == Phase::kSearch) {
    const std::size_t allowance = batch_allowance();
    for (auto& lc : lifecycles_) {
      if (lc.status != ClassStatus::kSearching || lc.batch_labels >= allowance) continue;
      if (!target || lc.search_draws < target->search_draws ||
          (lc.search_draws == target->search_draws && lc.class_id < target->class_id)) {
        target = &lc;
      }
    }
  }
  QueryTicket t = target ? draw_search(*target) : draw_active_learning();
  t.ticket_id = "t" + std::to_string(ticket_counter_++);
  t.example_id = dataset_->id(t.example_index);
  t.free_lookup = labels_[t.example_index].has_value();
  pending_ = std::move(t);
  return *pending_;
}

void Session::retrain() {
  labels_since_retrain_ = 0;
  const auto targets = target_classes();
  std::vector<LabeledExample> data;
  for (const auto& [idx, label] : labeled_order_) {
    if (std::binary_search(targets.begin(), targets.end(), label)) data.push_back({dataset_->vec(idx), label});
  }
  if (data.empty()) {
    model_.reset();
  } else {
    model_ = train(data, {config_.reg_strength, config_.train_tol, config_.train_max_iter});
  }
  refresh_scores();
}

void Session::finish(std::vector<Event>& events, EventType why) {
  if (labels_since_retrain_ > 0) {
    retrain();
    events.push_back({EventType::kBatchComplete, {}, spent_});
  }
  events.push_back({why, {}, spent_});
  phase_ = Phase::kExhausted;
}

std::vector<Event> Session::submit_label(const std::string& ticket_id, const std::string& label) {
  if (phase_ == Phase::kExhausted) throw SessionError(SessionError::Code::kExhausted, "session is exhausted");
  if (!pending_ || pending_->ticket_id != ticket_id) {
    throw SessionError(SessionError::Code::kStaleTicket, "ticket '" + ticket_id + "' is not outstanding");
  }
  if (label.empty()) throw SessionError(SessionError::Code::kEmptyLabel, "label must be nonempty");

  const QueryTicket t = *pending_;
  const std::size_t idx = t.example_index;
  if (labels_[idx] && *labels_[idx] != label) {
    throw SessionError(SessionError::Code::kLabelConflict,
                       "example '" + t.example_id + "' is already labeled '" + *labels_[idx] + "'");
  }
  pending_.reset();

  std::vector<Event> events;
  const bool paid = !labels_[idx].has_value();
  if (paid) {
    labels_[idx] = label;
    labeled_order_.emplace_back(idx, label);
    ++spent_;
    ++labels_since_retrain_;
  }
  ledger_.record({idx, t.prob_at_draw, t.uniform_step});
  draw_importance_.push_back(t.importance_eligible ? 1 : 0);
  const std::size_t draw_index = ledger_.draws().size() - 1;

  bool discovered_unknown = false;
  ClassLifecycle* lc = find_lifecycle(label);
  if (!lc) {
    const bool known =
        std::find(dataset_->class_ids().begin(), dataset_->class_ids().end(), label) != dataset_->class_ids().end();
    lc = &add_lifecycle(label, known ? ClassStatus::kFound : ClassStatus::kUnknownDiscovered);
    for (std::size_t k = 0; k < draw_index; ++k) observe(*lc, k);
    events.push_back({known ? EventType::kClassFound : EventType::kUnknownClassDiscovered, label, spent_});
    discovered_unknown = !known;
  } else if (lc->status == ClassStatus::kSearching) {
    lc->status = ClassStatus::kFound;
    events.push_back({EventType::kClassFound, label, spent_});
  }
  ++lc->observations;

  for (auto& other : lifecycles_) observe(other, draw_index);

  if (discovered_unknown) {
    uniform_clean_run_ = 0;
  } else if (t.uniform_step) {
    ++uniform_clean_run_;
  }

  if (paid && t.mode == QueryMode::kExemplarSearch && t.target_class) {
    if (auto* searched = find_lifecycle(*t.target_class)) ++searched->batch_labels;
  }

  if (uses_stopping_rule()) {
    for (auto& c : lifecycles_) {
      if (c.status != ClassStatus::kSearching && c.status != ClassStatus::kUnknownDiscovered) continue;
      const auto& est = active_estimate(c);
      if (est.n_draws() > 0 && est.upper < config_.gamma) {
        c.status = ClassStatus::kRuledOut;
        events.push_back({EventType::kClassRuledOut, c.class_id, spent_});
      }
    }
  }

  const bool searching = std::any_of(lifecycles_.begin(), lifecycles_.end(),
                                     [](const auto& c) { return c.status == ClassStatus::kSearching; });
  phase_ = searching ? Phase::kSearch : Phase::kActiveLearning;

  if (paid && spent_ % config_.batch_size == 0) {
    retrain();
    events.push_back({EventType::kBatchComplete, {}, spent_});
    for (auto& c : lifecycles_) c.batch_labels = 0;
    searching_at_batch_start_ = static_cast<std::size_t>(std::count_if(
        lifecycles_.begin(), lifecycles_.end(), [](const auto& c) { return c.status == ClassStatus::kSearching; }));
  }

  const bool all_ruled_out =
      uses_stopping_rule() && !lifecycles_.empty() &&
      std::all_of(lifecycles_.begin(), lifecycles_.end(), [](const auto& c) { return c.status == ClassStatus::kRuledOut; });
  if (spent_ >= config_.budget) {
    finish(events, EventType::kBudgetExhausted);
  } else if (all_ruled_out) {
    finish(events, EventType::kAllClassesRuledOut);
  } else if (labeled_order_.size() == dataset_->size()) {
    finish(events, EventType::kPoolExhausted);
  }
  return events;
}

// ---------------------------------------------------------------------------
// Driver

Oracle hidden_label_oracle(std::shared_ptr<const Dataset> dataset) {
  return [dataset](const std::string& example_id) -> std::optional<std::string> {
    auto idx = dataset->find(example_id);
    if (!idx) return std::nullopt;
    return dataset->label(*idx);
  };
}

std::vector<TrajectoryStep> run_to_budget(Session& session, const Oracle& oracle, const MetricsFn& metrics,
                                          std::size_t max_draws) {
  std::vector<TrajectoryStep> trajectory;
  std::size_t draws = 0;
  while (session.phase() != Phase::kExhausted && (max_draws == 0 || draws < max_draws)) {
    const QueryTicket ticket = session.next_query();
    std::optional<std::string> label =
        ticket.free_lookup ? session.label_of(ticket.example_index) : oracle(ticket.example_id);
    if (!label || label->empty()) {
      throw SessionError(SessionError::Code::kMissingLabel, "oracle has no label for '" + ticket.example_id + "'");
    }
    TrajectoryStep step;
    step.example_id = ticket.example_id;
    step.label = *label;
    step.mode = ticket.mode;
    step.events = session.submit_label(ticket.ticket_id, *label);
    step.spent = session.spent();
    ++draws;
    const bool retrained = std::any_of(step.events.begin(), step.events.end(),
                                       [](const Event& e) { return e.type == EventType::kBatchComplete; });
    if (retrained && metrics) step.metrics = metrics(session);
    trajectory.push_back(std::move(step));
  }
  return trajectory;
}

}  // namespace egal
