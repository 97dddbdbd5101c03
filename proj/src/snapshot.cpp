#include "egal/snapshot.hpp"

#include <fstream>

#include "egal/bounds.hpp"

namespace egal {

using nlohmann::json;

namespace {

double get_real(const json& j, const char* field) {
  if (!j.is_number()) throw ConfigError(field, "must be a number");
  return j.get<double>();
}

std::uint64_t get_count(const json& j, const char* field) {
  if (!j.is_number_unsigned()) throw ConfigError(field, "must be a nonnegative integer");
  return j.get<std::uint64_t>();
}

json stats_to_json(const bounds::WeightedSampleStats& s) {
  return {{"n", s.n}, {"mean", s.mean}, {"m2", s.m2}, {"range_max", s.range_max}};
}

bounds::WeightedSampleStats stats_from_json(const json& j) {
  bounds::WeightedSampleStats s;
  s.n = j.at("n").get<std::size_t>();
  s.mean = j.at("mean").get<double>();
  s.m2 = j.at("m2").get<double>();
  s.range_max = j.at("range_max").get<double>();
  return s;
}

json estimate_to_json(const FrequencyEstimate& e) {
  return {{"p_hat", e.p_hat}, {"sigma", e.sigma}, {"lower", e.lower}, {"upper", e.upper},
          {"stats", stats_to_json(e.stats)}};
}

FrequencyEstimate estimate_from_json(const json& j, const std::string& class_id, EstimateMode mode) {
  FrequencyEstimate e;
  e.class_id = class_id;
  e.mode = mode;
  e.p_hat = j.at("p_hat").get<double>();
  e.sigma = j.at("sigma").get<double>();
  e.lower = j.at("lower").get<double>();
  e.upper = j.at("upper").get<double>();
  e.stats = stats_from_json(j.at("stats"));
  return e;
}

template <typename Enum, std::size_t N>
Enum enum_from_string(const std::string& s, const Enum (&values)[N]) {
  for (auto v : values) {
    if (to_string(v) == s) return v;
  }
  throw SnapshotError("unrecognized value '" + s + "'");
}

constexpr ClassStatus kStatuses[] = {ClassStatus::kSearching, ClassStatus::kFound, ClassStatus::kRuledOut,
                                     ClassStatus::kUnknownDiscovered};
constexpr Phase kPhases[] = {Phase::kSearch, Phase::kActiveLearning, Phase::kExhausted};
constexpr QueryMode kModes[] = {QueryMode::kExemplarSearch, QueryMode::kUncertainty, QueryMode::kUniform,
                                QueryMode::kOracle};

}  // namespace

json config_to_json(const RunConfig& c) {
  return {
      {"gamma", c.gamma},
      {"delta", c.delta},
      {"budget", c.budget},
      {"batch_size", c.batch_size},
      {"strategy", std::string(to_string(c.strategy))},
      {"epsilon", c.epsilon},
      {"alpha_floor", c.alpha_floor ? json(*c.alpha_floor) : json(nullptr)},
      {"al_score", std::string(to_string(c.al_score))},
      {"al_lambda", c.al_lambda},
      {"unknown_class_guarantee", c.unknown_class_guarantee},
      {"seed", c.seed},
      {"reg_strength", c.reg_strength},
      {"train_tol", c.train_tol},
      {"train_max_iter", c.train_max_iter},
      {"lambda_runs", c.lambda_runs},
      {"lambda_grid_size", c.lambda_grid_size},
  };
}

RunConfig config_from_json(const json& j, const RunConfig& base) {
  if (!j.is_object()) throw ConfigError("config", "must be a JSON object");
  RunConfig c = base;
  for (const auto& [key, v] : j.items()) {
    const char* k = key.c_str();
    if (key == "gamma") {
      c.gamma = get_real(v, k);
    } else if (key == "delta") {
      c.delta = get_real(v, k);
    } else if (key == "budget") {
      c.budget = get_count(v, k);
    } else if (key == "batch_size") {
      c.batch_size = get_count(v, k);
    } else if (key == "strategy") {
      auto s = v.is_string() ? parse_strategy(v.get<std::string>()) : std::nullopt;
      if (!s) throw ConfigError(key, "unknown strategy");
      c.strategy = *s;
    } else if (key == "epsilon") {
      c.epsilon = get_real(v, k);
    } else if (key == "alpha_floor") {
      c.alpha_floor = v.is_null() ? std::nullopt : std::optional<double>(get_real(v, k));
    } else if (key == "al_score") {
      auto s = v.is_string() ? parse_al_score(v.get<std::string>()) : std::nullopt;
      if (!s) throw ConfigError(key, "must be 'entropy' or 'least_confidence'");
      c.al_score = *s;
    } else if (key == "al_lambda") {
      c.al_lambda = get_real(v, k);
    } else if (key == "unknown_class_guarantee") {
      if (!v.is_boolean()) throw ConfigError(key, "must be a boolean");
      c.unknown_class_guarantee = v.get<bool>();
    } else if (key == "seed") {
      c.seed = get_count(v, k);
    } else if (key == "reg_strength") {
      c.reg_strength = get_real(v, k);
    } else if (key == "train_tol") {
      c.train_tol = get_real(v, k);
    } else if (key == "train_max_iter") {
      c.train_max_iter = get_count(v, k);
    } else if (key == "lambda_runs") {
      c.lambda_runs = get_count(v, k);
    } else if (key == "lambda_grid_size") {
      c.lambda_grid_size = get_count(v, k);
    } else {
      throw ConfigError(key, "unknown config field");
    }
  }
  c.validate();
  return c;
}

struct SessionCodec {
  static json save(const Session& s) {
    json lifecycles = json::array();
    for (const auto& lc : s.lifecycles_) {
      lifecycles.push_back({
          {"class_id", lc.class_id},
          {"status", std::string(to_string(lc.status))},
          {"known", lc.known},
          {"observations", lc.observations},
          {"importance", estimate_to_json(lc.importance)},
          {"uniform", estimate_to_json(lc.uniform)},
          {"lambda", lc.lambda ? json(*lc.lambda) : json(nullptr)},
          {"lambda_grid", lc.lambda_grid},
          {"lambda_mean_ess", lc.lambda_mean_ess},
          {"search_draws", lc.search_draws},
          {"batch_labels", lc.batch_labels},
      });
    }
    json labeled = json::array();
    for (const auto& [idx, label] : s.labeled_order_) labeled.push_back({s.dataset_->id(idx), label});
    json draws = json::array();
    for (std::size_t k = 0; k < s.ledger_.draws().size(); ++k) {
      const auto& d = s.ledger_.draws()[k];
      draws.push_back({d.index, d.prob, d.uniform_step, s.draw_importance_[k] != 0});
    }
    json model = nullptr;
    if (s.model_) {
      model = {{"class_ids", s.model_->class_ids},
               {"weights", s.model_->weights},
               {"dim", s.model_->dim},
               {"reg_strength", s.model_->reg_strength}};
    }
    json pending = nullptr;
    if (s.pending_) {
      const auto& t = *s.pending_;
      pending = {{"ticket_id", t.ticket_id},
                 {"example_index", t.example_index},
                 {"example_id", t.example_id},
                 {"mode", std::string(to_string(t.mode))},
                 {"target_class", t.target_class ? json(*t.target_class) : json(nullptr)},
                 {"prob_at_draw", t.prob_at_draw},
                 {"uniform_step", t.uniform_step},
                 {"importance_eligible", t.importance_eligible},
                 {"free_lookup", t.free_lookup}};
    }
    return {
        {"version", kSnapshotVersion},
        {"pool", {{"n", s.dataset_->size()}, {"dim", s.dataset_->dim()}}},
        {"config", config_to_json(s.config_)},
        {"phase", std::string(to_string(s.phase_))},
        {"spent", s.spent_},
        {"labels_since_retrain", s.labels_since_retrain_},
        {"searching_at_batch_start", s.searching_at_batch_start_},
        {"uniform_clean_run", s.uniform_clean_run_},
        {"ticket_counter", s.ticket_counter_},
        {"rng", s.rng_.save_state()},
        {"lifecycles", std::move(lifecycles)},
        {"labeled", std::move(labeled)},
        {"draws", std::move(draws)},
        {"model", std::move(model)},
        {"pending", std::move(pending)},
    };
  }

  static Session load(const json& j, std::shared_ptr<const Dataset> dataset) {
    if (j.value("version", 0) != kSnapshotVersion) throw SnapshotError("unsupported snapshot version");
    if (!dataset) throw SnapshotError("no dataset");
    const std::size_t n = dataset->size();
    if (j.at("pool").at("n").get<std::size_t>() != n || j.at("pool").at("dim").get<std::size_t>() != dataset->dim()) {
      throw SnapshotError("snapshot does not match the dataset shape");
    }

    Session s;
    s.config_ = config_from_json(j.at("config"));
    s.dataset_ = std::move(dataset);
    s.config_.validate_for(n);
    s.alpha_ = s.config_.resolved_alpha(n);
    s.required_uniform_run_ = bounds::uniform_stopping_count(s.config_.gamma, s.config_.delta);
    s.init_common_classes();

    for (const auto& lj : j.at("lifecycles")) {
      ClassLifecycle lc;
      lc.class_id = lj.at("class_id").get<std::string>();
      lc.status = enum_from_string(lj.at("status").get<std::string>(), kStatuses);
      lc.known = lj.at("known").get<bool>();
      lc.observations = lj.at("observations").get<std::size_t>();
      lc.importance = estimate_from_json(lj.at("importance"), lc.class_id, EstimateMode::kImportance);
      lc.uniform = estimate_from_json(lj.at("uniform"), lc.class_id, EstimateMode::kUniform);
      if (!lj.at("lambda").is_null()) lc.lambda = lj.at("lambda").get<double>();
      lc.lambda_grid = lj.at("lambda_grid").get<std::vector<double>>();
      lc.lambda_mean_ess = lj.at("lambda_mean_ess").get<std::vector<double>>();
      lc.search_draws = lj.at("search_draws").get<std::size_t>();
      lc.batch_labels = lj.at("batch_labels").get<std::size_t>();
      s.lifecycles_.push_back(std::move(lc));
    }

    s.labels_.assign(n, std::nullopt);
    for (const auto& entry : j.at("labeled")) {
      const auto id = entry.at(0).get<std::string>();
      const auto idx = s.dataset_->find(id);
      if (!idx) throw SnapshotError("labeled example '" + id + "' is not in the pool");
      const auto label = entry.at(1).get<std::string>();
      s.labels_[*idx] = label;
      s.labeled_order_.emplace_back(*idx, label);
    }

    s.ledger_ = DrawLedger(n);
    for (const auto& d : j.at("draws")) {
      const auto idx = d.at(0).get<std::size_t>();
      if (idx >= n) throw SnapshotError("draw index out of range");
      s.ledger_.record({idx, d.at(1).get<double>(), d.at(2).get<bool>()});
      s.draw_importance_.push_back(d.at(3).get<bool>() ? 1 : 0);
    }

    if (const auto& m = j.at("model"); !m.is_null()) {
      ClassifierModel model;
      model.class_ids = m.at("class_ids").get<std::vector<std::string>>();
      model.weights = m.at("weights").get<std::vector<double>>();
      model.dim = m.at("dim").get<std::size_t>();
      model.reg_strength = m.at("reg_strength").get<double>();
      if (model.weights.size() != model.num_classes() * model.stride()) throw SnapshotError("model weights have the wrong size");
      s.model_ = std::move(model);
    }

    if (const auto& p = j.at("pending"); !p.is_null()) {
      QueryTicket t;
      t.ticket_id = p.at("ticket_id").get<std::string>();
      t.example_index = p.at("example_index").get<std::size_t>();
      t.example_id = p.at("example_id").get<std::string>();
      if (t.example_index >= n || s.dataset_->id(t.example_index) != t.example_id) {
        throw SnapshotError("pending ticket does not match the pool");
      }
      t.mode = enum_from_string(p.at("mode").get<std::string>(), kModes);
      if (!p.at("target_class").is_null()) t.target_class = p.at("target_class").get<std::string>();
      t.prob_at_draw = p.at("prob_at_draw").get<double>();
      t.uniform_step = p.at("uniform_step").get<bool>();
      t.importance_eligible = p.at("importance_eligible").get<bool>();
      t.free_lookup = p.at("free_lookup").get<bool>();
      s.pending_ = std::move(t);
    }

    s.phase_ = enum_from_string(j.at("phase").get<std::string>(), kPhases);
    s.spent_ = j.at("spent").get<std::size_t>();
    s.labels_since_retrain_ = j.at("labels_since_retrain").get<std::size_t>();
    s.searching_at_batch_start_ = j.at("searching_at_batch_start").get<std::size_t>();
    s.uniform_clean_run_ = j.at("uniform_clean_run").get<std::size_t>();
    s.ticket_counter_ = j.at("ticket_counter").get<std::uint64_t>();
    s.rng_.restore_state(j.at("rng").get<std::string>());

    s.rebuild_caches();
    return s;
  }
};

json save_snapshot(const Session& session) { return SessionCodec::save(session); }

Session load_snapshot(const json& snapshot, std::shared_ptr<const Dataset> dataset) {
  try {
    return SessionCodec::load(snapshot, std::move(dataset));
  } catch (const json::exception& e) {
    throw SnapshotError(std::string("malformed snapshot: ") + e.what());
  }
}

void write_json_atomic(const std::filesystem::path& path, const json& doc) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << doc.dump();
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace egal
