#include "egal/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>
#include <thread>
#include <tuple>

#include <spdlog/spdlog.h>

namespace egal {

namespace {

constexpr double kSmoothing = 1e-12;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double kl_to_uniform(std::span<const double> p) {
  const double u = 1.0 / static_cast<double>(p.size());
  double kl = 0.0;
  for (double x : p) {
    if (x > 0.0) kl += x * std::log(x / u);
  }
  return std::max(0.0, kl);
}

std::vector<double> normalized(std::span<const double> v, double fill_zero) {
  std::vector<double> out(v.begin(), v.end());
  double total = 0.0;
  for (auto& x : out) {
    if (x < 0.0 || !std::isfinite(x)) throw std::invalid_argument("counts must be finite and nonnegative");
    if (x == 0.0) x = fill_zero;
    total += x;
  }
  if (!(total > 0.0)) throw std::invalid_argument("counts sum to zero");
  for (auto& x : out) x /= total;
  return out;
}

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::pair<double, double> mean_ci(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(xs.size()))};
}

}  // namespace

std::vector<std::string> common_classes(const Dataset& ds, double gamma) {
  std::vector<std::string> out;
  const auto n = static_cast<double>(ds.size());
  for (const auto& [cls, count] : ds.label_counts()) {
    if (static_cast<double>(count) / n >= gamma) out.push_back(cls);
  }
  return out;
}

double balanced_accuracy(std::span<const std::string> truth, std::span<const std::string> predicted,
                         std::span<const std::string> common) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("truth and predictions differ in length");
  if (truth.empty()) throw std::invalid_argument("balanced_accuracy of an empty test set");
  double total = 0.0;
  std::size_t used = 0;
  for (const auto& cls : common) {
    std::size_t seen = 0, correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] != cls) continue;
      ++seen;
      if (predicted[i] == cls) ++correct;
    }
    if (seen == 0) {
      spdlog::warn("balanced accuracy: common class '{}' has no test examples, skipping it", cls);
      continue;
    }
    total += static_cast<double>(correct) / static_cast<double>(seen);
    ++used;
  }
  if (used == 0) throw std::invalid_argument("no common class has a test example");
  return total / static_cast<double>(used);
}

double balanced_accuracy(const ClassifierModel* model, std::span<const ExampleRecord> test,
                         std::span<const std::string> common) {
  std::vector<std::string> truth, predicted;
  for (const auto& rec : test) {
    if (!rec.label) continue;
    truth.push_back(*rec.label);
    predicted.push_back(model ? model->class_ids[predict(*model, rec.vec)] : std::string());
  }
  return balanced_accuracy(truth, predicted, common);
}

double imbalance_score(std::span<const double> collected, std::span<const double> pool) {
  if (collected.size() != pool.size() || pool.empty()) throw std::invalid_argument("imbalance_score: size mismatch");
  const auto q = normalized(pool, 0.0);
  const double denom = kl_to_uniform(q);
  if (!(denom > 0.0)) throw std::invalid_argument("imbalance_score is undefined for a uniform pool distribution");
  const auto p = normalized(collected, kSmoothing);
  return 1.0 - kl_to_uniform(p) / denom;
}

double class_coverage(const std::map<std::string, std::size_t>& collected, std::span<const std::string> common) {
  if (common.empty()) throw std::invalid_argument("class_coverage needs at least one common class");
  std::size_t hit = 0;
  for (const auto& cls : common) {
    auto it = collected.find(cls);
    if (it != collected.end() && it->second > 0) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(common.size());
}

MetricsFn make_metrics_fn(std::shared_ptr<const Dataset> pool, std::vector<ExampleRecord> test, double gamma) {
  auto common = common_classes(*pool, gamma);
  std::vector<double> pool_freq;
  for (const auto& [cls, count] : pool->label_counts()) {
    if (std::binary_search(common.begin(), common.end(), cls)) pool_freq.push_back(static_cast<double>(count));
  }
  return [common = std::move(common), pool_freq = std::move(pool_freq), test = std::move(test)](const Session& s) {
    MetricsRecord m;
    m.spent = s.spent();
    for (const auto& [idx, label] : s.labeled()) ++m.class_counts[label];
    for (const auto& lc : s.lifecycles()) {
      if (lc.status == ClassStatus::kFound || lc.status == ClassStatus::kUnknownDiscovered) ++m.n_classes_found;
      if (lc.status == ClassStatus::kRuledOut) ++m.n_classes_ruled_out;
    }
    m.balanced_accuracy = kNaN;
    m.imbalance = kNaN;
    m.coverage = kNaN;
    if (common.empty()) return m;

    m.coverage = class_coverage(m.class_counts, common);
    std::vector<double> collected;
    for (const auto& cls : common) {
      auto it = m.class_counts.find(cls);
      collected.push_back(it == m.class_counts.end() ? 0.0 : static_cast<double>(it->second));
    }
    try {
      m.imbalance = imbalance_score(collected, pool_freq);
    } catch (const std::invalid_argument&) {
      // uniform common-class distribution: statistic undefined
    }
    try {
      m.balanced_accuracy = balanced_accuracy(s.model() ? &*s.model() : nullptr, test, common);
    } catch (const std::invalid_argument&) {
      // no usable test examples
    }
    return m;
  };
}

StrategyRun run_strategy(Strategy strategy, std::shared_ptr<const Dataset> pool, const std::vector<ExampleRecord>& test,
                         RunConfig config) {
  config.strategy = strategy;
  const auto start = std::chrono::steady_clock::now();
  Session session(config, pool);
  if (!pool->fully_labeled()) throw ConfigError("dataset", "simulation runs need a hidden label on every pool example");

  StrategyRun run;
  auto metrics = make_metrics_fn(pool, test, config.gamma);
  auto timed = [&](const Session& s) {
    auto m = metrics(s);
    run.checkpoints.push_back(m);
    run.checkpoint_wall_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
    return m;
  };
  run.trajectory = run_to_budget(session, hidden_label_oracle(pool), timed);

  const auto common = common_classes(*pool, config.gamma);
  std::set<std::string> seen;
  for (const auto& step : run.trajectory) {
    for (const auto& e : step.events) {
      if (e.type == EventType::kBudgetExhausted || e.type == EventType::kAllClassesRuledOut ||
          e.type == EventType::kPoolExhausted) {
        run.end = e.type;
      }
    }
    if (run.full_coverage_at || common.empty()) continue;
    seen.insert(step.label);
    if (std::all_of(common.begin(), common.end(), [&](const auto& c) { return seen.contains(c); })) {
      run.full_coverage_at = step.spent;
    }
  }
  if (config.budget == 0) run.end = EventType::kBudgetExhausted;
  return run;
}

std::vector<SweepRow> run_sweep(std::span<const Strategy> strategies, std::span<const SweepDataset> datasets,
                                std::span<const std::uint64_t> seeds, const RunConfig& base, std::size_t parallelism) {
  if (seeds.empty()) throw std::invalid_argument("run_sweep needs at least one seed");
  struct Job {
    Strategy strategy;
    const SweepDataset* dataset;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto s : strategies) {
    for (const auto& d : datasets) {
      for (auto seed : seeds) jobs.push_back({s, &d, seed});
    }
  }

  std::vector<std::vector<SweepRow>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        RunConfig config = base;
        config.seed = jobs[j].seed;
        const auto run = run_strategy(jobs[j].strategy, jobs[j].dataset->pool, jobs[j].dataset->test, config);
        for (std::size_t k = 0; k < run.checkpoints.size(); ++k) {
          results[j].push_back({std::string(to_string(jobs[j].strategy)), jobs[j].dataset->name, jobs[j].seed,
                                run.checkpoints[k], run.checkpoint_wall_ms[k]});
        }
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(parallelism, 1, std::max<std::size_t>(1, jobs.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<SweepRow> rows;
  for (auto& r : results) std::move(r.begin(), r.end(), std::back_inserter(rows));
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.strategy, a.dataset, a.seed, a.metrics.spent) < std::tie(b.strategy, b.dataset, b.seed, b.metrics.spent);
  });
  return rows;
}

std::vector<SummaryRow> summarize(std::span<const SweepRow> rows) {
  std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<const SweepRow*>> groups;
  for (const auto& r : rows) groups[{r.strategy, r.dataset, r.metrics.spent}].push_back(&r);
  std::vector<SummaryRow> out;
  for (const auto& [key, members] : groups) {
    SummaryRow s;
    std::tie(s.strategy, s.dataset, s.spent) = key;
    s.n_seeds = members.size();
    s.degenerate = members.size() < 2;
    std::vector<double> ba, im, cov;
    for (const auto* r : members) {
      ba.push_back(r->metrics.balanced_accuracy);
      im.push_back(r->metrics.imbalance);
      cov.push_back(r->metrics.coverage);
    }
    std::tie(s.balanced_accuracy_mean, s.balanced_accuracy_ci) = mean_ci(ba);
    std::tie(s.imbalance_mean, s.imbalance_ci) = mean_ci(im);
    std::tie(s.coverage_mean, s.coverage_ci) = mean_ci(cov);
    out.push_back(std::move(s));
  }
  return out;
}

void write_rows_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "strategy,dataset,seed,spent,balanced_accuracy,imbalance,coverage,n_classes_found,n_classes_ruled_out,wall_ms\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << r.strategy << ',' << r.dataset << ',' << r.seed << ',' << m.spent << ',' << fmt(m.balanced_accuracy) << ','
        << fmt(m.imbalance) << ',' << fmt(m.coverage) << ',' << m.n_classes_found << ',' << m.n_classes_ruled_out << ','
        << fmt(std::round(r.wall_ms * 1000.0) / 1000.0) << '\n';
  }
}

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows) {
  out << "strategy,dataset,spent,n_seeds,balanced_accuracy_mean,balanced_accuracy_ci95,imbalance_mean,imbalance_ci95,"
         "coverage_mean,coverage_ci95,degenerate\n";
  for (const auto& s : rows) {
    out << s.strategy << ',' << s.dataset << ',' << s.spent << ',' << s.n_seeds << ',' << fmt(s.balanced_accuracy_mean)
        << ',' << fmt(s.balanced_accuracy_ci) << ',' << fmt(s.imbalance_mean) << ',' << fmt(s.imbalance_ci) << ','
        << fmt(s.coverage_mean) << ',' << fmt(s.coverage_ci) << ',' << (s.degenerate ? "true" : "false") << '\n';
  }
}

}  // namespace egal
