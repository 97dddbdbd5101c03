#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "egal/eval.hpp"

using namespace egal;

namespace {

long double kl_uniform_oracle(const std::vector<long double>& p) {
  long double r = 0;
  for (auto x : p) r += x * std::log(x * static_cast<long double>(p.size()));
  return r;
}

std::shared_ptr<const Dataset> two_class_pool(std::size_t na, std::size_t nb) {
  return std::make_shared<const Dataset>(synth_dataset({2, {na, nb}, 5.0, 4}));
}

std::vector<ExampleRecord> records_of(const Dataset& ds) {
  std::vector<ExampleRecord> out;
  for (std::size_t i = 0; i < ds.size(); ++i) out.push_back(ds.record(i));
  return out;
}

}  // namespace

TEST_CASE("balanced accuracy") {
  const std::vector<std::string> common = {"a", "b"};
  const std::vector<std::string> truth = {"a", "a", "b", "b"};
  CHECK(balanced_accuracy(truth, truth, common) == 1.0);
  CHECK(balanced_accuracy(truth, std::vector<std::string>(4, "a"), common) == 0.5);

  // 10 a's with 9 right, 10 b's with 5 right.
  std::vector<std::string> t, p;
  for (int i = 0; i < 10; ++i) {
    t.push_back("a");
    p.push_back(i < 9 ? "a" : "b");
    t.push_back("b");
    p.push_back(i < 5 ? "b" : "a");
  }
  CHECK(balanced_accuracy(t, p, common) == doctest::Approx(0.7).epsilon(1e-14));

  // A common class with no test examples is skipped; rare test labels are ignored.
  const std::vector<std::string> wide = {"a", "b", "c"};
  CHECK(balanced_accuracy(t, p, wide) == doctest::Approx(0.7).epsilon(1e-14));
  const std::vector<std::string> t2 = {"a", "z"}, p2 = {"a", "a"};
  CHECK(balanced_accuracy(t2, p2, common) == 1.0);
  CHECK_THROWS(balanced_accuracy(std::vector<std::string>{}, std::vector<std::string>{}, common));
}

TEST_CASE("imbalance score") {
  const std::vector<double> q = {0.9, 0.1};
  CHECK(imbalance_score(std::vector<double>{5, 5}, q) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(imbalance_score(std::vector<double>{9, 1}, q) == doctest::Approx(0.0).epsilon(1e-12));

  const auto expected = 1 - kl_uniform_oracle({0.7L, 0.3L}) / kl_uniform_oracle({0.9L, 0.1L});
  const double got = imbalance_score(std::vector<double>{0.7, 0.3}, q);
  CHECK(got == doctest::Approx(static_cast<double>(expected)).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.7765).epsilon(1e-4));

  // Empty cells are smoothed rather than producing log 0.
  const double skew = imbalance_score(std::vector<double>{10, 0}, q);
  CHECK(std::isfinite(skew));
  CHECK(skew < 0.0);

  CHECK_THROWS(imbalance_score(std::vector<double>{1, 2}, std::vector<double>{3, 3}));
  CHECK_THROWS(imbalance_score(std::vector<double>{1, 2, 3}, q));
}

TEST_CASE("imbalance of proportional samples tends to zero") {
  const std::vector<double> q = {0.6, 0.3, 0.1};
  std::mt19937_64 gen(2);
  std::discrete_distribution<int> pick(q.begin(), q.end());
  std::vector<double> counts(3, 0.0);
  for (int i = 0; i < 10000; ++i) counts[static_cast<std::size_t>(pick(gen))] += 1;
  CHECK(std::abs(imbalance_score(counts, q)) <= 0.05);
}

TEST_CASE("class coverage") {
  const std::vector<std::string> common = {"a", "b", "c"};
  CHECK(class_coverage({}, common) == 0.0);
  CHECK(class_coverage({{"a", 2}, {"b", 1}, {"c", 7}}, common) == 1.0);
  CHECK(class_coverage({{"a", 2}, {"c", 1}, {"rare", 4}}, common) == doctest::Approx(2.0 / 3.0));
  CHECK(class_coverage({{"a", 0}}, common) == 0.0);
  CHECK_THROWS(class_coverage({}, std::vector<std::string>{}));
}

TEST_CASE("common classes threshold on pool frequency") {
  const auto ds = two_class_pool(95, 5);
  CHECK(common_classes(*ds, 0.05) == std::vector<std::string>{"class_0", "class_1"});
  CHECK(common_classes(*ds, 0.06) == std::vector<std::string>{"class_0"});
}

TEST_CASE("guided oracle balances common classes exactly") {
  const auto ds = two_class_pool(30, 10);
  RunConfig c;
  c.budget = 10;
  c.batch_size = 10;
  c.gamma = 0.1;
  const auto run = run_strategy(Strategy::kGuidedOracle, ds, records_of(*ds), c);
  REQUIRE(run.checkpoints.size() == 1);
  const auto& m = run.checkpoints.back();
  CHECK(m.class_counts == std::map<std::string, std::size_t>{{"class_0", 5}, {"class_1", 5}});
  CHECK(m.imbalance == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.coverage == 1.0);
  CHECK(run.end == EventType::kBudgetExhausted);
  CHECK(run.full_coverage_at == std::optional<std::size_t>(2));
}

TEST_CASE("random on a one-class pool covers after the first label") {
  std::vector<ExampleRecord> ex;
  for (int i = 0; i < 20; ++i) ex.push_back({"x" + std::to_string(i), {0.1 * i, 1.0}, "only", {}});
  auto ds = std::make_shared<const Dataset>(2, ex, std::vector<Exemplar>{});
  RunConfig c;
  c.budget = 5;
  c.batch_size = 1;
  const auto run = run_strategy(Strategy::kRandom, ds, records_of(*ds), c);
  CHECK(run.full_coverage_at == std::optional<std::size_t>(1));
  CHECK(run.checkpoints.front().coverage == 1.0);
  CHECK(std::isnan(run.checkpoints.front().imbalance));  // one class: uniform by construction
}

TEST_CASE("entropy baseline picks the max-entropy point of its model") {
  std::vector<ExampleRecord> ex = {{"p0", {-3.0}, "a", {}},
                                   {"p1", {3.0}, "b", {}},
                                   {"p2", {-0.2}, "a", {}},
                                   {"p3", {1.5}, "b", {}}};
  auto ds = std::make_shared<const Dataset>(1, ex, std::vector<Exemplar>{});
  bool checked = false;
  for (std::uint64_t seed = 0; seed < 20 && !checked; ++seed) {
    RunConfig c;
    c.strategy = Strategy::kEntropy;
    c.budget = 4;
    c.batch_size = 2;
    c.seed = seed;
    // Before any model the baseline draws uniformly; feed labels until a model exists.
    Session s(c, ds);
    while (!s.model() && s.phase() != Phase::kExhausted) {
      const auto t = s.next_query();
      s.submit_label(t.ticket_id, *ds->label(t.example_index));
    }
    if (s.phase() == Phase::kExhausted || s.model()->num_classes() < 2) continue;
    const auto& m = *s.model();
    std::size_t best = ex.size();
    double best_h = -1;
    for (std::size_t i = 0; i < ex.size(); ++i) {
      if (s.label_of(i)) continue;
      const auto p = predict_proba(m, ex[i].vec);
      double h = 0;
      for (double x : p)
        if (x > 0) h -= x * std::log(x);
      if (h > best_h) {
        best_h = h;
        best = i;
      }
    }
    CHECK(s.next_query().example_index == best);
    checked = true;
  }
  CHECK(checked);
}

TEST_CASE("sweep rows, summaries, and CSV") {
  auto full = synth_dataset({4, {200, 200, 40}, 4.0, 3});
  auto split = subsample_skew(full, "class_2", 20, 3, 20);
  std::vector<SweepDataset> data = {{"toy", std::make_shared<const Dataset>(std::move(split.train)), split.test}};
  RunConfig base;
  base.budget = 30;
  base.batch_size = 10;
  base.gamma = 0.02;
  const std::vector<Strategy> strategies = {Strategy::kRandom, Strategy::kEgalHybrid};
  const std::vector<std::uint64_t> seeds = {0, 1, 2};

  const auto rows = run_sweep(strategies, data, seeds, base, 2);
  CHECK(rows.size() == 2 * 3 * 3);
  const auto again = run_sweep(strategies, data, seeds, base, 1);
  REQUIRE(again.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].strategy == again[i].strategy);
    CHECK(rows[i].seed == again[i].seed);
    CHECK(rows[i].metrics == again[i].metrics);
  }

  const auto summary = summarize(rows);
  CHECK(summary.size() == 2 * 3);
  for (const auto& srow : summary) {
    std::vector<double> ba;
    for (const auto& r : rows) {
      if (r.strategy == srow.strategy && r.dataset == srow.dataset && r.metrics.spent == srow.spent) {
        ba.push_back(r.metrics.balanced_accuracy);
      }
    }
    REQUIRE(ba.size() == 3);
    const double mean = (ba[0] + ba[1] + ba[2]) / 3;
    double ss = 0;
    for (double x : ba) ss += (x - mean) * (x - mean);
    CHECK(srow.balanced_accuracy_mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(srow.balanced_accuracy_ci == doctest::Approx(1.96 * std::sqrt(ss / 2) / std::sqrt(3.0)).epsilon(1e-9));
    CHECK_FALSE(srow.degenerate);
  }

  // Seed order does not matter.
  auto shuffled = rows;
  std::reverse(shuffled.begin(), shuffled.end());
  const auto s2 = summarize(shuffled);
  REQUIRE(s2.size() == summary.size());
  for (std::size_t i = 0; i < s2.size(); ++i) {
    CHECK(s2[i].strategy == summary[i].strategy);
    CHECK(s2[i].balanced_accuracy_mean == doctest::Approx(summary[i].balanced_accuracy_mean).epsilon(1e-14));
  }

  const std::vector<SweepRow> one(rows.begin(), rows.begin() + 1);
  const auto single = summarize(one);
  REQUIRE(single.size() == 1);
  CHECK(single[0].degenerate);
  CHECK(single[0].balanced_accuracy_ci == 0.0);

  std::ostringstream csv;
  write_rows_csv(csv, rows);
  std::istringstream in(csv.str());
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "strategy,dataset,seed,spent,balanced_accuracy,imbalance,coverage,n_classes_found,n_classes_ruled_out,wall_ms");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == rows.size());
}
