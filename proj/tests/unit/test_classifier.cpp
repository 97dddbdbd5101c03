#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "egal/classifier.hpp"

using namespace egal;

namespace {

struct Toy {
  std::vector<std::vector<double>> vecs;
  std::vector<std::string> labels;

  std::vector<LabeledExample> view() const {
    std::vector<LabeledExample> out;
    for (std::size_t i = 0; i < vecs.size(); ++i) out.push_back({vecs[i], labels[i]});
    return out;
  }
};

Toy random_toy(std::mt19937_64& gen, std::size_t n, std::size_t d, std::size_t k) {
  std::normal_distribution<double> g(0.0, 1.5);
  Toy t;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(d);
    for (auto& x : v) x = g(gen);
    t.vecs.push_back(v);
    t.labels.push_back("c" + std::to_string(i % k));
  }
  return t;
}

// Objective written out directly: mean cross-entropy plus the bias-free penalty.
double objective_oracle(const Toy& t, const std::vector<std::string>& classes, const std::vector<double>& w,
                        double c) {
  const std::size_t d = t.vecs[0].size(), k = classes.size(), n = t.vecs.size();
  long double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<long double> z(k);
    long double top = -1e300L;
    for (std::size_t a = 0; a < k; ++a) {
      z[a] = w[a * (d + 1) + d];
      for (std::size_t j = 0; j < d; ++j) z[a] += w[a * (d + 1) + j] * t.vecs[i][j];
      top = std::max(top, z[a]);
    }
    long double s = 0;
    for (auto v : z) s += std::exp(v - top);
    const auto y = static_cast<std::size_t>(std::find(classes.begin(), classes.end(), t.labels[i]) - classes.begin());
    loss += std::log(s) + top - z[y];
  }
  long double pen = 0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t j = 0; j < d; ++j) pen += static_cast<long double>(w[a * (d + 1) + j]) * w[a * (d + 1) + j];
  return static_cast<double>(loss / n + pen / (2.0L * c * n));
}

}  // namespace

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 gen(4);
  std::uniform_int_distribution<std::size_t> uk(2, 4), ud(1, 6), un(4, 20);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t k = uk(gen), d = ud(gen), n = std::max(un(gen), k);
    const auto toy = random_toy(gen, n, d, k);
    std::vector<std::string> classes;
    for (std::size_t a = 0; a < k; ++a) classes.push_back("c" + std::to_string(a));
    const auto data = toy.view();
    LogisticObjective obj(data, classes, 0.7);
    REQUIRE(obj.num_params() == k * (d + 1));

    std::normal_distribution<double> g(0.0, 0.5);
    std::vector<double> w(obj.num_params()), grad(obj.num_params());
    for (auto& x : w) x = g(gen);
    const double f = obj.value_and_gradient(w, grad);
    CHECK(f == doctest::Approx(objective_oracle(toy, classes, w, 0.7)).epsilon(1e-12));

    const double h = 1e-5;
    for (std::size_t p = 0; p < w.size(); ++p) {
      auto wp = w, wm = w;
      wp[p] += h;
      wm[p] -= h;
      const double fd = (objective_oracle(toy, classes, wp, 0.7) - objective_oracle(toy, classes, wm, 0.7)) / (2 * h);
      CHECK(std::abs(fd - grad[p]) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("training separates separable data and decreases the objective") {
  Toy t;
  for (int i = 0; i < 10; ++i) {
    t.vecs.push_back({-1.0 - 0.2 * i});
    t.labels.push_back("neg");
    t.vecs.push_back({1.0 + 0.2 * i});
    t.labels.push_back("pos");
  }
  const auto data = t.view();
  TrainTrace trace;
  const auto model = train(data, {}, &trace);
  CHECK(model.class_ids == std::vector<std::string>{"neg", "pos"});
  for (std::size_t i = 0; i < t.vecs.size(); ++i) CHECK(model.class_ids[predict(model, t.vecs[i])] == t.labels[i]);
  REQUIRE(trace.objective.size() >= 2);
  for (std::size_t i = 1; i < trace.objective.size(); ++i) CHECK(trace.objective[i] <= trace.objective[i - 1]);

  // Scaling the inputs keeps the training-set argmax.
  Toy scaled = t;
  for (auto& v : scaled.vecs) v[0] *= 3.0;
  const auto m2 = train(scaled.view());
  for (std::size_t i = 0; i < scaled.vecs.size(); ++i) CHECK(m2.class_ids[predict(m2, scaled.vecs[i])] == t.labels[i]);
}

TEST_CASE("monotone objective on random multi-class data") {
  std::mt19937_64 gen(9);
  const auto toy = random_toy(gen, 40, 5, 3);
  TrainTrace trace;
  train(toy.view(), {0.5, 1e-8, 200}, &trace);
  for (std::size_t i = 1; i < trace.objective.size(); ++i) CHECK(trace.objective[i] <= trace.objective[i - 1]);
  CHECK(trace.iterations <= 200);
}

TEST_CASE("degenerate and invariant training inputs") {
  Toy one;
  one.vecs = {{1.0, 2.0}, {3.0, -1.0}};
  one.labels = {"only", "only"};
  const auto m = train(one.view());
  for (const auto& v : std::vector<std::vector<double>>{{0, 0}, {100, -100}}) {
    const auto p = predict_proba(m, v);
    REQUIRE(p.size() == 1);
    CHECK(p[0] >= 1.0 - 1e-6);
  }

  std::mt19937_64 gen(12);
  const auto toy = random_toy(gen, 12, 3, 3);
  Toy twice = toy;
  twice.vecs.insert(twice.vecs.end(), toy.vecs.begin(), toy.vecs.end());
  twice.labels.insert(twice.labels.end(), toy.labels.begin(), toy.labels.end());
  // The penalty scales with 1/N, so doubling the data is matched by halving C.
  const auto a = train(toy.view(), {1.0, 1e-10, 20000}), b = train(twice.view(), {0.5, 1e-10, 20000});
  REQUIRE(a.weights.size() == b.weights.size());
  for (std::size_t i = 0; i < a.weights.size(); ++i) CHECK(a.weights[i] == doctest::Approx(b.weights[i]).epsilon(1e-6));

  CHECK(train(toy.view(), {1.0, 1e-10, 20000}) == a);  // deterministic
  CHECK_THROWS_AS(train(std::vector<LabeledExample>{}), std::invalid_argument);
}

TEST_CASE("predict_proba") {
  ClassifierModel m;
  m.class_ids = {"a", "b"};
  m.dim = 2;
  m.weights.assign(6, 0.0);
  const std::vector<double> x = {0.3, -0.7};
  CHECK(predict_proba(m, x) == ProbVector{0.5, 0.5});

  m.weights = {0, 0, std::log(3.0), 0, 0, 0};  // logit gap ln 3 via the bias
  const auto p = predict_proba(m, x);
  CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-14));

  auto shifted = m;
  for (std::size_t a = 0; a < 2; ++a) shifted.weights[a * 3 + 2] += 40.0;
  const auto ps = predict_proba(shifted, x);
  CHECK(ps[0] == doctest::Approx(p[0]).epsilon(1e-12));

  m.weights = {1e6, 0, 0, -1e6, 0, 0};
  const auto extreme = predict_proba(m, x);
  CHECK(std::isfinite(extreme[0]));
  CHECK(extreme[0] + extreme[1] == doctest::Approx(1.0));

  CHECK_THROWS_AS(predict_proba(m, std::vector<double>{1.0}), std::invalid_argument);

  const std::vector<double> rows = {0.3, -0.7, 1.0, 2.0};
  const auto batch = predict_proba_batch(m, {rows.data(), 2, 2});
  const auto r1 = predict_proba(m, std::vector<double>{1.0, 2.0});
  CHECK(batch[2] == doctest::Approx(r1[0]));
  CHECK(batch[3] == doctest::Approx(r1[1]));
}

TEST_CASE("uncertainty scores") {
  CHECK(entropy_score(std::vector<double>{0.5, 0.25, 0.25}) == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-14));
  CHECK(entropy_score(std::vector<double>{0.5, 0.25, 0.25}) == doctest::Approx(1.03972).epsilon(1e-5));
  CHECK(entropy_score(std::vector<double>{1.0, 0.0, 0.0}) == 0.0);
  CHECK(entropy_score(std::vector<double>(4, 0.25)) == doctest::Approx(std::log(4.0)));
  CHECK(least_confidence_score(std::vector<double>{0.6, 0.3, 0.1}) == -0.6);
  CHECK(least_confidence_score(std::vector<double>{0.0, 1.0}) == -1.0);
  CHECK(least_confidence_score(std::vector<double>(5, 0.2)) == doctest::Approx(-0.2));
}
