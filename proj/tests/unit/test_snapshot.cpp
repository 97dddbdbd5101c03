#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "egal/snapshot.hpp"

using namespace egal;
using nlohmann::json;

namespace {

std::shared_ptr<const Dataset> pool() {
  static const auto ds = std::make_shared<const Dataset>(synth_dataset({4, {120, 120, 25}, 4.0, 21}));
  return ds;
}

void advance(Session& s, std::size_t draws) {
  for (std::size_t i = 0; i < draws && s.phase() != Phase::kExhausted; ++i) {
    const auto t = s.next_query();
    s.submit_label(t.ticket_id, *s.dataset().label(t.example_index));
  }
}

}  // namespace

TEST_CASE("save then load continues with an identical trajectory") {
  for (auto strategy : {Strategy::kEgalIw, Strategy::kEgalEps, Strategy::kEgalHybrid, Strategy::kRandom,
                        Strategy::kEntropy, Strategy::kGuidedOracle}) {
    CAPTURE(to_string(strategy));
    RunConfig c;
    c.budget = 60;
    c.batch_size = 10;
    c.strategy = strategy;
    c.seed = 3;
    c.unknown_class_guarantee = strategy == Strategy::kEgalHybrid;
    Session original(c, pool());
    advance(original, 23);
    original.next_query();  // leave a ticket outstanding

    const auto text = save_snapshot(original).dump();
    Session restored = load_snapshot(json::parse(text), pool());
    CHECK(save_snapshot(restored).dump() == text);
    CHECK(restored.pending() == original.pending());
    CHECK(restored.lifecycles() == original.lifecycles());

    const auto oracle = hidden_label_oracle(pool());
    const auto a = run_to_budget(original, oracle);
    const auto b = run_to_budget(restored, oracle);
    CHECK(a == b);
    CHECK(original.ledger() == restored.ledger());
    CHECK(original.model() == restored.model());
  }
}

TEST_CASE("snapshot validation") {
  RunConfig c;
  c.budget = 30;
  c.batch_size = 10;
  Session s(c, pool());
  advance(s, 5);
  auto snap = save_snapshot(s);
  CHECK(snap["version"] == kSnapshotVersion);

  auto wrong_version = snap;
  wrong_version["version"] = kSnapshotVersion + 1;
  CHECK_THROWS_AS(load_snapshot(wrong_version, pool()), SnapshotError);

  auto other = std::make_shared<const Dataset>(synth_dataset({4, {10, 10, 10}, 4.0, 1}));
  CHECK_THROWS_AS(load_snapshot(snap, other), SnapshotError);
}

TEST_CASE("config JSON round trip and strict parsing") {
  RunConfig c;
  c.gamma = 0.02;
  c.strategy = Strategy::kEgalEps;
  c.alpha_floor = 0.001;
  c.al_score = AlScore::kLeastConfidence;
  c.unknown_class_guarantee = true;
  c.seed = 77;
  CHECK(config_from_json(config_to_json(c)) == c);

  auto field_of = [](const json& j) -> std::string {
    try {
      config_from_json(j);
    } catch (const ConfigError& e) {
      return e.field();
    }
    return {};
  };
  CHECK(field_of(json{{"gama", 0.1}}) == "gama");
  CHECK(field_of(json{{"gamma", "high"}}) == "gamma");
  CHECK(field_of(json{{"gamma", 1.5}}) == "gamma");
  CHECK(field_of(json{{"strategy", "magic"}}) == "strategy");
  CHECK(field_of(json::object()).empty());

  RunConfig base;
  base.budget = 77;
  CHECK(config_from_json(json{{"gamma", 0.2}}, base).budget == 77);
}

TEST_CASE("atomic JSON writes") {
  const auto dir = std::filesystem::path(EGAL_TEST_TMP) / "atomic";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto path = dir / "doc.json";
  write_json_atomic(path, json{{"a", 1}});
  write_json_atomic(path, json{{"a", 2}});
  std::ifstream in(path);
  CHECK(json::parse(in)["a"] == 2);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  CHECK(files == 1);
}
