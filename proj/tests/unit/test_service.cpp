#include <filesystem>

#include "doctest.h"
#include "egal/service.hpp"
#include "httplib.h"

using namespace egal;
using nlohmann::json;

namespace {

std::map<std::string, std::shared_ptr<const Dataset>> datasets() {
  static const auto ds = std::make_shared<const Dataset>(synth_dataset({4, {60, 60, 15}, 4.0, 5}));
  return {{"default", ds}, {"toy", ds}};
}

const std::string kConfig = R"({"dataset":"toy","config":{"budget":12,"batch_size":4,"seed":9}})";

std::string label_for(const std::string& example_id) {
  const auto& ds = *datasets().at("toy");
  return *ds.label(*ds.find(example_id));
}

// Drives a session through the transport-free handlers until it ends.
std::vector<std::string> drive_direct(Service& svc, const std::string& id) {
  std::vector<std::string> seen;
  for (;;) {
    const auto n = svc.next(id);
    if (n.status == 409) break;
    REQUIRE(n.status == 200);
    const auto ex = n.body["example_id"].get<std::string>();
    seen.push_back(ex);
    const json body = {{"ticket_id", n.body["ticket_id"]}, {"label", label_for(ex)}};
    REQUIRE(svc.submit(id, body.dump()).status == 200);
  }
  return seen;
}

}  // namespace

TEST_CASE("session handlers and status codes") {
  Service svc(datasets());
  auto created = svc.create_session(kConfig);
  REQUIRE(created.status == 201);
  const auto id = created.body["session_id"].get<std::string>();
  CHECK(id.size() == 16);
  CHECK(created.body["dataset"] == "toy");
  CHECK(created.body.contains("config_digest"));
  CHECK(created.body.contains("created_at"));

  CHECK(svc.create_session(R"({"dataset":"nope"})").status == 404);
  auto bad = svc.create_session(R"({"config":{"gamma":2}})");
  CHECK(bad.status == 400);
  CHECK(bad.body["field"] == "gamma");
  CHECK(svc.create_session("{not json").status == 400);
  CHECK(svc.next("missing").status == 404);

  const auto first = svc.next(id);
  REQUIRE(first.status == 200);
  CHECK(svc.next(id).body["ticket_id"] == first.body["ticket_id"]);  // idempotent
  CHECK(first.body["candidates"].size() == 3);
  CHECK(first.body["mode"] == "exemplar_search");
  CHECK(first.body["budget"]["total"] == 12);

  CHECK(svc.submit(id, json{{"ticket_id", "t999"}, {"label", "x"}}.dump()).status == 410);
  auto empty = svc.submit(id, json{{"ticket_id", first.body["ticket_id"]}, {"label", ""}}.dump());
  CHECK(empty.status == 400);
  CHECK(empty.body["field"] == "label");
  CHECK(svc.submit(id, R"({"label":"x"})").status == 400);

  const auto ex = first.body["example_id"].get<std::string>();
  auto ok = svc.submit(id, json{{"ticket_id", first.body["ticket_id"]}, {"label", label_for(ex)}}.dump());
  REQUIRE(ok.status == 200);
  CHECK(ok.body["budget"]["spent"] == 1);
  CHECK(ok.body["events"].is_array());

  const auto st = svc.state(id);
  REQUIRE(st.status == 200);
  CHECK(st.body["classes"].size() == 3);
  for (const auto& c : st.body["classes"]) {
    CHECK(c["p_hat"].is_number());
    CHECK(c["upper"].get<double>() >= c["p_hat"].get<double>());
  }

  drive_direct(svc, id);
  const auto done = svc.next(id);
  CHECK(done.status == 409);
  CHECK(done.body["budget"]["spent"] == 12);
}

TEST_CASE("HTTP transport matches the direct handlers") {
  Service direct(datasets());
  const auto did = direct.create_session(kConfig).body["session_id"].get<std::string>();
  const auto expected = drive_direct(direct, did);

  Service svc(datasets());
  const int port = svc.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  svc.start();
  httplib::Client cli("127.0.0.1", port);

  auto health = cli.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);

  auto created = cli.Post("/api/v1/sessions", kConfig, "application/json");
  REQUIRE(created);
  REQUIRE(created->status == 201);
  const auto id = json::parse(created->body)["session_id"].get<std::string>();

  std::vector<std::string> seen;
  for (;;) {
    auto n = cli.Get("/api/v1/sessions/" + id + "/next");
    REQUIRE(n);
    if (n->status == 409) break;
    REQUIRE(n->status == 200);
    const auto body = json::parse(n->body);
    const auto ex = body["example_id"].get<std::string>();
    seen.push_back(ex);
    auto r = cli.Post("/api/v1/sessions/" + id + "/labels",
                      json{{"ticket_id", body["ticket_id"]}, {"label", label_for(ex)}}.dump(), "application/json");
    REQUIRE(r);
    REQUIRE(r->status == 200);
  }
  CHECK(seen == expected);

  auto state = cli.Get("/api/v1/sessions/" + id + "/state");
  REQUIRE(state);
  CHECK(state->status == 200);
  auto stale = cli.Post("/api/v1/sessions/" + id + "/labels", R"({"ticket_id":"t0","label":"x"})", "application/json");
  REQUIRE(stale);
  CHECK(stale->status == 409);  // exhausted session

  // A second server cannot take the same port.
  Service other(datasets());
  CHECK_THROWS_AS(other.bind("127.0.0.1", port), std::runtime_error);
  svc.stop();
}

TEST_CASE("sessions survive a restart through the snapshot directory") {
  const auto dir = std::filesystem::path(EGAL_TEST_TMP) / "service_snapshots";
  std::filesystem::remove_all(dir);

  Service reference(datasets());
  const auto rid = reference.create_session(kConfig).body["session_id"].get<std::string>();
  const auto expected = drive_direct(reference, rid);

  std::string id;
  std::vector<std::string> seen;
  {
    Service first(datasets(), dir);
    id = first.create_session(kConfig).body["session_id"].get<std::string>();
    for (int i = 0; i < 5; ++i) {
      const auto n = first.next(id);
      const auto ex = n.body["example_id"].get<std::string>();
      seen.push_back(ex);
      first.submit(id, json{{"ticket_id", n.body["ticket_id"]}, {"label", label_for(ex)}}.dump());
    }
    first.next(id);  // outstanding ticket is persisted too
  }
  Service second(datasets(), dir);
  CHECK(second.session_count() == 1);
  const auto rest = drive_direct(second, id);
  seen.insert(seen.end(), rest.begin(), rest.end());
  CHECK(seen == expected);

  // Snapshots for datasets the server lacks are skipped.
  std::map<std::string, std::shared_ptr<const Dataset>> none = {
      {"other", std::make_shared<const Dataset>(synth_dataset({2, {5, 5}, 1.0, 0}))}};
  Service third(none, dir);
  CHECK(third.session_count() == 0);
}
