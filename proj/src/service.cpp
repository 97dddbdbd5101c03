#include "egal/service.hpp"

#include <sys/socket.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "egal/engine.hpp"
#include "egal/eval.hpp"
#include "egal/snapshot.hpp"
#include "httplib.h"

namespace egal {

using nlohmann::json;

struct Service::Entry {
  std::mutex mu;
  std::string dataset;
  std::string created_at;
  std::string config_digest;
  std::optional<Session> session;
  MetricsFn metrics;
};

namespace {

ServiceResponse error(int status, const std::string& message, const std::string& field = {}) {
  json body = {{"error", message}};
  if (!field.empty()) body["field"] = field;
  return {status, std::move(body)};
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::string fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

json event_json(const Event& e) {
  json j = {{"type", std::string(to_string(e.type))}, {"spent", e.spent}};
  if (!e.class_id.empty()) j["class_id"] = e.class_id;
  return j;
}

json events_json(const std::vector<Event>& events) {
  json out = json::array();
  for (const auto& e : events) out.push_back(event_json(e));
  return out;
}

json budget_json(const Session& s) { return {{"spent", s.spent()}, {"total", s.config().budget}}; }

json optional_text(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

// Known classes in dataset order, then classes discovered along the way.
json candidates_json(const Session& s) {
  json out = json::array();
  auto add = [&](const std::string& cls) {
    const auto* lc = s.lifecycle(cls);
    const auto* ex = s.dataset().exemplar_for(cls);
    json c = {{"class_id", cls}, {"exemplar_text", ex ? optional_text(ex->text) : json(nullptr)}};
    if (lc) {
      const auto& est = s.active_estimate(*lc);
      c["p_hat"] = est.p_hat;
      c["sigma"] = est.sigma;
      c["status"] = std::string(to_string(lc->status));
    } else {
      c["p_hat"] = 0.0;
      c["sigma"] = nullptr;
      c["status"] = "unseen";
    }
    out.push_back(std::move(c));
  };
  for (const auto& cls : s.dataset().class_ids()) add(cls);
  for (const auto& lc : s.lifecycles()) {
    if (!lc.known) add(lc.class_id);
  }
  return out;
}

}  // namespace

Service::Service(std::map<std::string, std::shared_ptr<const Dataset>> datasets,
                 std::optional<std::filesystem::path> snapshot_dir)
    : datasets_(std::move(datasets)), snapshot_dir_(std::move(snapshot_dir)) {
  if (snapshot_dir_) {
    std::filesystem::create_directories(*snapshot_dir_);
    restore();
  }
}

Service::~Service() { stop(); }

std::size_t Service::session_count() const {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

std::shared_ptr<Service::Entry> Service::find(const std::string& id) const {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void Service::persist(const std::string& id, const Entry& entry) const {
  if (!snapshot_dir_) return;
  json doc = {{"session_id", id},
              {"dataset", entry.dataset},
              {"created_at", entry.created_at},
              {"config_digest", entry.config_digest},
              {"snapshot", save_snapshot(*entry.session)}};
  write_json_atomic(*snapshot_dir_ / (id + ".json"), doc);
}

void Service::restore() {
  for (const auto& file : std::filesystem::directory_iterator(*snapshot_dir_)) {
    if (file.path().extension() != ".json") continue;
    try {
      std::ifstream in(file.path());
      const json doc = json::parse(in);
      const auto id = doc.at("session_id").get<std::string>();
      const auto ds = datasets_.find(doc.at("dataset").get<std::string>());
      if (ds == datasets_.end()) {
        spdlog::warn("snapshot {} names an unknown dataset, skipping it", file.path().string());
        continue;
      }
      auto entry = std::make_shared<Entry>();
      entry->dataset = ds->first;
      entry->created_at = doc.at("created_at").get<std::string>();
      entry->config_digest = doc.at("config_digest").get<std::string>();
      entry->session.emplace(load_snapshot(doc.at("snapshot"), ds->second));
      entry->metrics = make_metrics_fn(ds->second, {}, entry->session->config().gamma);
      sessions_.emplace(id, std::move(entry));
      spdlog::info("restored session {} from {}", id, file.path().string());
    } catch (const std::exception& e) {
      spdlog::warn("cannot restore {}: {}", file.path().string(), e.what());
    }
  }
}

ServiceResponse Service::create_session(const std::string& body) {
  json req;
  try {
    req = body.empty() ? json::object() : json::parse(body);
  } catch (const json::parse_error& e) {
    return error(400, std::string("body is not valid JSON: ") + e.what());
  }
  if (!req.is_object()) return error(400, "body must be a JSON object");

  const std::string dataset_name = req.value("dataset", std::string("default"));
  const auto ds = datasets_.find(dataset_name);
  if (ds == datasets_.end()) return error(404, "unknown dataset '" + dataset_name + "'", "dataset");

  auto entry = std::make_shared<Entry>();
  try {
    const auto config = config_from_json(req.contains("config") ? req.at("config") : json::object());
    entry->session.emplace(config, ds->second);
    entry->config_digest = fnv1a(config_to_json(config).dump());
  } catch (const ConfigError& e) {
    return error(400, e.what(), e.field());
  }
  entry->dataset = dataset_name;
  entry->created_at = utc_now();
  entry->metrics = make_metrics_fn(ds->second, {}, entry->session->config().gamma);

  static thread_local std::mt19937_64 id_gen{std::random_device{}()};
  std::string id;
  {
    std::lock_guard lock(sessions_mu_);
    do {
      id = hex64(id_gen());
    } while (sessions_.contains(id));
    sessions_.emplace(id, entry);
  }
  {
    std::lock_guard lock(entry->mu);
    persist(id, *entry);
  }
  return {201,
          {{"session_id", id},
           {"created_at", entry->created_at},
           {"config_digest", entry->config_digest},
           {"dataset", dataset_name}}};
}

ServiceResponse Service::next(const std::string& session_id) {
  auto entry = find(session_id);
  if (!entry) return error(404, "unknown session '" + session_id + "'");
  std::lock_guard lock(entry->mu);
  auto& s = *entry->session;

  std::vector<Event> auto_events;
  bool changed = false;
  while (s.phase() != Phase::kExhausted) {
    const auto& t = s.next_query();
    if (!t.free_lookup) break;
    const auto ticket_id = t.ticket_id;
    auto events = s.submit_label(ticket_id, *s.label_of(t.example_index));
    auto_events.insert(auto_events.end(), events.begin(), events.end());
    changed = true;
  }
  if (changed) persist(session_id, *entry);
  if (s.phase() == Phase::kExhausted) {
    auto r = error(409, "session is exhausted");
    r.body["events"] = events_json(auto_events);
    r.body["budget"] = budget_json(s);
    return r;
  }

  const auto& t = s.next_query();
  json body = {{"ticket_id", t.ticket_id},
               {"example_id", t.example_id},
               {"text", optional_text(s.dataset().text(t.example_index))},
               {"mode", std::string(to_string(t.mode))},
               {"target_class", optional_text(t.target_class)},
               {"candidates", candidates_json(s)},
               {"budget", budget_json(s)},
               {"auto_events", events_json(auto_events)}};
  return {200, std::move(body)};
}

ServiceResponse Service::submit(const std::string& session_id, const std::string& body) {
  auto entry = find(session_id);
  if (!entry) return error(404, "unknown session '" + session_id + "'");
  json req;
  try {
    req = json::parse(body);
  } catch (const json::parse_error& e) {
    return error(400, std::string("body is not valid JSON: ") + e.what());
  }
  if (!req.is_object()) return error(400, "body must be a JSON object");
  if (!req.contains("ticket_id") || !req["ticket_id"].is_string()) return error(400, "ticket_id must be a string", "ticket_id");
  if (!req.contains("label") || !req["label"].is_string()) return error(400, "label must be a string", "label");

  std::lock_guard lock(entry->mu);
  auto& s = *entry->session;
  try {
    const auto events = s.submit_label(req["ticket_id"].get<std::string>(), req["label"].get<std::string>());
    persist(session_id, *entry);
    return {200, {{"events", events_json(events)}, {"budget", budget_json(s)}, {"phase", std::string(to_string(s.phase()))}}};
  } catch (const SessionError& e) {
    switch (e.code()) {
      case SessionError::Code::kStaleTicket:
        return error(410, e.what(), "ticket_id");
      case SessionError::Code::kEmptyLabel:
        return error(400, e.what(), "label");
      default:
        return error(409, e.what());
    }
  }
}

ServiceResponse Service::state(const std::string& session_id) {
  auto entry = find(session_id);
  if (!entry) return error(404, "unknown session '" + session_id + "'");
  std::lock_guard lock(entry->mu);
  const auto& s = *entry->session;

  json classes = json::array();
  for (const auto& lc : s.lifecycles()) {
    const auto& est = s.active_estimate(lc);
    classes.push_back({{"class_id", lc.class_id},
                       {"status", std::string(to_string(lc.status))},
                       {"known", lc.known},
                       {"T_y", lc.observations},
                       {"p_hat", est.p_hat},
                       {"sigma", est.sigma},
                       {"lower", est.lower},
                       {"upper", est.upper},
                       {"n_draws", est.n_draws()},
                       {"estimator", est.mode == EstimateMode::kImportance ? "importance" : "uniform"},
                       {"lambda", lc.lambda ? json(*lc.lambda) : json(nullptr)}});
  }
  const auto m = entry->metrics(s);
  json metrics = {{"coverage", finite_or_null(m.coverage)},
                  {"imbalance", finite_or_null(m.imbalance)},
                  {"n_classes_found", m.n_classes_found},
                  {"n_classes_ruled_out", m.n_classes_ruled_out},
                  {"class_counts", m.class_counts}};
  return {200,
          {{"session_id", session_id},
           {"dataset", entry->dataset},
           {"strategy", std::string(to_string(s.config().strategy))},
           {"gamma", s.config().gamma},
           {"delta", s.config().delta},
           {"phase", std::string(to_string(s.phase()))},
           {"budget", budget_json(s)},
           {"classes", std::move(classes)},
           {"metrics", std::move(metrics)}}};
}

void Service::install_routes() {
  auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  http_->Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
  http_->Post("/api/v1/sessions", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, create_session(req.body));
  });
  http_->Get(R"(/api/v1/sessions/([^/]+)/next)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, next(req.matches[1]));
  });
  http_->Post(R"(/api/v1/sessions/([^/]+)/labels)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, submit(req.matches[1], req.body));
  });
  http_->Get(R"(/api/v1/sessions/([^/]+)/state)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, state(req.matches[1]));
  });
  http_->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    spdlog::error("request failed: {}", what);
    res.status = 500;
    res.set_content(json{{"error", what}}.dump(), "application/json");
  });
}

int Service::bind(const std::string& host, int port) {
  http_ = std::make_unique<httplib::Server>();
  // Plain SO_REUSEADDR: SO_REUSEPORT would let a second server share the port.
  http_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  install_routes();
  int bound = port;
  if (port == 0) {
    bound = http_->bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error("cannot bind " + host);
  } else if (!http_->bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port) + " (address in use?)");
  }
  return bound;
}

void Service::listen() {
  if (!http_) throw std::logic_error("Service::listen before bind");
  http_->listen_after_bind();
}

void Service::start() {
  if (!http_) throw std::logic_error("Service::start before bind");
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
}

void Service::stop() {
  if (http_) http_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace egal
