#pragma once

// HTTP/JSON front end for annotation sessions. All endpoints live under
// /api/v1 and exchange application/json:
//
//   POST /api/v1/sessions              {"dataset": name, "config": {...}} -> 201
//   GET  /api/v1/sessions/{id}/next    current ticket (idempotent), 409 when done
//   POST /api/v1/sessions/{id}/labels  {"ticket_id", "label"} -> events
//   GET  /api/v1/sessions/{id}/state   per-class estimates, budget, metrics
//   GET  /healthz
//
// Tickets for already-labeled examples cost nothing, so /next answers them
// itself with the stored label and only hands out examples that need a human.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "egal/dataset.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace egal {

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

class Service {
 public:
  /// Sessions found in snapshot_dir are restored. Snapshots naming a
  /// dataset this server does not have are skipped with a warning.
  explicit Service(std::map<std::string, std::shared_ptr<const Dataset>> datasets,
                   std::optional<std::filesystem::path> snapshot_dir = std::nullopt);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Transport-free handlers; the HTTP routes are thin wrappers around these.
  ServiceResponse create_session(const std::string& body);
  ServiceResponse next(const std::string& session_id);
  ServiceResponse submit(const std::string& session_id, const std::string& body);
  ServiceResponse state(const std::string& session_id);

  /// Binds the listening socket. Port 0 picks a free port; returns the bound
  /// port. Throws std::runtime_error when the address is unavailable.
  int bind(const std::string& host, int port);
  /// Serves on the bound socket until stop(). Blocks.
  void listen();
  /// listen() on a background thread.
  void start();
  void stop();

  std::size_t session_count() const;

 private:
  struct Entry;

  std::shared_ptr<Entry> find(const std::string& id) const;
  void persist(const std::string& id, const Entry& entry) const;
  void restore();
  void install_routes();

  std::map<std::string, std::shared_ptr<const Dataset>> datasets_;
  std::optional<std::filesystem::path> snapshot_dir_;
  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
};

}  // namespace egal
