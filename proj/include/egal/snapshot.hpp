#pragma once

// Versioned JSON snapshots of a Session.
//
// A snapshot holds the config, every lifecycle, the labeled set in purchase
// order, the full draw ledger, model weights, RNG state and the outstanding
// ticket. Search distributions and uncertainty scores are rebuilt from the
// dataset on load, so a restored session continues exactly where the saved
// one would have.

#include <filesystem>
#include <memory>
#include <string>

#include "egal/engine.hpp"
#include "json.hpp"

namespace egal {

inline constexpr int kSnapshotVersion = 1;

class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json config_to_json(const RunConfig& config);

/// Missing keys keep their defaults. Throws ConfigError naming the field for
/// unknown keys, wrong types or out-of-range values.
RunConfig config_from_json(const nlohmann::json& j, const RunConfig& base = {});

nlohmann::json save_snapshot(const Session& session);

/// Throws SnapshotError when the version is unsupported or the snapshot does
/// not match the dataset (pool size, dimension, example ids).
Session load_snapshot(const nlohmann::json& snapshot, std::shared_ptr<const Dataset> dataset);

/// Writes through a temporary file and a rename so readers never see a
/// partial document.
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace egal
