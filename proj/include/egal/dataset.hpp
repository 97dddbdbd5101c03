#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "egal/kernels.hpp"

namespace egal {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One unlabeled pool item as read from or written to disk.
struct ExampleRecord {
  std::string id;
  std::vector<double> vec;
  std::optional<std::string> label;  // hidden ground truth, simulation only
  std::optional<std::string> text;

  friend bool operator==(const ExampleRecord&, const ExampleRecord&) = default;
};

struct Exemplar {
  std::string class_id;
  std::vector<double> vec;
  std::optional<std::string> text;

  friend bool operator==(const Exemplar&, const Exemplar&) = default;
};

/// Immutable, validated pool plus one exemplar per known class.
///
/// Pool embeddings are packed into a row-major n x d matrix. Hidden labels may
/// name classes outside class_ids(); those model classes missing from the
/// knowledge base.
class Dataset {
 public:
  Dataset() = default;

  /// Validates and packs. Throws DatasetError on a dimension mismatch,
  /// non-finite coordinate, duplicate id, duplicate exemplar class, or an
  /// exemplar whose class is not in class_ids. When class_ids is empty it is
  /// taken from the exemplars in order.
  Dataset(std::size_t dim, std::vector<ExampleRecord> examples, std::vector<Exemplar> exemplars,
          std::vector<std::string> class_ids = {});

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  std::span<const double> vec(std::size_t i) const { return {matrix_.data() + i * dim_, dim_}; }
  kernels::MatrixView matrix() const noexcept { return {matrix_.data(), size(), dim_}; }

  const std::string& id(std::size_t i) const { return ids_[i]; }
  const std::optional<std::string>& label(std::size_t i) const { return labels_[i]; }
  const std::optional<std::string>& text(std::size_t i) const { return texts_[i]; }

  /// Index of the example with this id, if any.
  std::optional<std::size_t> find(const std::string& id) const;

  /// True when every example carries a hidden label.
  bool fully_labeled() const noexcept;

  const std::vector<Exemplar>& exemplars() const noexcept { return exemplars_; }
  const Exemplar* exemplar_for(const std::string& class_id) const;
  const std::vector<std::string>& class_ids() const noexcept { return class_ids_; }

  /// Rebuilds the on-disk record for example i.
  ExampleRecord record(std::size_t i) const;

  /// Hidden-label frequencies over the pool, sorted by class id. Examples
  /// without a label are skipped.
  std::vector<std::pair<std::string, std::size_t>> label_counts() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> matrix_;
  std::vector<std::string> ids_;
  std::vector<std::optional<std::string>> labels_;
  std::vector<std::optional<std::string>> texts_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Exemplar> exemplars_;
  std::vector<std::string> class_ids_;
};

// ---------------------------------------------------------------------------
// File formats

/// Pool JSONL: {"id": str, "vec": [float...], "label": str|null, "text": str|null}
/// Exemplar JSONL: {"class": str, "vec": [float...], "text": str|null}
/// Blank and "#" comment lines are skipped. Errors name the file and 1-based line number.
Dataset load_dataset(const std::filesystem::path& pool_path, const std::filesystem::path& exemplar_path);

std::vector<ExampleRecord> read_pool_jsonl(const std::filesystem::path& path);
std::vector<Exemplar> read_exemplars_jsonl(const std::filesystem::path& path);
/// A nonempty header is written as a leading "# ..." comment line.
void write_pool_jsonl(const std::filesystem::path& path, std::span<const ExampleRecord> records,
                      std::string_view header = {});
void write_exemplars_jsonl(const std::filesystem::path& path, std::span<const Exemplar> exemplars,
                           std::string_view header = {});
void write_dataset(const Dataset& ds, const std::filesystem::path& pool_path,
                   const std::filesystem::path& exemplar_path);

/// Packed pool: "EGALV1", u32 n, u32 d, then per record u32-length-prefixed
/// UTF-8 id, d little-endian f32, length-prefixed label (0 = absent),
/// length-prefixed text (0 = absent). Coordinates round to float.
std::vector<ExampleRecord> read_pool_binary(const std::filesystem::path& path);
void write_pool_binary(const std::filesystem::path& path, std::span<const ExampleRecord> records);

/// Pool reader that picks the format from the file's magic bytes.
std::vector<ExampleRecord> read_pool(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthSpec {
  std::size_t dim = 2;
  std::vector<std::size_t> counts;  // examples per class, one entry per class
  double separation = 1.0;
  std::uint64_t seed = 0;
};

/// Isotropic unit-variance Gaussian clusters. Center k is
/// separation/sqrt(2) * e_k, so every pair of centers is exactly `separation`
/// apart; this needs counts.size() <= dim. Class ids are "class_0", ...
/// Each class gets one exemplar drawn from its own Gaussian and kept out of
/// the pool. Deterministic in seed.
Dataset synth_dataset(const SynthSpec& spec);

/// Center of class k under synth_dataset's placement.
std::vector<double> synth_center(std::size_t k, std::size_t dim, double separation);

struct SkewSplit {
  Dataset train;
  std::vector<ExampleRecord> test;
};

/// Holds out min(test_per_class, smallest class population) examples of every
/// labeled class as a balanced test set, then keeps exactly rare_count of the
/// remaining rare-class examples in the training pool. Exemplars carry over.
/// Throws DatasetError when rare_count exceeds the rare examples left after
/// the holdout, or when any example lacks a hidden label.
SkewSplit subsample_skew(const Dataset& ds, const std::string& rare_class, std::size_t rare_count,
                         std::uint64_t seed, std::size_t test_per_class = 50);

}  // namespace egal
