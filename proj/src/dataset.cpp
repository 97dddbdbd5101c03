#include "egal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "egal/rng.hpp"

namespace egal {

namespace {

void check_vector(std::span<const double> v, std::size_t dim, const std::string& what) {
  if (v.size() != dim) {
    throw DatasetError("dimension mismatch for " + what + ": expected " + std::to_string(dim) + ", got " +
                       std::to_string(v.size()));
  }
  for (double x : v) {
    if (!std::isfinite(x)) throw DatasetError("non-finite coordinate in " + what);
  }
}

}  // namespace

Dataset::Dataset(std::size_t dim, std::vector<ExampleRecord> examples, std::vector<Exemplar> exemplars,
                 std::vector<std::string> class_ids)
    : dim_(dim), exemplars_(std::move(exemplars)), class_ids_(std::move(class_ids)) {
  if (dim_ == 0) throw DatasetError("dimension must be positive");

  matrix_.reserve(examples.size() * dim_);
  ids_.reserve(examples.size());
  labels_.reserve(examples.size());
  texts_.reserve(examples.size());
  index_.reserve(examples.size());
  for (auto& ex : examples) {
    check_vector(ex.vec, dim_, "example '" + ex.id + "'");
    if (!index_.emplace(ex.id, ids_.size()).second) throw DatasetError("duplicate example id '" + ex.id + "'");
    matrix_.insert(matrix_.end(), ex.vec.begin(), ex.vec.end());
    ids_.push_back(std::move(ex.id));
    labels_.push_back(std::move(ex.label));
    texts_.push_back(std::move(ex.text));
  }

  if (class_ids_.empty()) {
    for (const auto& e : exemplars_) class_ids_.push_back(e.class_id);
  }
  std::set<std::string> known(class_ids_.begin(), class_ids_.end());
  if (known.size() != class_ids_.size()) throw DatasetError("duplicate class id");

  std::set<std::string> seen;
  for (const auto& e : exemplars_) {
    if (!seen.insert(e.class_id).second) throw DatasetError("duplicate exemplar for class '" + e.class_id + "'");
    if (!known.contains(e.class_id)) throw DatasetError("exemplar class '" + e.class_id + "' is not a known class");
    if (e.vec.empty()) throw DatasetError("exemplar for class '" + e.class_id + "' is missing a vector");
    check_vector(e.vec, dim_, "exemplar '" + e.class_id + "'");
  }
}

std::optional<std::size_t> Dataset::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool Dataset::fully_labeled() const noexcept {
  return std::all_of(labels_.begin(), labels_.end(), [](const auto& l) { return l.has_value(); });
}

const Exemplar* Dataset::exemplar_for(const std::string& class_id) const {
  for (const auto& e : exemplars_) {
    if (e.class_id == class_id) return &e;
  }
  return nullptr;
}

ExampleRecord Dataset::record(std::size_t i) const {
  auto v = vec(i);
  return {ids_[i], {v.begin(), v.end()}, labels_[i], texts_[i]};
}

std::vector<std::pair<std::string, std::size_t>> Dataset::label_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : labels_) {
    if (l) ++counts[*l];
  }
  return {counts.begin(), counts.end()};
}

std::vector<double> synth_center(std::size_t k, std::size_t dim, double separation) {
  std::vector<double> c(dim, 0.0);
  c.at(k) = separation / std::sqrt(2.0);
  return c;
}

Dataset synth_dataset(const SynthSpec& spec) {
  const std::size_t k_classes = spec.counts.size();
  if (k_classes < 2) throw std::invalid_argument("synth_dataset: need at least 2 classes");
  if (spec.dim < k_classes) throw std::invalid_argument("synth_dataset: dim must be >= number of classes");
  if (!(spec.separation >= 0.0)) throw std::invalid_argument("synth_dataset: separation must be nonnegative");
  for (auto c : spec.counts) {
    if (c == 0) throw std::invalid_argument("synth_dataset: every class count must be >= 1");
  }

  Rng rng(derive_seed(spec.seed, Stream::kSynth));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](const std::vector<double>& center) {
    std::vector<double> v(center);
    for (auto& x : v) x += normal(rng.engine());
    return v;
  };

  std::vector<ExampleRecord> examples;
  std::vector<Exemplar> exemplars;
  std::vector<std::string> class_ids;
  for (std::size_t k = 0; k < k_classes; ++k) {
    const std::string cls = "class_" + std::to_string(k);
    class_ids.push_back(cls);
    const auto center = synth_center(k, spec.dim, spec.separation);
    exemplars.push_back({cls, draw(center), std::nullopt});
    for (std::size_t i = 0; i < spec.counts[k]; ++i) {
      examples.push_back({cls + "_" + std::to_string(i), draw(center), cls, std::nullopt});
    }
  }
  // Class-sorted pools would make lowest-index tie-breaking favour class_0.
  for (std::size_t i = examples.size(); i > 1; --i) std::swap(examples[i - 1], examples[rng.index(i)]);
  return Dataset(spec.dim, std::move(examples), std::move(exemplars), std::move(class_ids));
}

SkewSplit subsample_skew(const Dataset& ds, const std::string& rare_class, std::size_t rare_count,
                         std::uint64_t seed, std::size_t test_per_class) {
  if (!ds.fully_labeled()) throw DatasetError("subsample_skew needs a hidden label on every example");

  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[*ds.label(i)].push_back(i);
  if (!by_class.contains(rare_class)) throw DatasetError("rare class '" + rare_class + "' has no examples");

  std::size_t smallest = ds.size();
  for (const auto& [cls, idx] : by_class) smallest = std::min(smallest, idx.size());
  const std::size_t n_test = std::min(test_per_class, smallest);

  // Test holdout depends only on the dataset, so it is shared across seeds;
  // the rare subset is the only seeded choice.
  std::vector<bool> keep(ds.size(), false);
  std::vector<ExampleRecord> test;
  for (const auto& [cls, idx] : by_class) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (j < n_test) {
        test.push_back(ds.record(idx[j]));
      } else if (cls != rare_class) {
        keep[idx[j]] = true;
      }
    }
  }

  std::vector<std::size_t> rare_left(by_class[rare_class].begin() + static_cast<std::ptrdiff_t>(n_test),
                                     by_class[rare_class].end());
  if (rare_count > rare_left.size()) {
    throw DatasetError("rare_count " + std::to_string(rare_count) + " exceeds the " +
                       std::to_string(rare_left.size()) + " available '" + rare_class + "' examples");
  }
  Rng rng(derive_seed(seed, Stream::kSubsample));
  // Partial Fisher-Yates: the first rare_count slots are a uniform subset.
  for (std::size_t i = 0; i < rare_count; ++i) {
    std::swap(rare_left[i], rare_left[i + rng.index(rare_left.size() - i)]);
  }
  for (std::size_t i = 0; i < rare_count; ++i) keep[rare_left[i]] = true;

  std::vector<ExampleRecord> train;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (keep[i]) train.push_back(ds.record(i));
  }
  return {Dataset(ds.dim(), std::move(train), ds.exemplars(), ds.class_ids()), std::move(test)};
}

}  // namespace egal
