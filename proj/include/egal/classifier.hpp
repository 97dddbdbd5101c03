#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "egal/kernels.hpp"

namespace egal {

/// Multinomial logistic regression on [x; 1]. weights is row-major
/// K x (d + 1); the last column is the bias.
struct ClassifierModel {
  std::vector<std::string> class_ids;
  std::vector<double> weights;
  std::size_t dim = 0;
  double reg_strength = 1.0;

  std::size_t num_classes() const noexcept { return class_ids.size(); }
  std::size_t stride() const noexcept { return dim + 1; }
  kernels::MatrixView weight_view() const noexcept { return {weights.data(), num_classes(), stride()}; }
  std::size_t class_index(const std::string& id) const;  // num_classes() if absent

  friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;
};

using ProbVector = std::vector<double>;

struct LabeledExample {
  std::span<const double> vec;
  std::string label;
};

struct TrainOptions {
  double reg_strength = 1.0;
  double tol = 1e-6;
  std::size_t max_iter = 1000;
};

struct TrainTrace {
  std::vector<double> objective;  // value after each accepted step, starting at the initial point
  std::size_t iterations = 0;
  bool converged = false;
};

/// Mean cross-entropy plus ||W without bias||^2 / (2 C N) for a fixed design.
/// Exposed so tests can check the analytic gradient.
class LogisticObjective {
 public:
  /// labels[i] indexes into the K classes. Rows are augmented with a 1.
  LogisticObjective(std::span<const LabeledExample> data, const std::vector<std::string>& class_ids,
                    double reg_strength);

  std::size_t num_params() const noexcept { return k_ * stride_; }
  double value(std::span<const double> w) const;
  /// Writes the gradient into grad and returns the objective value.
  double value_and_gradient(std::span<const double> w, std::span<double> grad) const;

 private:
  std::size_t n_ = 0;
  std::size_t k_ = 0;
  std::size_t stride_ = 0;
  double reg_strength_ = 1.0;
  std::vector<double> design_;  // n x stride_
  std::vector<std::size_t> labels_;
  mutable std::vector<double> logits_;
};

/// Full-batch gradient descent with Armijo backtracking from zero weights,
/// until the gradient infinity-norm is <= tol or max_iter steps. Classes are
/// the distinct labels in sorted order. Throws std::invalid_argument on an
/// empty set or inconsistent dimensions.
ClassifierModel train(std::span<const LabeledExample> labeled, const TrainOptions& options = {},
                      TrainTrace* trace = nullptr);

/// Softmax of W [x; 1]. Throws std::invalid_argument on a dimension mismatch.
ProbVector predict_proba(const ClassifierModel& model, std::span<const double> vec);

/// Row-major n x K probabilities for every row of `rows`.
std::vector<double> predict_proba_batch(const ClassifierModel& model, kernels::MatrixView rows);

/// Index into model.class_ids of the most probable class (lowest on ties).
std::size_t predict(const ClassifierModel& model, std::span<const double> vec);

/// -sum p log p in nats.
double entropy_score(std::span<const double> p);

/// -max p.
double least_confidence_score(std::span<const double> p);

/// Max-shifted softmax in place.
void softmax_inplace(std::span<double> logits);

}  // namespace egal
