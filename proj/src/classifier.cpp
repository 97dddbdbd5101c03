#include "egal/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace egal {

std::size_t ClassifierModel::class_index(const std::string& id) const {
  auto it = std::find(class_ids.begin(), class_ids.end(), id);
  return static_cast<std::size_t>(it - class_ids.begin());
}

void softmax_inplace(std::span<double> logits) {
  if (logits.empty()) return;
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& z : logits) {
    z = std::exp(z - top);
    total += z;
  }
  for (auto& z : logits) z /= total;
}

LogisticObjective::LogisticObjective(std::span<const LabeledExample> data, const std::vector<std::string>& class_ids,
                                     double reg_strength)
    : n_(data.size()), k_(class_ids.size()), reg_strength_(reg_strength) {
  if (data.empty()) throw std::invalid_argument("training set is empty");
  if (!(reg_strength > 0.0)) throw std::invalid_argument("reg_strength must be positive");
  const std::size_t dim = data.front().vec.size();
  stride_ = dim + 1;
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < class_ids.size(); ++c) index.emplace(class_ids[c], c);

  design_.reserve(n_ * stride_);
  labels_.reserve(n_);
  for (const auto& ex : data) {
    if (ex.vec.size() != dim) throw std::invalid_argument("inconsistent example dimensions");
    auto it = index.find(ex.label);
    if (it == index.end()) throw std::invalid_argument("label '" + ex.label + "' is not a model class");
    design_.insert(design_.end(), ex.vec.begin(), ex.vec.end());
    design_.push_back(1.0);
    labels_.push_back(it->second);
  }
  logits_.resize(k_);
}

double LogisticObjective::value(std::span<const double> w) const {
  const kernels::MatrixView wv{w.data(), k_, stride_};
  double loss = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    kernels::gemv(wv, {design_.data() + i * stride_, stride_}, logits_);
    const double top = *std::max_element(logits_.begin(), logits_.end());
    double total = 0.0;
    for (double z : logits_) total += std::exp(z - top);
    loss += top + std::log(total) - logits_[labels_[i]];
  }
  double penalty = 0.0;
  for (std::size_t c = 0; c < k_; ++c) {
    for (std::size_t j = 0; j + 1 < stride_; ++j) penalty += w[c * stride_ + j] * w[c * stride_ + j];
  }
  const double n = static_cast<double>(n_);
  return loss / n + penalty / (2.0 * reg_strength_ * n);
}

double LogisticObjective::value_and_gradient(std::span<const double> w, std::span<double> grad) const {
  const kernels::MatrixView wv{w.data(), k_, stride_};
  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    std::span<const double> x{design_.data() + i * stride_, stride_};
    kernels::gemv(wv, x, logits_);
    const double top = *std::max_element(logits_.begin(), logits_.end());
    double total = 0.0;
    for (double z : logits_) total += std::exp(z - top);
    loss += top + std::log(total) - logits_[labels_[i]];
    for (std::size_t c = 0; c < k_; ++c) {
      const double residual = std::exp(logits_[c] - top) / total - (c == labels_[i] ? 1.0 : 0.0);
      kernels::axpy(residual, x, grad.subspan(c * stride_, stride_));
    }
  }
  const double n = static_cast<double>(n_);
  double penalty = 0.0;
  for (auto& g : grad) g /= n;
  for (std::size_t c = 0; c < k_; ++c) {
    for (std::size_t j = 0; j + 1 < stride_; ++j) {
      const double wj = w[c * stride_ + j];
      penalty += wj * wj;
      grad[c * stride_ + j] += wj / (reg_strength_ * n);
    }
  }
  return loss / n + penalty / (2.0 * reg_strength_ * n);
}

ClassifierModel train(std::span<const LabeledExample> labeled, const TrainOptions& options, TrainTrace* trace) {
  if (labeled.empty()) throw std::invalid_argument("training set is empty");
  std::set<std::string> distinct;
  for (const auto& ex : labeled) distinct.insert(ex.label);

  ClassifierModel model;
  model.class_ids.assign(distinct.begin(), distinct.end());
  model.dim = labeled.front().vec.size();
  model.reg_strength = options.reg_strength;
  model.weights.assign(model.num_classes() * model.stride(), 0.0);

  TrainTrace local;
  TrainTrace& tr = trace ? *trace : local;
  tr = {};
  if (model.num_classes() == 1) {
    tr.converged = true;
    return model;
  }

  const LogisticObjective objective(labeled, model.class_ids, options.reg_strength);
  std::vector<double> grad(objective.num_params());
  std::vector<double> trial(objective.num_params());
  double f = objective.value_and_gradient(model.weights, grad);
  tr.objective.push_back(f);

  constexpr double kArmijo = 1e-4;
  double step = 1.0;
  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    double gnorm_inf = 0.0;
    double gnorm_sq = 0.0;
    for (double g : grad) {
      gnorm_inf = std::max(gnorm_inf, std::abs(g));
      gnorm_sq += g * g;
    }
    if (gnorm_inf <= options.tol) {
      tr.converged = true;
      break;
    }

    bool accepted = false;
    step = std::min(step * 2.0, 1e6);
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t j = 0; j < trial.size(); ++j) trial[j] = model.weights[j] - step * grad[j];
      const double f_trial = objective.value(trial);
      if (f_trial <= f - kArmijo * step * gnorm_sq) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no descent possible at double precision

    model.weights.swap(trial);
    f = objective.value_and_gradient(model.weights, grad);
    tr.objective.push_back(f);
    tr.iterations = iter + 1;
  }
  return model;
}

ProbVector predict_proba(const ClassifierModel& model, std::span<const double> vec) {
  if (vec.size() != model.dim) throw std::invalid_argument("predict_proba: dimension mismatch");
  std::vector<double> x(vec.begin(), vec.end());
  x.push_back(1.0);
  ProbVector p(model.num_classes());
  kernels::gemv(model.weight_view(), x, p);
  softmax_inplace(p);
  return p;
}

std::vector<double> predict_proba_batch(const ClassifierModel& model, kernels::MatrixView rows) {
  if (rows.cols != model.dim) throw std::invalid_argument("predict_proba_batch: dimension mismatch");
  const std::size_t k = model.num_classes();
  std::vector<double> out(rows.rows * k);
  std::vector<double> x(model.stride(), 1.0);
  for (std::size_t i = 0; i < rows.rows; ++i) {
    auto r = rows.row(i);
    std::copy(r.begin(), r.end(), x.begin());
    std::span<double> p{out.data() + i * k, k};
    kernels::gemv(model.weight_view(), x, p);
    softmax_inplace(p);
  }
  return out;
}

std::size_t predict(const ClassifierModel& model, std::span<const double> vec) {
  const auto p = predict_proba(model, vec);
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

double entropy_score(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return std::max(0.0, h);
}

double least_confidence_score(std::span<const double> p) {
  return -*std::max_element(p.begin(), p.end());
}

}  // namespace egal
