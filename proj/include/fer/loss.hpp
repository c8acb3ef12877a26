#pragma once

#include "fer/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fer {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct LossConfig {
  bool smoothing = true;
  double epsilon = 0.06;
  int num_classes = 7;
  bool class_weighting = true;
  double weight_cap = 4.0;
  /// Divide the weighted batch sum by the sum of weights instead of the batch size.
  bool normalize_by_weight_sum = false;

  double effective_epsilon() const { return smoothing ? epsilon : 0.0; }
  void validate() const {
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("label smoothing epsilon must lie in [0, 1)");
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
    if (!(weight_cap > 0.0)) throw ConfigError("class-weight cap must be positive");
  }
};

template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const VectorX<Scalar> e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

template <typename Scalar>
VectorX<Scalar> one_hot(int index, int num_classes) {
  if (index < 0 || index >= num_classes)
    throw InvalidTargetError("class index " + std::to_string(index) + " outside 0.." +
                             std::to_string(num_classes - 1));
  VectorX<Scalar> y = VectorX<Scalar>::Zero(num_classes);
  y(index) = Scalar(1);
  return y;
}

/// (1 - eps) * y + eps / K for a one-hot y. Throws InvalidTargetError otherwise.
template <typename Derived>
VectorX<typename Derived::Scalar> smooth_labels(const Eigen::MatrixBase<Derived>& one_hot_target,
                                                double epsilon) {
  using Scalar = typename Derived::Scalar;
  const auto k = one_hot_target.size();
  if (k < 2) throw InvalidTargetError("target must have at least 2 classes");
  int ones = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const Scalar v = one_hot_target(i);
    if (v == Scalar(1)) {
      ++ones;
    } else if (v != Scalar(0)) {
      throw InvalidTargetError("target is not one-hot");
    }
  }
  if (ones != 1) throw InvalidTargetError("target is not one-hot");
  const Scalar eps(epsilon);
  return (Scalar(1) - eps) * one_hot_target + VectorX<Scalar>::Constant(k, eps / Scalar(k));
}

/// -w * sum_k target_k * log(probs_k), with 0 * log(0) taken as 0. Throws DomainError for
/// a negative probability or a zero probability under a positive target.
template <typename DerivedP, typename DerivedT>
typename DerivedP::Scalar weighted_ce(const Eigen::MatrixBase<DerivedP>& probs,
                                      const Eigen::MatrixBase<DerivedT>& target,
                                      typename DerivedP::Scalar weight) {
  using Scalar = typename DerivedP::Scalar;
  if (probs.size() != target.size()) throw DimensionError("probs and target sizes differ");
  Scalar acc(0);
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    if (!(probs(k) >= Scalar(0))) throw DomainError("probability must be non-negative");
    if (target(k) == Scalar(0)) continue;
    if (probs(k) == Scalar(0)) throw DomainError("zero probability under a positive target");
    acc -= target(k) * std::log(probs(k));
  }
  return weight * acc;
}

/// Cross-entropy computed from logits via log-sum-exp; never hits log(0).
template <typename DerivedL, typename DerivedT>
typename DerivedL::Scalar weighted_ce_logits(const Eigen::MatrixBase<DerivedL>& logits,
                                             const Eigen::MatrixBase<DerivedT>& target,
                                             typename DerivedL::Scalar weight) {
  using Scalar = typename DerivedL::Scalar;
  const Scalar m = logits.maxCoeff();
  const Scalar lse = m + std::log((logits.array() - m).exp().sum());
  return weight * (target.sum() * lse - target.dot(logits));
}

/// Gradient of weighted_ce(softmax(logits), target, w) with respect to the logits.
template <typename DerivedL, typename DerivedT>
VectorX<typename DerivedL::Scalar> ce_grad_logits(const Eigen::MatrixBase<DerivedL>& logits,
                                                  const Eigen::MatrixBase<DerivedT>& target,
                                                  typename DerivedL::Scalar weight) {
  return weight * (softmax(logits) - target);
}

struct ClassWeights {
  std::vector<double> weights;
  std::vector<double> unclipped;
  double cap = 4.0;

  double operator[](int c) const { return weights[static_cast<std::size_t>(c)]; }
};

/// Balanced weights N / (K * n_c) clipped at `cap`. Throws EmptyClassError on a zero count.
inline ClassWeights compute_class_weights(std::span<const std::int64_t> counts, double cap) {
  if (!(cap > 0.0)) throw ConfigError("class-weight cap must be positive");
  if (counts.empty()) throw EmptyClassError("no classes to weight");
  double total = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < 1)
      throw EmptyClassError("class " + std::to_string(c) + " has no training samples");
    total += static_cast<double>(counts[c]);
  }
  ClassWeights w;
  w.cap = cap;
  const double k = static_cast<double>(counts.size());
  for (auto n : counts) {
    const double raw = total / (k * static_cast<double>(n));
    w.unclipped.push_back(raw);
    w.weights.push_back(std::min(cap, raw));
  }
  return w;
}

inline ClassWeights uniform_class_weights(int num_classes) {
  ClassWeights w;
  w.weights.assign(static_cast<std::size_t>(num_classes), 1.0);
  w.unclipped = w.weights;
  return w;
}

} // namespace fer
