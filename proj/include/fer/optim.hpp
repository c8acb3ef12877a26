#pragma once

#include "fer/errors.hpp"
#include "fer/loss.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace fer {

enum class OptimizerKind { Adam, AdamW };

std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

struct OptimConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("beta1 and beta2 must lie in [0, 1)");
    if (!(eps_hat > 0.0)) throw ConfigError("eps_hat must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  }
};

template <typename Scalar>
struct OptimState {
  std::int64_t step = 0;
  VectorX<Scalar> m;
  VectorX<Scalar> v;

  OptimState() = default;
  explicit OptimState(Eigen::Index n) : m(VectorX<Scalar>::Zero(n)), v(VectorX<Scalar>::Zero(n)) {}
};

namespace detail {

template <typename Scalar>
void check_shapes(const VectorX<Scalar>& theta, const VectorX<Scalar>& grad, const OptimState<Scalar>& state) {
  if (theta.size() != grad.size() || theta.size() != state.m.size() || theta.size() != state.v.size())
    throw DimensionError("parameter, gradient and moment sizes disagree");
}

template <typename Scalar>
void adam_moments_and_update(VectorX<Scalar>& theta, const VectorX<Scalar>& grad, OptimState<Scalar>& state,
                             Scalar lr, const OptimConfig& cfg) {
  const Scalar b1(cfg.beta1), b2(cfg.beta2), eps(cfg.eps_hat);
  ++state.step;
  state.m = b1 * state.m + (Scalar(1) - b1) * grad;
  state.v = b2 * state.v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
  const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(state.step));
  const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(state.step));
  const auto m_hat = (state.m / c1).array();
  const auto v_hat = (state.v / c2).array();
  theta.array() -= lr * m_hat / (v_hat.sqrt() + eps);
}

} // namespace detail

/// One Adam update in place; cfg.weight_decay is ignored. `lr` overrides
/// cfg.learning_rate so schedulers can drive it.
template <typename Scalar>
void adam_step(VectorX<Scalar>& theta, const VectorX<Scalar>& grad, OptimState<Scalar>& state,
               const OptimConfig& cfg, double lr) {
  detail::check_shapes(theta, grad, state);
  detail::adam_moments_and_update(theta, grad, state, Scalar(lr), cfg);
}

template <typename Scalar>
void adam_step(VectorX<Scalar>& theta, const VectorX<Scalar>& grad, OptimState<Scalar>& state,
               const OptimConfig& cfg) {
  adam_step(theta, grad, state, cfg, cfg.learning_rate);
}

/// Adam followed by decoupled decay lr * wd * theta_prev. The decay never reaches m or v.
template <typename Scalar>
void adamw_step(VectorX<Scalar>& theta, const VectorX<Scalar>& grad, OptimState<Scalar>& state,
                const OptimConfig& cfg, double lr, bool apply_decay = true) {
  detail::check_shapes(theta, grad, state);
  const VectorX<Scalar> decay = (apply_decay && cfg.weight_decay != 0.0)
                                    ? VectorX<Scalar>(Scalar(lr * cfg.weight_decay) * theta)
                                    : VectorX<Scalar>::Zero(theta.size());
  detail::adam_moments_and_update(theta, grad, state, Scalar(lr), cfg);
  theta -= decay;
}

template <typename Scalar>
void adamw_step(VectorX<Scalar>& theta, const VectorX<Scalar>& grad, OptimState<Scalar>& state,
                const OptimConfig& cfg) {
  adamw_step(theta, grad, state, cfg, cfg.learning_rate);
}

} // namespace fer

#include "fer/model.hpp"

#include <vector>

namespace fer {

/// Per-group moment buffers for one training phase. Frozen groups are skipped entirely
/// (no moment update). Decay applies only to groups flagged `decay` and only for AdamW.
class GroupOptimizer {
public:
  GroupOptimizer(OptimConfig config, const std::vector<ParameterGroup>& groups);

  void step(std::vector<ParameterGroup>& groups, const std::vector<Eigen::VectorXd>& grads, double lr);

  const OptimConfig& config() const { return config_; }
  const std::vector<OptimState<double>>& states() const { return states_; }

private:
  OptimConfig config_;
  std::vector<OptimState<double>> states_;
};

} // namespace fer
