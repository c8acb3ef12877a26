#include "fer/optim.hpp"

namespace fer {

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "adamw"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "adamw") return OptimizerKind::AdamW;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

GroupOptimizer::GroupOptimizer(OptimConfig config, const std::vector<ParameterGroup>& groups)
    : config_(config) {
  config_.validate();
  states_.reserve(groups.size());
  for (const auto& g : groups) states_.emplace_back(g.size());
}

void GroupOptimizer::step(std::vector<ParameterGroup>& groups, const std::vector<Eigen::VectorXd>& grads,
                          double lr) {
  if (groups.size() != states_.size() || grads.size() != groups.size())
    throw DimensionError("optimizer was built for a different parameter layout");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    auto& g = groups[i];
    if (!g.trainable || g.size() == 0) continue;
    if (config_.kind == OptimizerKind::AdamW)
      adamw_step(g.values, grads[i], states_[i], config_, lr, g.decay);
    else
      adam_step(g.values, grads[i], states_[i], config_, lr);
  }
}

} // namespace fer
