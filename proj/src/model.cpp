#include "fer/model.hpp"

#include "fer/errors.hpp"
#include "fer/random.hpp"

#include <numeric>

namespace fer {

namespace {
constexpr std::uint64_t kDropoutStream = 0xD0D0'0002;
}

std::string_view role_name(Role r) {
  switch (r) {
  case Role::Backbone:
    return "backbone";
  case Role::Head:
    return "head";
  case Role::Normalization:
    return "normalization";
  }
  return "?";
}

Role parse_role(std::string_view tag) {
  if (tag == "backbone") return Role::Backbone;
  if (tag == "head") return Role::Head;
  if (tag == "normalization") return Role::Normalization;
  throw CapabilityError("unknown parameter role '" + std::string(tag) + "'");
}

ParameterGroup make_parameter_group(std::string name, std::string_view role_tag, std::vector<Eigen::Index> shape,
                                    bool decay) {
  ParameterGroup g;
  g.name = std::move(name);
  g.role = parse_role(role_tag);
  const Eigen::Index n =
      std::accumulate(shape.begin(), shape.end(), Eigen::Index{1}, std::multiplies<Eigen::Index>{});
  g.shape = std::move(shape);
  g.values = Eigen::VectorXd::Zero(n);
  g.decay = decay && g.role != Role::Normalization;
  g.trainable = g.role != Role::Normalization;
  return g;
}

std::string_view freeze_policy_name(FreezePolicy p) {
  switch (p) {
  case FreezePolicy::FreezeBackbone:
    return "freeze_backbone";
  case FreezePolicy::UnfreezeAllExceptNormalization:
    return "unfreeze_all_except_normalization";
  }
  return "?";
}

FreezePolicy parse_freeze_policy(std::string_view s) {
  if (s == "freeze_backbone") return FreezePolicy::FreezeBackbone;
  if (s == "unfreeze_all_except_normalization") return FreezePolicy::UnfreezeAllExceptNormalization;
  throw ConfigError("unknown freeze policy '" + std::string(s) + "'");
}

Eigen::MatrixXd TrainableModel::forward(const Eigen::MatrixXd& batch, bool training,
                                        std::span<const std::uint64_t> dropout_keys) const {
  Eigen::MatrixXd z = logits(batch, training, dropout_keys);
  for (Eigen::Index i = 0; i < z.rows(); ++i) z.row(i) = softmax(z.row(i).transpose()).transpose();
  return z;
}

Eigen::VectorXd global_average_pool(const Eigen::MatrixXd& feature_map) {
  if (feature_map.rows() < 1) throw DimensionError("feature map has no spatial positions");
  return feature_map.colwise().mean().transpose();
}

Eigen::VectorXd dropout_apply(const Eigen::VectorXd& v, double rate, std::uint64_t rng_key, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return v;
  KeyedRng rng{kDropoutStream, rng_key};
  const double keep_scale = 1.0 / (1.0 - rate);
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = rng.bernoulli(rate) ? 0.0 : v(i) * keep_scale;
  return out;
}

Eigen::VectorXd head_forward(const Eigen::VectorXd& features, const Eigen::MatrixXd& weights,
                             const Eigen::VectorXd& bias, double dropout_rate, std::uint64_t rng_key,
                             bool training) {
  if (weights.rows() != features.size() || weights.cols() != bias.size())
    throw DimensionError("head weight shape does not match features/bias");
  const Eigen::VectorXd z = weights.transpose() * dropout_apply(features, dropout_rate, rng_key, training) + bias;
  return softmax(z);
}

std::int64_t count_params(const TrainableModel& model, bool trainable_only) {
  std::int64_t n = 0;
  for (const auto& g : model.parameter_groups())
    if (!trainable_only || g.trainable) n += g.size();
  return n;
}

std::optional<std::string> param_budget_warning(std::int64_t total) {
  if (total >= 9'000'000 && total <= 9'500'000) return std::nullopt;
  return "parameter count " + std::to_string(total) + " outside the expected 9.0M-9.5M range";
}

void apply_freeze_policy(TrainableModel& model, FreezePolicy policy) {
  if (!model.supports(policy))
    throw CapabilityError(model.backend_name() + " backend does not support freeze policy " +
                          std::string(freeze_policy_name(policy)));
  for (auto& g : model.parameter_groups()) {
    switch (policy) {
    case FreezePolicy::FreezeBackbone:
      g.trainable = g.role == Role::Head;
      break;
    case FreezePolicy::UnfreezeAllExceptNormalization:
      g.trainable = g.role != Role::Normalization;
      break;
    }
  }
}

ReferenceModel::ReferenceModel(Eigen::Index input_dim, int num_classes, double dropout_rate)
    : input_dim_(input_dim), num_classes_(num_classes), dropout_rate_(dropout_rate) {
  if (input_dim < 1) throw ConfigError("reference model input_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("reference model needs at least 2 classes");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  groups_.push_back(make_parameter_group("backbone", "backbone", {0}));
  groups_.push_back(make_parameter_group("head/kernel", "head", {input_dim, num_classes}));
  groups_.push_back(make_parameter_group("head/bias", "head", {num_classes}, /*decay=*/false));
}

Eigen::Map<const Eigen::MatrixXd> ReferenceModel::kernel() const {
  return {groups_[1].values.data(), input_dim_, num_classes_};
}

Eigen::Map<const Eigen::VectorXd> ReferenceModel::bias() const { return {groups_[2].values.data(), num_classes_}; }

Eigen::MatrixXd ReferenceModel::dropped_inputs(const Eigen::MatrixXd& batch, bool training,
                                               std::span<const std::uint64_t> dropout_keys) const {
  if (batch.cols() != input_dim_)
    throw DimensionError("batch has " + std::to_string(batch.cols()) + " features, model expects " +
                         std::to_string(input_dim_));
  if (!training || dropout_rate_ == 0.0) return batch;
  if (static_cast<Eigen::Index>(dropout_keys.size()) != batch.rows())
    throw DimensionError("one dropout key per batch row is required in training mode");
  Eigen::MatrixXd x(batch.rows(), batch.cols());
  for (Eigen::Index i = 0; i < batch.rows(); ++i)
    x.row(i) = dropout_apply(batch.row(i).transpose(), dropout_rate_, dropout_keys[static_cast<std::size_t>(i)], true)
                   .transpose();
  return x;
}

Eigen::MatrixXd ReferenceModel::logits(const Eigen::MatrixXd& batch, bool training,
                                       std::span<const std::uint64_t> dropout_keys) const {
  const Eigen::MatrixXd x = dropped_inputs(batch, training, dropout_keys);
  return (x * kernel()).rowwise() + bias().transpose();
}

std::vector<Eigen::VectorXd> ReferenceModel::backward(const Eigen::MatrixXd& batch, const Eigen::MatrixXd& logit_grads,
                                                      bool training,
                                                      std::span<const std::uint64_t> dropout_keys) const {
  if (logit_grads.rows() != batch.rows() || logit_grads.cols() != num_classes_)
    throw DimensionError("logit gradient shape does not match batch");
  const Eigen::MatrixXd x = dropped_inputs(batch, training, dropout_keys);
  const Eigen::MatrixXd dkernel = x.transpose() * logit_grads;
  std::vector<Eigen::VectorXd> grads;
  grads.emplace_back(0);
  grads.emplace_back(Eigen::Map<const Eigen::VectorXd>(dkernel.data(), dkernel.size()));
  grads.emplace_back(logit_grads.colwise().sum().transpose());
  return grads;
}

std::unique_ptr<ReferenceModel> reference_model_build(Eigen::Index input_dim, int num_classes, double dropout_rate) {
  return std::make_unique<ReferenceModel>(input_dim, num_classes, dropout_rate);
}

AdapterRegistry& AdapterRegistry::instance() {
  static AdapterRegistry registry;
  return registry;
}

void AdapterRegistry::add(std::string runtime, AdapterFactory factory) {
  factories_[std::move(runtime)] = std::move(factory);
}

void AdapterRegistry::remove(const std::string& runtime) { factories_.erase(runtime); }

bool AdapterRegistry::contains(const std::string& runtime) const { return factories_.count(runtime) > 0; }

std::unique_ptr<TrainableModel> AdapterRegistry::create(const AdapterConfig& config) const {
  const auto it = factories_.find(config.runtime);
  if (it == factories_.end())
    throw AdapterUnavailableError("external backbone runtime '" + config.runtime + "' is not available");
  auto model = it->second(config);
  if (!model) throw AdapterUnavailableError("external backbone runtime '" + config.runtime + "' failed to load");
  return model;
}

std::unique_ptr<TrainableModel> backbone_adapter_build(const AdapterConfig& config) {
  return AdapterRegistry::instance().create(config);
}

} // namespace fer
