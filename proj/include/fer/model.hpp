#pragma once

#include "fer/loss.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fer {

enum class Role { Backbone, Head, Normalization };

std::string_view role_name(Role r);
/// Throws CapabilityError for tags other than backbone / head / normalization.
Role parse_role(std::string_view tag);

struct ParameterGroup {
  std::string name;
  Role role = Role::Head;
  std::vector<Eigen::Index> shape;
  Eigen::VectorXd values; ///< column-major flattening of `shape`
  bool trainable = true;
  bool decay = true; ///< false for biases and normalization parameters

  Eigen::Index size() const { return values.size(); }
};

ParameterGroup make_parameter_group(std::string name, std::string_view role_tag, std::vector<Eigen::Index> shape,
                                    bool decay = true);

enum class FreezePolicy { FreezeBackbone, UnfreezeAllExceptNormalization };

std::string_view freeze_policy_name(FreezePolicy p);
FreezePolicy parse_freeze_policy(std::string_view s);

/// Common surface for every backend. Batches are row-per-sample; `dropout_keys`
/// carries one stream key per row and is only consulted when training.
class TrainableModel {
public:
  virtual ~TrainableModel() = default;

  virtual std::string backend_name() const = 0;
  virtual int num_classes() const = 0;
  virtual Eigen::Index input_dim() const = 0;

  virtual std::vector<ParameterGroup>& parameter_groups() = 0;
  virtual const std::vector<ParameterGroup>& parameter_groups() const = 0;

  virtual Eigen::MatrixXd logits(const Eigen::MatrixXd& batch, bool training,
                                 std::span<const std::uint64_t> dropout_keys) const = 0;

  /// Parameter gradients (one vector per group, in group order) given dL/dlogits.
  virtual std::vector<Eigen::VectorXd> backward(const Eigen::MatrixXd& batch, const Eigen::MatrixXd& logit_grads,
                                                bool training,
                                                std::span<const std::uint64_t> dropout_keys) const = 0;

  virtual bool supports(FreezePolicy) const { return true; }

  /// Row-wise softmax of logits().
  Eigen::MatrixXd forward(const Eigen::MatrixXd& batch, bool training,
                          std::span<const std::uint64_t> dropout_keys = {}) const;
};

/// Mean over the rows of a (H*W) x C feature map, one output per channel.
Eigen::VectorXd global_average_pool(const Eigen::MatrixXd& feature_map);

/// Inverted dropout: identity unless training, otherwise each entry is zeroed with
/// probability `rate` and survivors are scaled by 1 / (1 - rate).
Eigen::VectorXd dropout_apply(const Eigen::VectorXd& v, double rate, std::uint64_t rng_key, bool training);

struct HeadSpec {
  Eigen::Index feature_dim = 1408;
  double dropout_rate = 0.5;
  int num_classes = 7;

  Eigen::Index param_count() const { return feature_dim * num_classes + num_classes; }
};

/// softmax(W^T dropout(features) + b) with W of shape F x K.
Eigen::VectorXd head_forward(const Eigen::VectorXd& features, const Eigen::MatrixXd& weights,
                             const Eigen::VectorXd& bias, double dropout_rate, std::uint64_t rng_key, bool training);

std::int64_t count_params(const TrainableModel& model, bool trainable_only = false);

/// Returns a warning when a full backbone assembly falls outside [9.0M, 9.5M] parameters.
std::optional<std::string> param_budget_warning(std::int64_t total);

void apply_freeze_policy(TrainableModel& model, FreezePolicy policy);

/// Softmax regression over a flat feature vector: a dense head with dropout on its
/// inputs and an empty backbone group.
class ReferenceModel final : public TrainableModel {
public:
  ReferenceModel(Eigen::Index input_dim, int num_classes, double dropout_rate = 0.5);

  std::string backend_name() const override { return "reference"; }
  int num_classes() const override { return num_classes_; }
  Eigen::Index input_dim() const override { return input_dim_; }
  double dropout_rate() const { return dropout_rate_; }

  std::vector<ParameterGroup>& parameter_groups() override { return groups_; }
  const std::vector<ParameterGroup>& parameter_groups() const override { return groups_; }

  Eigen::MatrixXd logits(const Eigen::MatrixXd& batch, bool training,
                         std::span<const std::uint64_t> dropout_keys) const override;
  std::vector<Eigen::VectorXd> backward(const Eigen::MatrixXd& batch, const Eigen::MatrixXd& logit_grads,
                                        bool training, std::span<const std::uint64_t> dropout_keys) const override;

  Eigen::Map<const Eigen::MatrixXd> kernel() const;
  Eigen::Map<const Eigen::VectorXd> bias() const;

private:
  Eigen::MatrixXd dropped_inputs(const Eigen::MatrixXd& batch, bool training,
                                 std::span<const std::uint64_t> dropout_keys) const;

  Eigen::Index input_dim_;
  int num_classes_;
  double dropout_rate_;
  std::vector<ParameterGroup> groups_;
};

std::unique_ptr<ReferenceModel> reference_model_build(Eigen::Index input_dim, int num_classes,
                                                      double dropout_rate = 0.5);

struct AdapterConfig {
  std::string runtime;
  std::string weights_source;
  HeadSpec head;
};

using AdapterFactory = std::function<std::unique_ptr<TrainableModel>(const AdapterConfig&)>;

/// Process-wide table of external backbone runtimes. Nothing is registered by default.
class AdapterRegistry {
public:
  static AdapterRegistry& instance();

  void add(std::string runtime, AdapterFactory factory);
  void remove(const std::string& runtime);
  bool contains(const std::string& runtime) const;
  std::unique_ptr<TrainableModel> create(const AdapterConfig& config) const;

private:
  std::map<std::string, AdapterFactory> factories_;
};

/// Wraps an external pretrained backbone. Throws AdapterUnavailableError if no runtime
/// of that name is registered.
std::unique_ptr<TrainableModel> backbone_adapter_build(const AdapterConfig& config);

} // namespace fer
