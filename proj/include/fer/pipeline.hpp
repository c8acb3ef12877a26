#pragma once

#include "fer/augment.hpp"
#include "fer/controller.hpp"
#include "fer/dataset.hpp"
#include "fer/loss.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace fer {

/// Channel mean of a model input, bilinearly resized to side x side and flattened
/// row-major. This is what the reference backend consumes.
Eigen::VectorXd reference_features(const ModelInput& input, int side);

struct FeatureConfig {
  InputSpec input;
  int feature_side = 48;
  int workers = 1; ///< threads used for per-sample augment + preprocess

  Eigen::Index feature_dim() const { return static_cast<Eigen::Index>(feature_side) * feature_side; }
};

/// Preprocess-only features (no augmentation), one row per sample.
Eigen::MatrixXd extract_features(std::span<const Sample> samples, const FeatureConfig& config);

/// Training-time features: each sample is warped with parameters keyed by
/// (seed, epoch, sample id) before preprocessing. Output is independent of `workers`.
Eigen::MatrixXd augmented_features(std::span<const Sample> samples, std::span<const std::size_t> sample_ids,
                                   const AugmentConfig& augment, std::uint64_t seed, std::uint64_t epoch,
                                   const FeatureConfig& config);

struct TaskConfig {
  std::uint64_t seed = 42;
  int batch_size = 32;
  AugmentConfig augment;
  FeatureConfig features;
  LossConfig loss;
};

/// Mean smoothed cross-entropy (unweighted) and accuracy of `model` in evaluation mode.
EpochMetrics evaluate_model(const TrainableModel& model, const Eigen::MatrixXd& features, std::span<const int> labels,
                            const LossConfig& loss);

std::vector<int> predict(const TrainableModel& model, const Eigen::MatrixXd& features);

/// Mini-batch training over the training split with validation on pre-extracted features.
class SupervisedTask final : public TrainingTask {
public:
  SupervisedTask(std::vector<Sample> train, const std::vector<Sample>& val, ClassWeights weights, TaskConfig config);

  EpochMetrics train_epoch(TrainableModel& model, GroupOptimizer& optimizer, double lr, int global_epoch) override;
  EpochMetrics evaluate(const TrainableModel& model) override;

  const ClassWeights& class_weights() const { return weights_; }

private:
  std::vector<Sample> train_;
  Eigen::MatrixXd val_features_;
  std::vector<int> val_labels_;
  ClassWeights weights_;
  TaskConfig config_;
};

} // namespace fer
