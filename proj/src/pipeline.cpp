#include "fer/pipeline.hpp"

#include "fer/errors.hpp"
#include "fer/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace fer {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5AFF'0003;
constexpr std::uint64_t kDropoutKeyStream = 0xD0D0'0004;

template <typename Fn>
void parallel_rows(Eigen::Index n, int workers, Fn&& fn) {
  const auto w = static_cast<Eigen::Index>(std::max(1, workers));
  if (w == 1 || n < 2 * w) {
    for (Eigen::Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  const Eigen::Index chunk = (n + w - 1) / w;
  for (Eigen::Index t = 0; t < w; ++t) {
    const Eigen::Index lo = t * chunk;
    const Eigen::Index hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (Eigen::Index i = lo; i < hi; ++i) fn(i);
    });
  }
}

int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  Eigen::Index k = 0;
  row.maxCoeff(&k);
  return static_cast<int>(k);
}

} // namespace

Eigen::VectorXd reference_features(const ModelInput& input, int side) {
  const Eigen::ArrayXXd mean =
      (input.channels[0].cast<double>() + input.channels[1].cast<double>() + input.channels[2].cast<double>()) / 3.0;
  const Eigen::ArrayXXd small =
      (mean.rows() == side && mean.cols() == side) ? mean : resize_bilinear(mean, side, side);
  Eigen::VectorXd out(small.size());
  for (Eigen::Index y = 0; y < side; ++y)
    for (Eigen::Index x = 0; x < side; ++x) out(y * side + x) = small(y, x);
  return out;
}

Eigen::MatrixXd extract_features(std::span<const Sample> samples, const FeatureConfig& config) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(samples.size()), config.feature_dim());
  parallel_rows(out.rows(), config.workers, [&](Eigen::Index i) {
    out.row(i) = reference_features(preprocess(samples[static_cast<std::size_t>(i)].pixels, config.input),
                                    config.feature_side)
                     .transpose();
  });
  return out;
}

Eigen::MatrixXd augmented_features(std::span<const Sample> samples, std::span<const std::size_t> sample_ids,
                                   const AugmentConfig& augment, std::uint64_t seed, std::uint64_t epoch,
                                   const FeatureConfig& config) {
  if (samples.size() != sample_ids.size()) throw DimensionError("one sample id per sample is required");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(samples.size()), config.feature_dim());
  parallel_rows(out.rows(), config.workers, [&](Eigen::Index i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    const auto params = sample_params(augment, seed, epoch, sample_ids[static_cast<std::size_t>(i)]);
    out.row(i) =
        reference_features(preprocess(apply_affine(s.pixels, params), config.input), config.feature_side).transpose();
  });
  return out;
}

std::vector<int> predict(const TrainableModel& model, const Eigen::MatrixXd& features) {
  const Eigen::MatrixXd z = model.logits(features, false, {});
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax(z.row(i));
  return out;
}

EpochMetrics evaluate_model(const TrainableModel& model, const Eigen::MatrixXd& features, std::span<const int> labels,
                            const LossConfig& loss) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw DimensionError("feature rows and labels differ in length");
  if (labels.empty()) throw InputError("cannot evaluate on an empty split");
  const Eigen::MatrixXd z = model.logits(features, false, {});
  double total = 0.0;
  std::int64_t correct = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const Eigen::VectorXd target = smooth_labels(one_hot<double>(y, model.num_classes()), loss.effective_epsilon());
    total += weighted_ce_logits(z.row(i).transpose(), target, 1.0);
    correct += argmax(z.row(i)) == y;
  }
  const double n = static_cast<double>(labels.size());
  return {total / n, static_cast<double>(correct) / n};
}

SupervisedTask::SupervisedTask(std::vector<Sample> train, const std::vector<Sample>& val, ClassWeights weights,
                               TaskConfig config)
    : train_(std::move(train)), weights_(std::move(weights)), config_(std::move(config)) {
  if (config_.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (train_.empty()) throw InputError("training split is empty");
  config_.loss.validate();
  config_.augment.validate();
  val_features_ = extract_features(val, config_.features);
  for (const auto& s : val) val_labels_.push_back(s.label);
}

EpochMetrics SupervisedTask::train_epoch(TrainableModel& model, GroupOptimizer& optimizer, double lr,
                                         int global_epoch) {
  const auto epoch = static_cast<std::uint64_t>(global_epoch);
  const int k = model.num_classes();
  const double eps = config_.loss.effective_epsilon();

  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  KeyedRng rng{kShuffleStream, config_.seed, epoch};
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  double loss_sum = 0.0;
  std::int64_t correct = 0;
  const auto batch = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::span<const std::size_t> ids(order.data() + start, std::min(batch, order.size() - start));
    std::vector<Sample> samples;
    std::vector<std::uint64_t> keys;
    samples.reserve(ids.size());
    for (auto id : ids) {
      samples.push_back(train_[id]);
      keys.push_back(mix_key({kDropoutKeyStream, config_.seed, epoch, id}));
    }
    const Eigen::MatrixXd x =
        config_.augment.enabled ? augmented_features(samples, ids, config_.augment, config_.seed, epoch, config_.features)
                                : extract_features(samples, config_.features);

    const Eigen::MatrixXd z = model.logits(x, true, keys);
    Eigen::MatrixXd dz(z.rows(), z.cols());
    double batch_loss = 0.0;
    double weight_sum = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const int y = samples[static_cast<std::size_t>(i)].label;
      const double w = config_.loss.class_weighting ? weights_[y] : 1.0;
      const Eigen::VectorXd target = smooth_labels(one_hot<double>(y, k), eps);
      batch_loss += weighted_ce_logits(z.row(i).transpose(), target, w);
      dz.row(i) = ce_grad_logits(z.row(i).transpose(), target, w).transpose();
      weight_sum += w;
      correct += argmax(z.row(i)) == y;
    }
    const double norm = config_.loss.normalize_by_weight_sum ? weight_sum : static_cast<double>(ids.size());
    batch_loss /= norm;
    dz /= norm;
    if (!std::isfinite(batch_loss)) return {batch_loss, 0.0};
    loss_sum += batch_loss * static_cast<double>(ids.size());

    optimizer.step(model.parameter_groups(), model.backward(x, dz, true, keys), lr);
  }
  const double n = static_cast<double>(train_.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

EpochMetrics SupervisedTask::evaluate(const TrainableModel& model) {
  return evaluate_model(model, val_features_, val_labels_, config_.loss);
}

} // namespace fer
