#pragma once

#include "fer/model.hpp"
#include "fer/optim.hpp"

#include <Eigen/Core>

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace fer {

struct PhaseConfig {
  std::string name;
  int epochs = 1;
  OptimConfig optimizer;
  FreezePolicy freeze_policy = FreezePolicy::FreezeBackbone;
};

/// Three warm-up epochs (Adam 1e-3, frozen backbone) then seven fine-tune epochs
/// (AdamW 3e-5, weight decay 1e-4, everything but normalization trainable).
std::vector<PhaseConfig> default_phases();

enum class Monitor { ValLoss, ValAcc };

std::string_view monitor_name(Monitor m);
Monitor parse_monitor(std::string_view s);

struct PlateauConfig {
  bool enabled = true;
  Monitor monitor = Monitor::ValLoss;
  double factor = 0.3;
  int patience = 2;
  double min_delta = 0.0;
  double min_lr = 1e-7;
};

struct EarlyStopConfig {
  bool enabled = true;
  Monitor monitor = Monitor::ValLoss;
  int patience = 3;
  double min_delta = 0.0;
  bool restore_best = true;
};

struct CallbackConfig {
  PlateauConfig plateau;
  EarlyStopConfig early_stop;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0; ///< 1-based, counted across phases
  std::string phase;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

/// Whether the newest record improves on every earlier one for the monitored metric.
bool improved(std::span<const EpochRecord> history, Monitor monitor, double min_delta);

struct PlateauDecision {
  double lr;
  int wait;
  bool reduced;
};

PlateauDecision plateau_update(std::span<const EpochRecord> history, int plateau_wait, double current_lr,
                               const PlateauConfig& config);

struct EarlyStopDecision {
  bool stop;
  int wait;
};

EarlyStopDecision early_stop_update(std::span<const EpochRecord> history, int es_wait,
                                    const EarlyStopConfig& config);

using ParameterSnapshot = std::vector<Eigen::VectorXd>;

ParameterSnapshot snapshot(const TrainableModel& model);
void restore(TrainableModel& model, const ParameterSnapshot& params);

struct TrainLoopState {
  int global_epoch = 0;
  double current_lr = 0.0;
  double best_val_acc = -std::numeric_limits<double>::infinity();
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0; ///< epoch of the retained checkpoint, 0 before the first epoch
  int es_wait = 0;
  int plateau_wait = 0;
  ParameterSnapshot best_params;
  std::vector<EpochRecord> history;
};

struct EpochDecision {
  bool new_best = false;
  bool lr_reduced = false;
  bool stop = false;
};

/// Runs the end-of-epoch callbacks in order: checkpoint, plateau, early stop. Appends
/// `record` to the history first. The checkpoint keeps the highest val_acc (earliest
/// epoch on ties); `current_params` is only copied when a new best is found.
EpochDecision end_of_epoch(TrainLoopState& state, const EpochRecord& record, const CallbackConfig& callbacks,
                           const std::function<ParameterSnapshot()>& current_params);

struct EpochMetrics {
  double loss = 0.0;
  double acc = 0.0;
};

/// Supplies data for the loop: one pass of optimisation and one validation pass.
class TrainingTask {
public:
  virtual ~TrainingTask() = default;
  virtual EpochMetrics train_epoch(TrainableModel& model, GroupOptimizer& optimizer, double lr, int global_epoch) = 0;
  virtual EpochMetrics evaluate(const TrainableModel& model) = 0;
};

struct TrainingHooks {
  std::function<void(const EpochRecord&)> on_record;
  std::function<void(const EpochRecord&, const TrainableModel&)> on_best;
};

struct TrainingResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  ParameterSnapshot best_params;
  bool stopped_early = false;
};

/// Thrown on a non-finite training or validation loss. Holds the records of every
/// epoch completed before the failure.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string& what, std::vector<EpochRecord> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<EpochRecord>& history() const { return history_; }

private:
  std::vector<EpochRecord> history_;
};

/// Executes the phases in order. Before each phase the freeze policy is applied and the
/// optimizer and learning rate are reset to the phase's values. Early-stop and plateau
/// counters carry across the phase boundary. The best checkpoint is loaded into
/// `model` before returning.
TrainingResult run_training(TrainableModel& model, TrainingTask& task, const std::vector<PhaseConfig>& phases,
                            const CallbackConfig& callbacks, const TrainingHooks& hooks = {});

/// "epoch,phase,lr,train_loss,train_acc,val_loss,val_acc"
std::string history_csv_header();
std::string history_csv_row(const EpochRecord& r);
/// Throws ParseError with the 1-based line number on malformed input.
std::vector<EpochRecord> parse_history_csv(std::string_view text);

} // namespace fer
