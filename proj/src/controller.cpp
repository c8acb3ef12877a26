#include "fer/controller.hpp"

#include "fer/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fer {

std::vector<PhaseConfig> default_phases() {
  PhaseConfig warmup;
  warmup.name = "warmup";
  warmup.epochs = 3;
  warmup.optimizer.kind = OptimizerKind::Adam;
  warmup.optimizer.learning_rate = 1e-3;
  warmup.freeze_policy = FreezePolicy::FreezeBackbone;

  PhaseConfig finetune;
  finetune.name = "finetune";
  finetune.epochs = 7;
  finetune.optimizer.kind = OptimizerKind::AdamW;
  finetune.optimizer.learning_rate = 3e-5;
  finetune.optimizer.weight_decay = 1e-4;
  finetune.freeze_policy = FreezePolicy::UnfreezeAllExceptNormalization;
  return {warmup, finetune};
}

std::string_view monitor_name(Monitor m) { return m == Monitor::ValLoss ? "val_loss" : "val_acc"; }

Monitor parse_monitor(std::string_view s) {
  if (s == "val_loss") return Monitor::ValLoss;
  if (s == "val_acc") return Monitor::ValAcc;
  throw ConfigError("unknown monitor '" + std::string(s) + "'");
}

void CallbackConfig::validate() const {
  if (!(plateau.factor > 0.0 && plateau.factor < 1.0)) throw ConfigError("plateau factor must lie in (0, 1)");
  if (plateau.patience < 1) throw ConfigError("plateau patience must be >= 1");
  if (!(plateau.min_lr >= 0.0)) throw ConfigError("plateau min_lr must be non-negative");
  if (early_stop.patience < 1) throw ConfigError("early-stop patience must be >= 1");
  if (plateau.min_delta < 0.0 || early_stop.min_delta < 0.0) throw ConfigError("min_delta must be non-negative");
}

namespace {

double metric(const EpochRecord& r, Monitor m) { return m == Monitor::ValLoss ? r.val_loss : r.val_acc; }

} // namespace

bool improved(std::span<const EpochRecord> history, Monitor monitor, double min_delta) {
  if (history.empty()) return false;
  const double latest = metric(history.back(), monitor);
  for (std::size_t i = 0; i + 1 < history.size(); ++i) {
    const double earlier = metric(history[i], monitor);
    const bool better = monitor == Monitor::ValLoss ? latest < earlier - min_delta : latest > earlier + min_delta;
    if (!better) return false;
  }
  return true;
}

PlateauDecision plateau_update(std::span<const EpochRecord> history, int plateau_wait, double current_lr,
                               const PlateauConfig& config) {
  PlateauDecision d{current_lr, plateau_wait, false};
  if (!config.enabled || history.empty()) return d;
  d.wait = improved(history, config.monitor, config.min_delta) ? 0 : plateau_wait + 1;
  if (d.wait >= config.patience) {
    d.lr = std::max(current_lr * config.factor, config.min_lr);
    d.reduced = d.lr < current_lr;
    d.wait = 0;
  }
  return d;
}

EarlyStopDecision early_stop_update(std::span<const EpochRecord> history, int es_wait,
                                    const EarlyStopConfig& config) {
  EarlyStopDecision d{false, es_wait};
  if (!config.enabled || history.empty()) return d;
  d.wait = improved(history, config.monitor, config.min_delta) ? 0 : es_wait + 1;
  d.stop = d.wait >= config.patience;
  return d;
}

ParameterSnapshot snapshot(const TrainableModel& model) {
  ParameterSnapshot s;
  for (const auto& g : model.parameter_groups()) s.push_back(g.values);
  return s;
}

void restore(TrainableModel& model, const ParameterSnapshot& params) {
  auto& groups = model.parameter_groups();
  if (groups.size() != params.size()) throw DimensionError("snapshot does not match model layout");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].values.size() != params[i].size()) throw DimensionError("snapshot group size mismatch");
    groups[i].values = params[i];
  }
}

EpochDecision end_of_epoch(TrainLoopState& state, const EpochRecord& record, const CallbackConfig& callbacks,
                           const std::function<ParameterSnapshot()>& current_params) {
  EpochDecision d;
  state.history.push_back(record);
  state.global_epoch = record.epoch;

  if (record.val_acc > state.best_val_acc) {
    state.best_val_acc = record.val_acc;
    state.best_epoch = record.epoch;
    if (current_params) state.best_params = current_params();
    d.new_best = true;
  }
  state.best_val_loss = std::min(state.best_val_loss, record.val_loss);

  const auto plateau = plateau_update(state.history, state.plateau_wait, state.current_lr, callbacks.plateau);
  state.current_lr = plateau.lr;
  state.plateau_wait = plateau.wait;
  d.lr_reduced = plateau.reduced;

  const auto es = early_stop_update(state.history, state.es_wait, callbacks.early_stop);
  state.es_wait = es.wait;
  d.stop = es.stop;
  return d;
}

TrainingResult run_training(TrainableModel& model, TrainingTask& task, const std::vector<PhaseConfig>& phases,
                            const CallbackConfig& callbacks, const TrainingHooks& hooks) {
  if (phases.empty()) throw ConfigError("at least one training phase is required");
  callbacks.validate();
  for (const auto& p : phases) {
    if (p.epochs < 1) throw ConfigError("phase '" + p.name + "' must run at least one epoch");
    p.optimizer.validate();
  }

  TrainLoopState state;
  TrainingResult result;
  bool stop = false;
  for (const auto& phase : phases) {
    if (stop) break;
    apply_freeze_policy(model, phase.freeze_policy);
    GroupOptimizer optimizer(phase.optimizer, model.parameter_groups());
    state.current_lr = phase.optimizer.learning_rate;

    for (int e = 0; e < phase.epochs && !stop; ++e) {
      const int epoch = state.global_epoch + 1;
      EpochRecord record;
      record.epoch = epoch;
      record.phase = phase.name;
      record.lr = state.current_lr;

      const auto train = task.train_epoch(model, optimizer, state.current_lr, epoch);
      if (!std::isfinite(train.loss))
        throw DivergenceError("non-finite training loss in epoch " + std::to_string(epoch), state.history);
      const auto val = task.evaluate(model);
      if (!std::isfinite(val.loss))
        throw DivergenceError("non-finite validation loss in epoch " + std::to_string(epoch), state.history);

      record.train_loss = train.loss;
      record.train_acc = train.acc;
      record.val_loss = val.loss;
      record.val_acc = val.acc;

      const auto decision = end_of_epoch(state, record, callbacks, [&] { return snapshot(model); });
      if (hooks.on_record) hooks.on_record(record);
      if (decision.new_best && hooks.on_best) hooks.on_best(record, model);
      stop = decision.stop;
    }
  }

  result.stopped_early = stop;
  result.best_epoch = state.best_epoch;
  result.best_params = std::move(state.best_params);
  result.history = std::move(state.history);
  if (!result.best_params.empty() && (!stop || callbacks.early_stop.restore_best)) restore(model, result.best_params);
  return result;
}

std::string history_csv_header() { return "epoch,phase,lr,train_loss,train_acc,val_loss,val_acc"; }

std::string history_csv_row(const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%s,%.12g,%.12g,%.12g,%.12g,%.12g", r.epoch, r.phase.c_str(), r.lr, r.train_loss,
                r.train_acc, r.val_loss, r.val_acc);
  return buf;
}

namespace {

double parse_double(std::string_view s, std::size_t line) {
  // std::from_chars for double is available in libstdc++ 11.
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ParseError("line " + std::to_string(line) + ": invalid number '" + std::string(s) + "'", 0);
  return v;
}

} // namespace

std::vector<EpochRecord> parse_history_csv(std::string_view text) {
  std::vector<EpochRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != history_csv_header())
        throw ParseError("line " + std::to_string(line_no) + ": expected header '" + history_csv_header() + "'", 0);
      header_seen = true;
      continue;
    }
    std::vector<std::string_view> f;
    std::string_view rest = line;
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1))
      f.push_back(rest.substr(0, pos));
    f.push_back(rest);
    if (f.size() != 7)
      throw ParseError("line " + std::to_string(line_no) + ": expected 7 fields, got " + std::to_string(f.size()), 0);
    EpochRecord r;
    const double epoch = parse_double(f[0], line_no);
    if (epoch != std::floor(epoch) || epoch < 1)
      throw ParseError("line " + std::to_string(line_no) + ": epoch must be a positive integer", 0);
    r.epoch = static_cast<int>(epoch);
    r.phase = std::string(f[1]);
    r.lr = parse_double(f[2], line_no);
    r.train_loss = parse_double(f[3], line_no);
    r.train_acc = parse_double(f[4], line_no);
    r.val_loss = parse_double(f[5], line_no);
    r.val_acc = parse_double(f[6], line_no);
    if (!out.empty() && r.epoch <= out.back().epoch)
      throw ParseError("line " + std::to_string(line_no) + ": epochs must be strictly increasing", 0);
    out.push_back(std::move(r));
  }
  if (!header_seen) throw ParseError("line 1: missing header", 0);
  return out;
}

} // namespace fer
