#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fer/controller.hpp"
#include "fer/errors.hpp"

#include <cmath>
#include <limits>

using namespace fer;

namespace {

std::vector<EpochRecord> losses(std::initializer_list<double> vals) {
  std::vector<EpochRecord> h;
  int e = 0;
  for (double v : vals) {
    EpochRecord r;
    r.epoch = ++e;
    r.val_loss = v;
    r.val_acc = 1.0 - v;
    h.push_back(r);
  }
  return h;
}

/// Feeds scripted validation metrics and stamps the epoch number into the head weights,
/// so the restored parameters identify which epoch they came from.
class ScriptedTask final : public TrainingTask {
public:
  ScriptedTask(std::vector<double> val_acc, std::vector<double> val_loss) : acc_(val_acc), loss_(val_loss) {}

  EpochMetrics train_epoch(TrainableModel& model, GroupOptimizer&, double lr, int epoch) override {
    lrs.push_back(lr);
    for (auto& g : model.parameter_groups())
      if (g.trainable) g.values.setConstant(epoch);
    current_ = static_cast<std::size_t>(epoch - 1);
    return {train_loss_override.value_or(0.5), 0.5};
  }

  EpochMetrics evaluate(const TrainableModel&) override { return {loss_.at(current_), acc_.at(current_)}; }

  std::vector<double> lrs;
  std::optional<double> train_loss_override;

private:
  std::vector<double> acc_, loss_;
  std::size_t current_ = 0;
};

std::vector<PhaseConfig> phases(int warmup, int finetune) {
  auto p = default_phases();
  p[0].epochs = warmup;
  p[1].epochs = finetune;
  return p;
}

} // namespace

TEST_CASE("default phases") {
  const auto p = default_phases();
  REQUIRE(p.size() == 2);
  CHECK(p[0].epochs == 3);
  CHECK(p[0].optimizer.kind == OptimizerKind::Adam);
  CHECK(p[0].optimizer.learning_rate == 1e-3);
  CHECK(p[0].freeze_policy == FreezePolicy::FreezeBackbone);
  CHECK(p[1].epochs == 7);
  CHECK(p[1].optimizer.kind == OptimizerKind::AdamW);
  CHECK(p[1].optimizer.learning_rate == 3e-5);
  CHECK(p[1].optimizer.weight_decay == 1e-4);
  CHECK(p[1].freeze_policy == FreezePolicy::UnfreezeAllExceptNormalization);
}

TEST_CASE("improved compares against every earlier record") {
  const auto h = losses({1.0, 0.9, 0.95, 0.92});
  CHECK_FALSE(improved(std::span(h).first(0), Monitor::ValLoss, 0.0));
  CHECK(improved(std::span(h).first(1), Monitor::ValLoss, 0.0));
  CHECK(improved(std::span(h).first(2), Monitor::ValLoss, 0.0));
  CHECK_FALSE(improved(std::span(h).first(3), Monitor::ValLoss, 0.0));
  CHECK_FALSE(improved(h, Monitor::ValLoss, 0.0));
  CHECK_FALSE(improved(std::span(h).first(2), Monitor::ValLoss, 0.2));
  CHECK(improved(std::span(h).first(2), Monitor::ValAcc, 0.0));
}

TEST_CASE("plateau reduces the learning rate after two flat epochs") {
  const auto h = losses({1.0, 0.9, 0.95, 0.92});
  PlateauConfig cfg;
  double lr = 1e-3;
  int wait = 0;
  int fired = 0;
  for (std::size_t i = 1; i <= h.size(); ++i) {
    const auto d = plateau_update(std::span(h).first(i), wait, lr, cfg);
    if (d.reduced) fired = static_cast<int>(i);
    lr = d.lr;
    wait = d.wait;
  }
  CHECK(fired == 4);
  CHECK(lr == doctest::Approx(3e-4).epsilon(1e-12));
  CHECK(wait == 0);

  // a second flat window compounds
  auto longer = losses({1.0, 0.9, 0.95, 0.92, 0.93, 0.94});
  lr = 1e-3;
  wait = 0;
  for (std::size_t i = 1; i <= longer.size(); ++i) {
    const auto d = plateau_update(std::span(longer).first(i), wait, lr, cfg);
    lr = d.lr;
    wait = d.wait;
  }
  CHECK(lr == doctest::Approx(1e-3 * 0.09).epsilon(1e-12));

  // floor at min_lr
  const auto d = plateau_update(h, 1, 2e-7, cfg);
  CHECK(d.lr == 1e-7);
  const auto none = plateau_update(h, 1, 1e-7, cfg);
  CHECK_FALSE(none.reduced);
  CHECK(none.lr == 1e-7);

  PlateauConfig off;
  off.enabled = false;
  CHECK_FALSE(plateau_update(h, 5, 1e-3, off).reduced);
}

TEST_CASE("early stop after three epochs without improvement") {
  const auto h = losses({1.0, 0.8, 0.85, 0.9, 0.82, 0.7});
  EarlyStopConfig cfg;
  int wait = 0;
  int stopped = 0;
  for (std::size_t i = 1; i <= h.size() && !stopped; ++i) {
    const auto d = early_stop_update(std::span(h).first(i), wait, cfg);
    wait = d.wait;
    if (d.stop) stopped = static_cast<int>(i);
  }
  CHECK(stopped == 5);
}

TEST_CASE("callback validation") {
  CallbackConfig cb;
  CHECK_NOTHROW(cb.validate());
  cb.plateau.factor = 1.0;
  CHECK_THROWS_AS(cb.validate(), ConfigError);
  cb = {};
  cb.early_stop.patience = 0;
  CHECK_THROWS_AS(cb.validate(), ConfigError);
  cb = {};
  cb.plateau.min_lr = -1;
  CHECK_THROWS_AS(cb.validate(), ConfigError);
}

TEST_CASE("run_training stops early and restores the best epoch") {
  ReferenceModel model(3, 2, 0.0);
  ScriptedTask task({0.50, 0.60, 0.59, 0.58, 0.57, 0.99, 0.99, 0.99, 0.99, 0.99},
                    {1.0, 0.9, 0.91, 0.92, 0.93, 0.1, 0.1, 0.1, 0.1, 0.1});
  CallbackConfig cb;
  cb.early_stop.monitor = Monitor::ValAcc;
  cb.plateau.monitor = Monitor::ValAcc;
  std::vector<int> seen;
  TrainingHooks hooks;
  hooks.on_record = [&](const EpochRecord& r) { seen.push_back(r.epoch); };
  const auto result = run_training(model, task, phases(3, 7), cb, hooks);

  CHECK(result.stopped_early);
  CHECK(result.history.size() == 5);
  CHECK(seen == std::vector<int>{1, 2, 3, 4, 5});
  CHECK(result.best_epoch == 2);
  for (const auto& g : model.parameter_groups())
    if (g.size()) CHECK(g.values == Eigen::VectorXd::Constant(g.size(), 2.0));

  // phase boundary after epoch 3 resets the lr; plateau fired at epoch 4 in the second phase
  REQUIRE(task.lrs.size() == 5);
  CHECK(task.lrs[0] == 1e-3);
  CHECK(task.lrs[3] == 3e-5);
  CHECK(task.lrs[4] == doctest::Approx(3e-5 * 0.3));
  CHECK(result.history[0].phase == "warmup");
  CHECK(result.history[3].phase == "finetune");
}

TEST_CASE("run_training without a stop keeps the best checkpoint") {
  std::vector<double> acc, loss;
  for (int i = 0; i < 10; ++i) {
    acc.push_back(0.5 + 0.04 * i);
    loss.push_back(1.0 - 0.05 * i);
  }
  ReferenceModel model(3, 2, 0.0);
  ScriptedTask task(acc, loss);
  int bests = 0;
  TrainingHooks hooks;
  hooks.on_best = [&](const EpochRecord&, const TrainableModel&) { ++bests; };
  const auto result = run_training(model, task, phases(3, 7), CallbackConfig{}, hooks);
  CHECK_FALSE(result.stopped_early);
  CHECK(result.history.size() == 10);
  CHECK(result.best_epoch == 10);
  CHECK(bests == 10);
  for (double lr : std::span(task.lrs).subspan(3)) CHECK(lr == 3e-5);
}

TEST_CASE("checkpoint ties go to the earlier epoch") {
  TrainLoopState state;
  CallbackConfig cb;
  int calls = 0;
  auto params = [&] {
    ++calls;
    return ParameterSnapshot{Eigen::VectorXd::Constant(1, calls)};
  };
  EpochRecord r;
  r.epoch = 1;
  r.val_acc = 0.6;
  r.val_loss = 1.0;
  CHECK(end_of_epoch(state, r, cb, params).new_best);
  r.epoch = 2;
  CHECK_FALSE(end_of_epoch(state, r, cb, params).new_best);
  CHECK(state.best_epoch == 1);
  CHECK(calls == 1);
}

TEST_CASE("divergence preserves completed history") {
  ReferenceModel model(3, 2, 0.0);
  ScriptedTask task({0.5, 0.6, 0.7}, {1.0, std::numeric_limits<double>::quiet_NaN(), 0.8});
  try {
    run_training(model, task, phases(3, 7), CallbackConfig{});
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    REQUIRE(e.history().size() == 1);
    CHECK(e.history()[0].val_acc == 0.5);
  }
  ScriptedTask inf_train({0.5}, {1.0});
  inf_train.train_loss_override = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(run_training(model, inf_train, phases(3, 7), CallbackConfig{}), DivergenceError);
}

TEST_CASE("run_training rejects bad phases") {
  ReferenceModel model(3, 2, 0.0);
  ScriptedTask task({0.5}, {1.0});
  CHECK_THROWS_AS(run_training(model, task, {}, CallbackConfig{}), ConfigError);
  CHECK_THROWS_AS(run_training(model, task, phases(0, 7), CallbackConfig{}), ConfigError);
}

TEST_CASE("history csv round trip") {
  std::vector<EpochRecord> h;
  for (int e = 1; e <= 4; ++e)
    h.push_back({e, e <= 3 ? "warmup" : "finetune", 1e-3 / e, 1.0 / e, 0.1 * e, 1.1 / e, 0.2 * e});
  std::string text = history_csv_header() + "\n";
  for (const auto& r : h) text += history_csv_row(r) + "\n";
  const auto back = parse_history_csv(text);
  REQUIRE(back.size() == h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    CHECK(back[i].epoch == h[i].epoch);
    CHECK(back[i].phase == h[i].phase);
    CHECK(back[i].lr == doctest::Approx(h[i].lr).epsilon(1e-11));
    CHECK(back[i].val_acc == doctest::Approx(h[i].val_acc).epsilon(1e-11));
  }

  CHECK_THROWS_AS(parse_history_csv(""), ParseError);
  CHECK_THROWS_AS(parse_history_csv("epoch,lr\n"), ParseError);
  try {
    parse_history_csv(history_csv_header() + "\n1,warmup,0.001,1,0.5,1,0.5\n2,warmup,abc,1,0.5,1,0.5\n");
    FAIL("expected parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_history_csv(history_csv_header() + "\n2,w,1,1,1,1,1\n1,w,1,1,1,1,1\n"), ParseError);
  CHECK_THROWS_AS(parse_history_csv(history_csv_header() + "\n1,w,1,1,1\n"), ParseError);
}
