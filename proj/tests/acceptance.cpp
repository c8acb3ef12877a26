// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Set FER2013_CSV to the distributed fer2013.csv to run AC3/AC4 on the real file;
// otherwise a stand-in with the same label histogram per partition is generated.

#include "commands.hpp"
#include "fer/controller.hpp"
#include "fer/dataset.hpp"
#include "fer/digest.hpp"
#include "fer/eval.hpp"
#include "fer/loss.hpp"
#include "fer/model.hpp"
#include "fer/optim.hpp"
#include "fer/random.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace fer;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

struct Criterion {
  const char* id;
  const char* title;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shared by AC3 and AC4 so the large CSV is only produced once.
struct DatasetFixture {
  std::string source; ///< "real" or "stand-in"
  fs::path path;
  std::vector<Sample> samples;
};

DatasetFixture& dataset_fixture() {
  static DatasetFixture d = [] {
    DatasetFixture f;
    if (const char* env = std::getenv("FER2013_CSV"); env && *env) {
      f.source = "real";
      f.path = env;
    } else {
      f.source = "stand-in";
      f.path = fs::temp_directory_path() / "fer_acceptance_fer2013.csv";
      std::ofstream(f.path, std::ios::binary) << testing::histogram_csv(testing::fer2013_histogram(), 2013);
    }
    f.samples = load_fer_csv(f.path.string());
    return f;
  }();
  return d;
}

Outcome ac1_loss_math() {
  Outcome o;
  const auto t = smooth_labels(one_hot<double>(3, 7), 0.06);
  o.require(std::abs(t(3) - 0.9485714285714286) < 1e-9, "smoothed true class " + fmt("%.16g", t(3)));
  for (int k = 0; k < 7; ++k)
    if (k != 3) o.require(std::abs(t(k) - 0.008571428571428572) < 1e-9, "smoothed off class");
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(7, 1.0 / 7);
  const double l = weighted_ce(uniform, t, 1.0);
  o.require(std::abs(l - std::log(7.0)) < 1e-9, "uniform loss " + fmt("%.16g", l));
  o.detail = o.pass ? "target " + fmt("%.16g", t(3)) + ", uniform loss " + fmt("%.16g", l) : o.detail;
  return o;
}

Outcome ac2_gradients() {
  Outcome o;
  KeyedRng rng{2};
  double worst_logit = 0.0, worst_param = 0.0;
  for (int c = 0; c < 50; ++c) {
    Eigen::VectorXd z(7);
    for (auto& v : z) v = rng.uniform(-3, 3);
    const auto t = smooth_labels(one_hot<double>(static_cast<int>(rng.below(7)), 7), 0.06);
    const double w = rng.uniform(0.5, 4.0);
    const auto g = ce_grad_logits(z, t, w);
    const auto n = testing::central_difference([&](const Eigen::VectorXd& x) { return testing::naive_ce(x, t, w); },
                                               z, 1e-4);
    worst_logit = std::max(worst_logit, testing::max_relative_error(g, n));
  }
  for (int c = 0; c < 50; ++c) {
    ReferenceModel model(8, 7, 0.5);
    for (std::size_t gi : {std::size_t{1}, std::size_t{2}})
      for (auto& v : model.parameter_groups()[gi].values) v = rng.uniform(-1.5, 1.5);
    Eigen::MatrixXd x(4, 8);
    for (auto& v : x.reshaped()) v = rng.uniform(0, 1);
    std::vector<int> y(4);
    std::vector<std::uint64_t> keys(4);
    for (std::size_t i = 0; i < 4; ++i) {
      y[i] = static_cast<int>(rng.below(7));
      keys[i] = rng.next();
    }
    auto loss = [&](const ReferenceModel& m) {
      const Eigen::MatrixXd z = m.logits(x, true, keys);
      double s = 0;
      for (Eigen::Index i = 0; i < 4; ++i)
        s += testing::naive_ce(z.row(i).transpose(), smooth_labels(one_hot<double>(y[static_cast<std::size_t>(i)], 7), 0.06), 1.0);
      return s / 4.0;
    };
    const Eigen::MatrixXd z = model.logits(x, true, keys);
    Eigen::MatrixXd dz(4, 7);
    for (Eigen::Index i = 0; i < 4; ++i)
      dz.row(i) = ce_grad_logits(z.row(i).transpose(), smooth_labels(one_hot<double>(y[static_cast<std::size_t>(i)], 7), 0.06), 1.0)
                      .transpose() / 4.0;
    const auto grads = model.backward(x, dz, true, keys);
    for (std::size_t gi : {std::size_t{1}, std::size_t{2}}) {
      const auto numeric = testing::central_difference(
          [&](const Eigen::VectorXd& v) {
            ReferenceModel m = model;
            m.parameter_groups()[gi].values = v;
            return loss(m);
          },
          model.parameter_groups()[gi].values, 1e-4);
      worst_param = std::max(worst_param, testing::max_relative_error(grads[gi], numeric));
    }
  }
  o.require(worst_logit < 1e-5, "logit gradient rel err " + fmt("%.3g", worst_logit));
  o.require(worst_param < 1e-5, "parameter gradient rel err " + fmt("%.3g", worst_param));
  if (o.pass) o.detail = "max rel err logits " + fmt("%.2e", worst_logit) + ", params " + fmt("%.2e", worst_param);
  return o;
}

Outcome ac3_class_weights() {
  Outcome o;
  const std::vector<std::int64_t> even{50, 50, 50, 50, 50, 50, 50};
  for (double w : compute_class_weights(even, 4.0).weights) o.require(w == 1.0, "uniform counts weight != 1");
  const std::vector<std::int64_t> skew{96, 4};
  const auto s = compute_class_weights(skew, 4.0);
  o.require(std::abs(s[0] - 0.5208333333333334) < 1e-9 && std::abs(s[1] - 4.0) < 1e-9, "(96,4) weights");

  auto& d = dataset_fixture();
  const auto manifest = make_manifest(d.samples, Fraction{7, 8}, 42);
  const auto counts = class_counts(gather(d.samples, manifest.train_indices));
  const auto w = compute_class_weights(counts, 4.0);
  o.require(w[1] == 4.0, "disgust weight " + fmt("%.6g", w[1]));
  o.require(w.unclipped[1] > 4.0, "disgust pre-clip " + fmt("%.6g", w.unclipped[1]));
  if (o.pass)
    o.detail = d.source + " CSV (" + std::to_string(d.samples.size()) + " rows): disgust pre-clip " +
               fmt("%.4f", w.unclipped[1]) + " -> 4.0";
  return o;
}

Outcome ac4_split() {
  Outcome o;
  auto& d = dataset_fixture();
  const auto digest = sha256_file_hex(d.path);
  const auto a = make_manifest(d.samples, Fraction{7, 8}, 42, kNumEmotions, digest);
  const auto b = make_manifest(d.samples, Fraction{7, 8}, 42, kNumEmotions, digest);
  o.require(a.digest == b.digest, "digests differ between runs");

  std::vector<Sample> training_rows, public_rows, private_rows;
  for (const auto& s : d.samples)
    (s.usage == Usage::Training ? training_rows : s.usage == Usage::PublicTest ? public_rows : private_rows).push_back(s);
  const auto total = class_counts(training_rows);
  const auto train = class_counts(gather(d.samples, a.train_indices));
  double worst = 0.0;
  for (std::size_t c = 0; c < total.size(); ++c)
    worst = std::max(worst, std::abs(static_cast<double>(train[c]) - 0.875 * static_cast<double>(total[c])));
  o.require(worst <= 1.0, "train share off by " + fmt("%.3f", worst) + " samples");
  o.require(a.train_indices.size() + a.val_indices.size() == training_rows.size(), "training rows lost");
  o.require(serialize_samples(gather(d.samples, a.public_test_indices)) == serialize_samples(public_rows),
            "PublicTest changed");
  o.require(serialize_samples(gather(d.samples, a.private_test_indices)) == serialize_samples(private_rows),
            "PrivateTest changed");
  if (o.pass)
    o.detail = d.source + " CSV: max deviation " + fmt("%.3f", worst) + " samples, digest " + a.digest.substr(0, 12);
  return o;
}

Outcome ac5_optimizer() {
  Outcome o;
  KeyedRng rng{5};
  Eigen::VectorXd diag(6), center(6), a(6);
  for (Eigen::Index i = 0; i < 6; ++i) {
    diag(i) = rng.uniform(0.5, 5);
    center(i) = rng.uniform(-2, 2);
    a(i) = rng.uniform(-2, 2);
  }
  Eigen::VectorXd b = a;
  OptimState<double> sa(6), sb(6);
  OptimConfig cfg;
  cfg.learning_rate = 1e-2;
  double diff = 0.0;
  for (int s = 0; s < 100; ++s) {
    adam_step(a, Eigen::VectorXd(diag.cwiseProduct(a - center)), sa, cfg);
    adamw_step(b, Eigen::VectorXd(diag.cwiseProduct(b - center)), sb, cfg);
    diff = std::max(diff, (a - b).cwiseAbs().maxCoeff());
  }
  o.require(diff <= 1e-12, "AdamW(wd=0) vs Adam diff " + fmt("%.3g", diff));

  Eigen::VectorXd theta = Eigen::VectorXd::Ones(1);
  OptimState<double> st(1);
  OptimConfig dc;
  dc.kind = OptimizerKind::AdamW;
  dc.learning_rate = 0.1;
  dc.weight_decay = 0.5;
  adamw_step(theta, Eigen::VectorXd::Zero(1).eval(), st, dc);
  o.require(theta(0) == 0.95, "decay-only step gave " + fmt("%.17g", theta(0)));

  auto descend = [](double lr) {
    Eigen::VectorXd q = Eigen::VectorXd::Constant(1, 1.0);
    OptimState<double> sq(1);
    OptimConfig qc;
    qc.learning_rate = lr;
    int steps = 0;
    while (std::abs(q(0)) >= 1e-3 && steps < 2000) {
      adam_step(q, Eigen::VectorXd(2.0 * q), sq, qc);
      ++steps;
    }
    return std::pair{q(0), steps};
  };
  const auto [q, steps] = descend(1e-3);
  if (std::abs(q) >= 1e-3) {
    const auto [q2, steps2] = descend(1e-2);
    o.require(false, "Adam lr 1e-3 on theta^2 ends at " + fmt("%.4g", q) + " after 2000 steps (lr 1e-2: " +
                         fmt("%.2g", q2) + " after " + std::to_string(steps2) + ")");
  }
  if (o.pass) o.detail = "max diff " + fmt("%.1e", diff) + ", decay step 0.95, converged in " + std::to_string(steps) + " steps";
  return o;
}

std::vector<EpochRecord> loss_history(std::initializer_list<double> losses) {
  std::vector<EpochRecord> h;
  for (double l : losses) h.push_back({static_cast<int>(h.size()) + 1, "p", 0, 0, 0, l, 1 - l});
  return h;
}

Outcome ac6_controller() {
  Outcome o;
  struct PlateauCase {
    std::initializer_list<double> losses;
    int fires_at;
    double lr_factor;
  };
  const PlateauCase plateau_cases[] = {
      {{1.0, 0.9, 0.95, 0.92}, 4, 0.3},
      {{1.0, 0.9, 0.95, 0.92, 0.93, 0.94}, 6, 0.09},
      {{1.0, 0.9, 0.8, 0.7}, 0, 1.0},
  };
  for (const auto& c : plateau_cases) {
    const auto h = loss_history(c.losses);
    double lr = 1.0;
    int wait = 0, last = 0;
    for (std::size_t i = 1; i <= h.size(); ++i) {
      const auto d = plateau_update(std::span(h).first(i), wait, lr, PlateauConfig{});
      if (d.reduced) last = static_cast<int>(i);
      lr = d.lr;
      wait = d.wait;
    }
    o.require(last == c.fires_at, "plateau fired at " + std::to_string(last));
    o.require(std::abs(lr - c.lr_factor) < 1e-15, "plateau lr factor " + fmt("%.17g", lr));
  }
  struct StopCase {
    std::initializer_list<double> losses;
    int stops_after;
  };
  const StopCase stop_cases[] = {
      {{1.0, 0.8, 0.85, 0.9, 0.82, 0.7}, 5},
      {{1.0, 0.9, 0.8, 0.7, 0.6, 0.5}, 0},
  };
  for (const auto& c : stop_cases) {
    const auto h = loss_history(c.losses);
    int wait = 0, stopped = 0;
    for (std::size_t i = 1; i <= h.size() && !stopped; ++i) {
      const auto d = early_stop_update(std::span(h).first(i), wait, EarlyStopConfig{});
      wait = d.wait;
      if (d.stop) stopped = static_cast<int>(i);
    }
    o.require(stopped == c.stops_after, "early stop after " + std::to_string(stopped));
  }
  if (o.pass) o.detail = "plateau at epoch 4, lr x0.09 after two windows, stop after epoch 5";
  return o;
}

Outcome ac7_metrics() {
  Outcome o;
  struct Row {
    const char* name;
    double p, r, f1;
  };
  const Row printed[] = {{"Angry", 0.59, 0.65, 0.62},   {"Disgust", 0.55, 0.70, 0.62}, {"Fear", 0.57, 0.42, 0.48},
                         {"Happy", 0.89, 0.88, 0.88},   {"Sad", 0.58, 0.56, 0.57},     {"Surprise", 0.77, 0.82, 0.79},
                         {"Neutral", 0.63, 0.70, 0.66}};
  double worst = 0.0;
  for (const auto& r : printed) worst = std::max(worst, std::abs(f1_score(r.p, r.r) - r.f1));
  o.require(worst <= 0.01, "F1 recomputation off by " + fmt("%.4f", worst));
  o.require(render_per_class_row("Angry", 0.59, 0.65, f1_score(0.59, 0.65)) == "Angry & 0.59 & 0.65 & 0.62 \\\\",
            "Angry row does not render verbatim");

  KeyedRng rng{7};
  for (int t = 0; t < 200; ++t) {
    ConfusionMatrix m{CountMatrix::Zero(7, 7)};
    for (auto& v : m.counts.reshaped()) v = static_cast<std::int64_t>(rng.below(100));
    m.counts(t % 7, t % 7) += 1;
    const auto rep = report(m);
    const auto n = normalize_rows(m);
    for (int c = 0; c < 7; ++c)
      if (n(c, c) != rep.recall(c)) {
        o.require(false, "normalized diagonal differs from recall");
        break;
      }
  }
  if (o.pass) o.detail = "max |F1 - 2PR/(P+R)| " + fmt("%.4f", worst) + "; diagonal == recall on 200 matrices";
  return o;
}

// AC8 and AC9 share one prepared workspace.
struct DeskRun {
  fs::path root = fs::temp_directory_path() / "fer_acceptance_desk";
  fs::path config;
};

DeskRun& desk_run() {
  static DeskRun d = [] {
    DeskRun r;
    fs::remove_all(r.root);
    fs::create_directories(r.root);
    std::ofstream(r.root / "data.csv", std::ios::binary) << testing::separable_csv(100, 10, 3, 42);
    cli::PrepareOptions p;
    p.csv = (r.root / "data.csv").string();
    p.out_dir = (r.root / "prep").string();
    p.num_classes = 3;
    p.seed = 42;
    std::ostringstream out, err;
    if (cli::cmd_prepare(p, out, err) != cli::kOk) throw std::runtime_error("prepare failed: " + err.str());
    r.config = r.root / "prep" / "config.json";
    return r;
  }();
  return d;
}

Outcome ac8_end_to_end() {
  Outcome o;
  auto& d = desk_run();
  std::ostringstream out, err;
  const int rc = cli::cmd_train({d.config.string(), (d.root / "train").string(), std::nullopt}, out, err);
  o.require(rc == cli::kOk, "train exited " + std::to_string(rc) + ": " + err.str());
  if (!o.pass) return o;
  const auto history = parse_history_csv(slurp(d.root / "train" / "history.csv"));
  const auto meta = nlohmann::json::parse(slurp(d.root / "train" / "metadata.json"));
  double best = 0.0;
  for (const auto& r : history) best = std::max(best, r.val_acc);
  o.require(history.size() <= 10, "ran " + std::to_string(history.size()) + " epochs");
  o.require(meta["phase_epochs"] == nlohmann::json::array({3, 7}), "phases are not 3 + 7");
  o.require(best >= 0.95, "best validation accuracy " + fmt("%.4f", best));
  if (o.pass)
    o.detail = std::to_string(history.size()) + " epochs, best val_acc " + fmt("%.4f", best) + " (epoch " +
               std::to_string(meta["best_epoch"].get<int>()) + ")";
  return o;
}

Outcome ac9_reproducibility() {
  Outcome o;
  auto& d = desk_run();
  std::string hist[2], ckpt[2];
  for (int i = 0; i < 2; ++i) {
    const auto dir = d.root / ("repro" + std::to_string(i));
    std::ostringstream out, err;
    const int rc = cli::cmd_train({d.config.string(), dir.string(), std::nullopt}, out, err);
    o.require(rc == cli::kOk, "train exited " + std::to_string(rc));
    if (!o.pass) return o;
    hist[i] = slurp(dir / "history.csv");
    ckpt[i] = sha256_file_hex(dir / "checkpoint.bin");
  }
  o.require(hist[0] == hist[1], "history CSVs differ");
  o.require(ckpt[0] == ckpt[1], "checkpoint digests differ");
  if (o.pass) o.detail = "history identical, checkpoint sha256 " + ckpt[0].substr(0, 12);
  return o;
}

} // namespace

int main(int argc, char** argv) {
  // --expect-fail ACn marks a criterion known to be unattainable; it still prints FAIL
  // but does not change the exit status. A criterion so marked that passes is an error.
  std::set<std::string> expected;
  for (int i = 1; i + 1 < argc; i += 2)
    if (std::string(argv[i]) == "--expect-fail") expected.insert(argv[i + 1]);
  const std::vector<Criterion> criteria = {
      {"AC1", "loss math", 1, ac1_loss_math},
      {"AC2", "gradient oracle", 10, ac2_gradients},
      {"AC3", "class weights", 30, ac3_class_weights},
      {"AC4", "stratified split", 60, ac4_split},
      {"AC5", "optimizer", 5, ac5_optimizer},
      {"AC6", "controller state machines", 1, ac6_controller},
      {"AC7", "metrics regression", 1, ac7_metrics},
      {"AC8", "end-to-end desk scale", 60, ac8_end_to_end},
      {"AC9", "reproducibility", 120, ac9_reproducibility},
  };
  int failures = 0, unexpected = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs >= c.budget_seconds) {
      o.pass = false;
      o.detail += (o.detail.empty() ? "" : "; ") + std::string("over budget of ") + fmt("%.0f", c.budget_seconds) + " s";
    }
    const bool known = expected.count(c.id) > 0;
    if (o.pass == known) ++unexpected;
    failures += !o.pass;
    std::printf("%s %s [%s] %.2fs %s%s\n", c.id, o.pass ? "PASS" : "FAIL", c.title, secs, o.detail.c_str(),
                known ? (o.pass ? " (marked expected-fail but passed)" : " (expected failure)") : "");
    std::fflush(stdout);
  }
  try {
    fs::remove_all(desk_run().root);
    if (dataset_fixture().source == "stand-in") fs::remove(dataset_fixture().path);
  } catch (const std::exception&) {
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return unexpected ? 1 : 0;
}
