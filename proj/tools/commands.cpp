#include "commands.hpp"

#include "fer/checkpoint.hpp"
#include "fer/controller.hpp"
#include "fer/digest.hpp"
#include "fer/errors.hpp"
#include "fer/eval.hpp"
#include "fer/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

namespace fer::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view contents) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + p.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw InputError("failed writing " + p.string());
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("an output directory is required (--out)");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create " + dir + ": " + ec.message());
}

/// Maps the library's exception types onto exit statuses.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const DivergenceError& e) {
    err << "error: diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const AdapterUnavailableError& e) {
    err << "error: adapter unavailable: " << e.what() << "\n";
    return kAdapterUnavailable;
  } catch (const ParseError& e) {
    err << "error: parse: " << e.what() << "\n";
    return kParseError;
  } catch (const ConfigError& e) {
    err << "error: config: " << e.what() << "\n";
    return kConfigError;
  } catch (const EmptyClassError& e) {
    err << "error: config: " << e.what() << "\n";
    return kConfigError;
  } catch (const UnsplittableClassError& e) {
    err << "error: input: " << e.what() << "\n";
    return kInputError;
  } catch (const InputError& e) {
    err << "error: input: " << e.what() << "\n";
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: input: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

ojson design_choices(const RunConfig& c) {
  return {{"class_weight_formula", "min(cap, N / (K * n_c)) on the training split"},
          {"batch_loss_normalization", c.loss.normalize_by_weight_sum ? "sum of sample weights" : "batch size"},
          {"validation_loss", "smoothed cross-entropy without class weights"},
          {"augment_order", "affine warp at 48x48 before resize"},
          {"warp_interpolation", "nearest neighbour, edge replication"},
          {"shear", "x-axis shear angle in radians (x' = x + tan(shear) * y)"},
          {"shift_frame", "fraction of the 48-pixel source side"},
          {"resize", "bilinear, half-pixel centres"},
          {"optimizer_defaults", "beta1 0.9, beta2 0.999, eps 1e-8; no decay on biases or normalization"},
          {"checkpoint_monitor", "val_acc, earliest epoch wins ties"},
          {"early_stopping_monitor", monitor_name(c.callbacks.early_stop.monitor)},
          {"plateau_monitor", monitor_name(c.callbacks.plateau.monitor)},
          {"phase_boundary", "optimizer state and lr reset; early-stop and plateau counters carry over"},
          {"eval_partition_default", usage_name(c.data.eval_partition)}};
}

std::unique_ptr<TrainableModel> build_model(const RunConfig& c) {
  if (c.backend.kind == BackendKind::ExternalAdapter) {
    AdapterConfig ac;
    ac.runtime = c.backend.runtime;
    ac.weights_source = c.backend.weights_source;
    ac.head = HeadSpec{c.backend.feature_dim, c.backend.dropout, c.num_classes};
    return backbone_adapter_build(ac);
  }
  const Eigen::Index dim = static_cast<Eigen::Index>(c.backend.feature_side) * c.backend.feature_side;
  return reference_model_build(dim, c.num_classes, c.backend.dropout);
}

FeatureConfig feature_config(const RunConfig& c) {
  FeatureConfig f;
  f.input.side = c.backend.input_side;
  f.feature_side = c.backend.feature_side;
  f.workers = c.data.workers;
  return f;
}

struct LoadedData {
  std::vector<Sample> samples;
  SplitManifest manifest;
  std::string csv_digest;
};

LoadedData load_data(const std::string& csv, const std::string& manifest_path) {
  if (csv.empty()) throw ConfigError("data.csv is not set");
  if (manifest_path.empty()) throw ConfigError("data.manifest is not set");
  LoadedData d;
  d.manifest = manifest_from_json(read_file(manifest_path));
  d.csv_digest = sha256_file_hex(csv);
  if (!d.manifest.source_digest.empty() && d.manifest.source_digest != d.csv_digest)
    throw InputError("manifest " + manifest_path + " was prepared from a different CSV");
  d.samples = load_fer_csv(csv);
  auto check = [&](const std::vector<std::size_t>& idx, Usage expected, const char* what) {
    for (auto i : idx)
      if (i >= d.samples.size() || d.samples[i].usage != expected)
        throw InputError(std::string("manifest ") + what + " index " + std::to_string(i) +
                         " does not refer to a " + std::string(usage_name(expected)) + " row");
  };
  check(d.manifest.train_indices, Usage::Training, "train");
  check(d.manifest.val_indices, Usage::Training, "validation");
  check(d.manifest.public_test_indices, Usage::PublicTest, "public test");
  check(d.manifest.private_test_indices, Usage::PrivateTest, "private test");
  return d;
}

} // namespace

int cmd_prepare(const PrepareOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Fraction fraction = Fraction::parse(opts.train_fraction);
    if (opts.num_classes < 2 || opts.num_classes > kNumEmotions) throw ConfigError("--num-classes must lie in 2..7");
    if (!fs::exists(opts.csv)) throw InputError("dataset " + opts.csv + " does not exist");
    // Everything is computed before the output directory is touched.
    const auto samples = load_fer_csv(opts.csv);
    const auto csv_digest = sha256_file_hex(opts.csv);
    const auto manifest = make_manifest(samples, fraction, opts.seed, opts.num_classes, csv_digest);

    const auto train = gather(samples, manifest.train_indices);
    const auto val = gather(samples, manifest.val_indices);
    std::vector<Sample> training_rows;
    for (const auto& s : samples)
      if (s.usage == Usage::Training) training_rows.push_back(s);
    ojson counts;
    counts["class_names"] = std::vector<std::string>(kEmotionNames.begin(), kEmotionNames.begin() + opts.num_classes);
    counts["training_partition"] = class_counts(training_rows, opts.num_classes);
    counts["train"] = class_counts(train, opts.num_classes);
    counts["validation"] = class_counts(val, opts.num_classes);
    counts["public_test"] = class_counts(gather(samples, manifest.public_test_indices), opts.num_classes);
    counts["private_test"] = class_counts(gather(samples, manifest.private_test_indices), opts.num_classes);
    counts["total_rows"] = samples.size();

    RunConfig config;
    config.seed = opts.seed;
    config.num_classes = opts.num_classes;
    config.loss.num_classes = opts.num_classes;
    config.data.csv = fs::absolute(opts.csv).lexically_normal().string();
    config.data.manifest = "manifest.json";
    config.data.train_fraction = fraction;

    ensure_dir(opts.out_dir);
    const fs::path dir(opts.out_dir);
    write_file(dir / "manifest.json", manifest_to_json(manifest));
    write_file(dir / "class_counts.json", counts.dump(2) + "\n");
    if (!fs::exists(dir / "config.json")) write_file(dir / "config.json", config_to_json(config).dump(2) + "\n");

    out << "rows " << samples.size() << " train " << manifest.train_indices.size() << " val "
        << manifest.val_indices.size() << " public_test " << manifest.public_test_indices.size() << " private_test "
        << manifest.private_test_indices.size() << "\n";
    out << "manifest digest " << manifest.digest << "\n";
    return int{kOk};
  });
}

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.config.empty()) throw ConfigError("--config is required");
    RunConfig config = load_config(opts.config);
    if (opts.seed) config.seed = *opts.seed;
    config.validate();
    auto model = build_model(config);

    const auto data = load_data(config.data.csv, config.data.manifest);
    auto train = gather(data.samples, data.manifest.train_indices);
    const auto val = gather(data.samples, data.manifest.val_indices);
    const auto train_counts = class_counts(train, config.num_classes);
    const ClassWeights weights = config.loss.class_weighting
                                     ? compute_class_weights(train_counts, config.loss.weight_cap)
                                     : uniform_class_weights(config.num_classes);

    ensure_dir(opts.out_dir);
    const fs::path dir(opts.out_dir);
    const std::string digest = config_digest(config);

    TaskConfig task_cfg;
    task_cfg.seed = config.seed;
    task_cfg.batch_size = config.batch_size;
    task_cfg.augment = config.augment;
    task_cfg.features = feature_config(config);
    task_cfg.loss = config.loss;
    SupervisedTask task(std::move(train), val, weights, task_cfg);

    std::ofstream history(dir / "history.csv", std::ios::trunc);
    if (!history) throw InputError("cannot write history.csv");
    history << history_csv_header() << "\n" << std::flush;

    const fs::path ckpt_path = dir / "checkpoint.bin";
    TrainingHooks hooks;
    hooks.on_record = [&](const EpochRecord& r) {
      history << history_csv_row(r) << "\n" << std::flush;
      out << history_csv_row(r) << "\n";
    };
    hooks.on_best = [&](const EpochRecord& r, const TrainableModel& m) {
      ojson meta = {{"config_sha256", digest},
                    {"manifest_digest", data.manifest.digest},
                    {"backend", m.backend_name()},
                    {"num_classes", m.num_classes()},
                    {"input_dim", m.input_dim()},
                    {"epoch", r.epoch},
                    {"val_acc", r.val_acc},
                    {"val_loss", r.val_loss}};
      write_checkpoint(ckpt_path, make_checkpoint(m, meta));
    };

    ojson meta;
    meta["config"] = config_to_json(config);
    meta["config_sha256"] = digest;
    meta["seed"] = config.seed;
    meta["csv_sha256"] = data.csv_digest;
    meta["manifest_digest"] = data.manifest.digest;
    meta["effective_label_smoothing"] = config.loss.effective_epsilon();
    meta["train_class_counts"] = train_counts;
    meta["class_weights"] = weights.weights;
    meta["class_weights_unclipped"] = weights.unclipped;
    meta["phase_epochs"] = ojson::array();
    for (const auto& p : config.phases) meta["phase_epochs"].push_back(p.epochs);
    meta["param_count_total"] = count_params(*model);
    if (config.backend.kind == BackendKind::ExternalAdapter) {
      if (auto w = param_budget_warning(count_params(*model))) {
        err << "warning: " << *w << "\n";
        meta["param_count_warning"] = *w;
      }
    }
    meta["mixed_precision"] = {{"requested", config.mixed_precision}, {"honored", false}};
    meta["design_choices"] = design_choices(config);

    TrainingResult result;
    try {
      result = run_training(*model, task, config.phases, config.callbacks, hooks);
    } catch (const DivergenceError& e) {
      meta["status"] = "diverged";
      meta["error"] = e.what();
      meta["epochs_completed"] = e.history().size();
      write_file(dir / "metadata.json", meta.dump(2) + "\n");
      throw;
    }
    meta["param_count_trainable_final_phase"] = count_params(*model, true);
    meta["status"] = result.stopped_early ? "early_stopped" : "completed";
    meta["epochs_completed"] = result.history.size();
    meta["best_epoch"] = result.best_epoch;
    const std::string ckpt_digest = sha256_file_hex(ckpt_path);
    meta["checkpoint_sha256"] = ckpt_digest;
    write_file(dir / "metadata.json", meta.dump(2) + "\n");

    out << "best epoch " << result.best_epoch << (result.stopped_early ? " (early stop)" : "") << "\n";
    out << "checkpoint sha256 " << ckpt_digest << "\n";
    return int{kOk};
  });
}

int cmd_evaluate(const EvaluateOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.config.empty()) throw ConfigError("--config is required");
    if (opts.checkpoint.empty()) throw ConfigError("--checkpoint is required");
    const RunConfig config = load_config(opts.config);
    const std::string manifest_path = opts.manifest.empty() ? config.data.manifest : opts.manifest;
    const auto data = load_data(config.data.csv, manifest_path);

    const auto ckpt = read_checkpoint(opts.checkpoint);
    if (ckpt.metadata.contains("manifest_digest") &&
        ckpt.metadata.at("manifest_digest").get<std::string>() != data.manifest.digest)
      throw InputError("checkpoint was trained against a different split manifest");
    auto model = build_model(config);
    load_checkpoint(*model, ckpt);

    std::string partition_name = opts.partition.empty() ? std::string(usage_name(config.data.eval_partition))
                                                        : opts.partition;
    const std::vector<std::size_t>* indices = nullptr;
    if (partition_name == "validation") {
      indices = &data.manifest.val_indices;
    } else {
      Usage u;
      try {
        u = parse_usage(partition_name);
      } catch (const PartitionError&) {
        throw InputError("unknown partition '" + partition_name + "'");
      }
      if (u == Usage::Training) throw InputError("evaluate on 'validation' rather than 'Training'");
      indices = &data.manifest.test_indices(u);
    }
    if (indices->empty()) throw InputError("partition '" + partition_name + "' has no rows in the manifest");

    const auto samples = gather(data.samples, *indices);
    std::vector<int> truths;
    for (const auto& s : samples) {
      if (s.label >= config.num_classes)
        throw InputError("partition contains label " + std::to_string(s.label) + " outside the configured classes");
      truths.push_back(s.label);
    }
    const Eigen::MatrixXd features = extract_features(samples, feature_config(config));
    const auto metrics = evaluate_model(*model, features, truths, config.loss);
    const auto preds = predict(*model, features);
    const auto cm = confusion(preds, truths, config.num_classes);
    const auto rep = report(cm);

    RenderMetadata rm;
    rm.model_name = model->backend_name() == "reference" ? "Reference softmax regression" : model->backend_name();
    rm.test_loss = metrics.loss;
    rm.param_count = count_params(*model);
    if (!config.prior_work.empty()) rm.prior_work = load_prior_work(config.prior_work);
    const auto tables = render_tables(rep, rm);
    const auto names = display_class_names(config.num_classes);

    ensure_dir(opts.out_dir);
    const fs::path dir(opts.out_dir);
    ojson m;
    m["partition"] = partition_name;
    m["samples"] = rep.total;
    m["accuracy"] = rep.accuracy;
    m["loss"] = metrics.loss;
    m["per_class"] = ojson::array();
    for (int c = 0; c < config.num_classes; ++c)
      m["per_class"].push_back({{"class", names[static_cast<std::size_t>(c)]},
                                {"precision", rep.precision(c)},
                                {"recall", rep.recall(c)},
                                {"f1", rep.f1(c)},
                                {"support", rep.support[static_cast<std::size_t>(c)]}});
    m["macro"] = {{"precision", rep.macro_precision}, {"recall", rep.macro_recall}, {"f1", rep.macro_f1}};
    m["weighted"] = {{"precision", rep.weighted_precision}, {"recall", rep.weighted_recall}, {"f1", rep.weighted_f1}};
    m["param_count"] = rm.param_count;
    write_file(dir / "metrics.json", m.dump(2) + "\n");
    write_file(dir / "summary_tables.tex", tables.performance + "\n" + tables.comparison);
    write_file(dir / "per_class_table.tex", tables.per_class);
    write_file(dir / "confusion_counts.csv", matrix_csv(cm.counts, names));
    write_file(dir / "confusion_normalized.csv", matrix_csv(normalize_rows(cm), names));

    ojson meta;
    meta["checkpoint"] = fs::absolute(opts.checkpoint).lexically_normal().string();
    meta["checkpoint_sha256"] = sha256_file_hex(opts.checkpoint);
    meta["checkpoint_metadata"] = ckpt.metadata;
    meta["config_sha256"] = config_digest(config);
    meta["manifest_digest"] = data.manifest.digest;
    meta["partition"] = partition_name;
    meta["augmentation"] = "none (preprocessing only)";
    meta["mixed_precision"] = {{"requested", config.mixed_precision}, {"honored", false}};
    write_file(dir / "metadata.json", meta.dump(2) + "\n");

    out << "partition " << partition_name << " samples " << rep.total << " accuracy "
        << format_half_up(rep.accuracy * 100.0, 2) << "%\n";
    return int{kOk};
  });
}

int cmd_report(const ReportOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.history.empty()) throw ConfigError("--history is required");
    const auto history = parse_history_csv(read_file(opts.history));
    if (history.empty()) throw InputError("history " + opts.history + " has no epochs");

    std::vector<int> phase_epochs;
    fs::path meta_path = opts.metadata.empty() ? fs::path(opts.history).parent_path() / "metadata.json"
                                               : fs::path(opts.metadata);
    if (fs::exists(meta_path)) {
      try {
        const auto meta = nlohmann::json::parse(read_file(meta_path));
        if (meta.contains("phase_epochs")) phase_epochs = meta.at("phase_epochs").get<std::vector<int>>();
      } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed run metadata " + meta_path.string() + ": " + e.what());
      }
    } else if (!opts.metadata.empty()) {
      throw InputError("metadata " + opts.metadata + " does not exist");
    }

    const auto curves = export_curves(history, phase_epochs);
    const auto best = std::max_element(history.begin(), history.end(),
                                       [](const EpochRecord& a, const EpochRecord& b) { return a.val_acc < b.val_acc; });

    std::ostringstream summary;
    summary << "epochs " << history.size() << "\n";
    summary << "final val_acc " << format_half_up(history.back().val_acc, 4) << " (epoch " << history.back().epoch
            << ")\n";
    summary << "best val_acc " << format_half_up(best->val_acc, 4) << " (epoch " << best->epoch << ")\n";
    summary << "final val_loss " << format_half_up(history.back().val_loss, 4) << "\n";
    if (!phase_epochs.empty()) {
      int cumulative = 0;
      for (std::size_t i = 0; i + 1 < phase_epochs.size(); ++i) {
        cumulative += phase_epochs[i];
        summary << "phase boundary after epoch " << cumulative << "\n";
      }
    }

    ensure_dir(opts.out_dir);
    const fs::path dir(opts.out_dir);
    write_file(dir / "curve_accuracy.csv", curves.accuracy);
    write_file(dir / "curve_loss.csv", curves.loss);
    write_file(dir / "summary.txt", summary.str());
    out << summary.str();
    return int{kOk};
  });
}

} // namespace fer::cli
