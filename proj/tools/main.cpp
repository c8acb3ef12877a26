#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Facial-emotion training and evaluation pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 42;
  std::string config;
  std::string out;
  auto* seed_opt = app.add_option("--seed", seed, "Global random seed")->capture_default_str();
  app.add_option("--config", config, "Run configuration file (JSON)");
  app.add_option("--out", out, "Output directory");

  fer::cli::PrepareOptions prep;
  auto* prepare = app.add_subcommand("prepare", "Parse the dataset CSV and write the split manifest");
  prepare->add_option("--csv", prep.csv, "FER-2013 CSV file")->required();
  prepare->add_option("--train-fraction", prep.train_fraction, "Training share of the Training rows")
      ->capture_default_str();
  prepare->add_option("--num-classes", prep.num_classes, "Number of label classes")->capture_default_str();

  fer::cli::EvaluateOptions eval;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint and write the report bundle");
  evaluate->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  evaluate->add_option("--manifest", eval.manifest, "Split manifest (defaults to the config's)");
  evaluate->add_option("--partition", eval.partition, "PrivateTest, PublicTest or validation");

  auto* train = app.add_subcommand("train", "Run two-phase training");

  fer::cli::ReportOptions rep;
  auto* report = app.add_subcommand("report", "Export learning curves and a run summary");
  report->add_option("--history", rep.history, "History CSV written by train")->required();
  report->add_option("--metadata", rep.metadata, "Run metadata (defaults to metadata.json beside the history)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fer::cli::kParseError;
  }

  if (prepare->parsed()) {
    prep.out_dir = out;
    prep.seed = seed;
    return fer::cli::cmd_prepare(prep, std::cout, std::cerr);
  }
  if (train->parsed()) {
    fer::cli::TrainOptions t{config, out, std::nullopt};
    if (seed_opt->count() > 0) t.seed = seed;
    return fer::cli::cmd_train(t, std::cout, std::cerr);
  }
  if (evaluate->parsed()) {
    eval.config = config;
    eval.out_dir = out;
    return fer::cli::cmd_evaluate(eval, std::cout, std::cerr);
  }
  rep.out_dir = out;
  return fer::cli::cmd_report(rep, std::cout, std::cerr);
}
