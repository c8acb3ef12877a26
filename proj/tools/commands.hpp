#pragma once

#include "fer/config.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace fer::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kParseError = 2,
  kConfigError = 3,
  kDivergence = 4,
  kAdapterUnavailable = 5,
  kInputError = 6,
};

struct PrepareOptions {
  std::string csv;
  std::string out_dir;
  std::uint64_t seed = 42;
  std::string train_fraction = "7/8";
  int num_classes = 7;
};

struct TrainOptions {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

struct EvaluateOptions {
  std::string checkpoint;
  std::string config;
  std::string manifest; ///< overrides the config's manifest when set
  std::string partition; ///< PrivateTest | PublicTest | validation; empty = config default
  std::string out_dir;
};

struct ReportOptions {
  std::string history;
  std::string metadata; ///< optional run metadata for phase boundaries
  std::string out_dir;
};

/// Each command writes only under its output directory and returns an ExitCode.
int cmd_prepare(const PrepareOptions& opts, std::ostream& out, std::ostream& err);
int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err);
int cmd_evaluate(const EvaluateOptions& opts, std::ostream& out, std::ostream& err);
int cmd_report(const ReportOptions& opts, std::ostream& out, std::ostream& err);

} // namespace fer::cli
