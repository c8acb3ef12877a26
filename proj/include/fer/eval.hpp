#pragma once

#include "fer/controller.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fer {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  CountMatrix counts;

  int num_classes() const { return static_cast<int>(counts.rows()); }
  std::int64_t total() const { return counts.sum(); }
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, int num_classes);

struct ClassReport {
  Eigen::VectorXd precision;
  Eigen::VectorXd recall;
  Eigen::VectorXd f1;
  std::vector<std::int64_t> support;
  std::int64_t total = 0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  // support-weighted means; the "Overall" row of the per-class table
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
};

/// 2PR / (P + R), or 0 when P + R == 0.
double f1_score(double precision, double recall);

/// Precision of a class that is never predicted is 0. Throws InputError on an empty matrix.
ClassReport report(const ConfusionMatrix& matrix);

/// Each non-empty row divided by its sum; empty rows stay zero.
Eigen::MatrixXd normalize_rows(const ConfusionMatrix& matrix);

/// Fixed-point text rounded half away from zero at `decimals` places. A relative
/// guard of 1e-9 absorbs binary representation error (0.285 -> "0.29").
std::string format_half_up(double value, int decimals);

struct PriorWorkRow {
  std::string model;
  std::string accuracy; ///< percent, verbatim as cited (may be a range)
  std::string params;   ///< millions, verbatim as cited
  std::string source;
};

std::vector<PriorWorkRow> parse_prior_work(std::string_view json_text);
std::vector<PriorWorkRow> load_prior_work(const std::string& path);

struct RenderMetadata {
  std::string model_name = "Reference softmax regression";
  std::optional<double> test_loss;
  std::int64_t param_count = 0;
  std::vector<std::string> class_names; ///< display names, defaults to capitalised emotion names
  std::vector<PriorWorkRow> prior_work;
};

struct RenderedTables {
  std::string performance; ///< accuracy, loss, parameter count
  std::string per_class;   ///< precision / recall / F1 per class plus Overall
  std::string comparison;  ///< cited prior rows plus this run
};

/// LaTeX tabular fragments.
RenderedTables render_tables(const ClassReport& report, const RenderMetadata& metadata);
std::string render_per_class_row(std::string_view name, double precision, double recall, double f1);

struct CurveFiles {
  std::string accuracy;
  std::string loss;
};

/// Two CSV files with columns epoch,train,validation. When phase epoch counts are given,
/// a leading "# phase_boundary_after_epoch=N" row marks each boundary.
CurveFiles export_curves(std::span<const EpochRecord> history, std::span<const int> phase_epochs = {});

struct Curve {
  std::vector<int> phase_boundaries;
  std::vector<int> epochs;
  std::vector<double> train;
  std::vector<double> validation;
};

Curve parse_curve_csv(std::string_view text);

/// Matrix as CSV with a header of class names; rows are true classes.
std::string matrix_csv(const Eigen::MatrixXd& m, std::span<const std::string> class_names);
std::string matrix_csv(const CountMatrix& m, std::span<const std::string> class_names);

std::vector<std::string> display_class_names(int num_classes);

} // namespace fer
