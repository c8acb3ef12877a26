#include "fer/eval.hpp"

#include "fer/dataset.hpp"
#include "fer/errors.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fer {

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, int num_classes) {
  if (preds.size() != truths.size()) throw InputError("predictions and truths differ in length");
  if (num_classes < 1) throw InputError("num_classes must be positive");
  ConfusionMatrix m{CountMatrix::Zero(num_classes, num_classes)};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int t = truths[i];
    const int p = preds[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
      throw InputError("label outside 0.." + std::to_string(num_classes - 1) + " at position " + std::to_string(i));
    ++m.counts(t, p);
  }
  return m;
}

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s == 0.0 ? 0.0 : 2.0 * precision * recall / s;
}

ClassReport report(const ConfusionMatrix& matrix) {
  const int k = matrix.num_classes();
  ClassReport r;
  r.total = matrix.total();
  if (r.total <= 0) throw InputError("confusion matrix is empty");
  r.precision = Eigen::VectorXd::Zero(k);
  r.recall = Eigen::VectorXd::Zero(k);
  r.f1 = Eigen::VectorXd::Zero(k);
  for (int c = 0; c < k; ++c) {
    const auto tp = static_cast<double>(matrix.counts(c, c));
    const auto predicted = static_cast<double>(matrix.counts.col(c).sum());
    const auto actual = matrix.counts.row(c).sum();
    r.support.push_back(actual);
    r.precision(c) = predicted > 0 ? tp / predicted : 0.0;
    r.recall(c) = actual > 0 ? tp / static_cast<double>(actual) : 0.0;
    r.f1(c) = f1_score(r.precision(c), r.recall(c));
  }
  r.accuracy = static_cast<double>(matrix.counts.trace()) / static_cast<double>(r.total);
  r.macro_precision = r.precision.mean();
  r.macro_recall = r.recall.mean();
  r.macro_f1 = r.f1.mean();
  for (int c = 0; c < k; ++c) {
    const double w = static_cast<double>(r.support[static_cast<std::size_t>(c)]) / static_cast<double>(r.total);
    r.weighted_precision += w * r.precision(c);
    r.weighted_recall += w * r.recall(c);
    r.weighted_f1 += w * r.f1(c);
  }
  return r;
}

Eigen::MatrixXd normalize_rows(const ConfusionMatrix& matrix) {
  Eigen::MatrixXd out = matrix.counts.cast<double>();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double s = out.row(i).sum();
    if (s > 0) out.row(i) /= s;
  }
  return out;
}

std::string format_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double scaled = std::abs(value) * scale;
  const double rounded = std::floor(scaled + 0.5 + 1e-9 * std::max(1.0, scaled));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, std::copysign(rounded / scale, value));
  std::string s(buf);
  if (rounded == 0.0 && s.front() == '-') s.erase(0, 1);
  return s;
}

std::vector<PriorWorkRow> parse_prior_work(std::string_view json_text) {
  std::vector<PriorWorkRow> rows;
  try {
    const auto j = nlohmann::json::parse(json_text);
    for (const auto& e : j.at("rows")) {
      rows.push_back({e.at("model").get<std::string>(), e.at("accuracy").get<std::string>(),
                      e.at("params_millions").get<std::string>(), e.at("source").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed prior-work file: ") + e.what());
  }
  return rows;
}

std::vector<PriorWorkRow> load_prior_work(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open prior-work file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_prior_work(ss.str());
}

std::vector<std::string> display_class_names(int num_classes) {
  std::vector<std::string> names;
  for (int c = 0; c < num_classes; ++c) {
    std::string n = c < kNumEmotions ? std::string(kEmotionNames[static_cast<std::size_t>(c)]) : "class" + std::to_string(c);
    n[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(n[0])));
    names.push_back(std::move(n));
  }
  return names;
}

std::string render_per_class_row(std::string_view name, double precision, double recall, double f1) {
  return std::string(name) + " & " + format_half_up(precision, 2) + " & " + format_half_up(recall, 2) + " & " +
         format_half_up(f1, 2) + " \\\\";
}

namespace {

std::string format_params_millions(std::int64_t n) {
  const double m = static_cast<double>(n) / 1e6;
  return format_half_up(m, m >= 1.0 ? 1 : 3);
}

} // namespace

RenderedTables render_tables(const ClassReport& report, const RenderMetadata& meta) {
  RenderedTables t;
  const auto names = meta.class_names.empty() ? display_class_names(static_cast<int>(report.precision.size()))
                                              : meta.class_names;
  const std::string accuracy_pct = format_half_up(report.accuracy * 100.0, 2);
  const std::string params_m = format_params_millions(meta.param_count);

  std::ostringstream perf;
  perf << "\\begin{tabular}{lc}\n\\toprule\nMetric & Value \\\\\n\\midrule\n";
  perf << "Test accuracy & " << accuracy_pct << "\\% \\\\\n";
  perf << "Test loss (best checkpoint) & " << (meta.test_loss ? format_half_up(*meta.test_loss, 4) : "n/a")
       << " \\\\\n";
  perf << "Number of parameters & $\\sim$" << params_m << "M \\\\\n";
  perf << "\\bottomrule\n\\end{tabular}\n";
  t.performance = perf.str();

  std::ostringstream pc;
  pc << "\\begin{tabular}{lccc}\n\\toprule\nClass & Precision & Recall & F1 \\\\\n\\midrule\n";
  for (std::size_t c = 0; c < names.size() && static_cast<Eigen::Index>(c) < report.precision.size(); ++c) {
    const auto i = static_cast<Eigen::Index>(c);
    pc << render_per_class_row(names[c], report.precision(i), report.recall(i), report.f1(i)) << "\n";
  }
  pc << "\\midrule\n"
     << render_per_class_row("Overall", report.weighted_precision, report.weighted_recall, report.weighted_f1)
     << "\n\\bottomrule\n\\end{tabular}\n";
  t.per_class = pc.str();

  std::ostringstream cmp;
  cmp << "\\begin{tabular}{lccc}\n\\toprule\nModel & Accuracy (\\%) & Params (M) & Source \\\\\n\\midrule\n";
  for (const auto& row : meta.prior_work)
    cmp << row.model << " & " << row.accuracy << " & " << row.params << " & " << row.source << " \\\\\n";
  cmp << "\\textbf{" << meta.model_name << "} & \\textbf{" << accuracy_pct << "} & \\textbf{" << params_m
      << "} & This work \\\\\n";
  cmp << "\\bottomrule\n\\end{tabular}\n";
  t.comparison = cmp.str();
  return t;
}

namespace {

std::string curve_csv(std::span<const EpochRecord> history, std::span<const int> boundaries, bool accuracy) {
  std::string out;
  for (int b : boundaries) out += "# phase_boundary_after_epoch=" + std::to_string(b) + "\n";
  out += "epoch,train,validation\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.epoch, accuracy ? r.train_acc : r.train_loss,
                  accuracy ? r.val_acc : r.val_loss);
    out += buf;
  }
  return out;
}

double parse_number(std::string_view s, std::size_t line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ParseError("line " + std::to_string(line) + ": invalid number '" + std::string(s) + "'", 0);
  return v;
}

} // namespace

CurveFiles export_curves(std::span<const EpochRecord> history, std::span<const int> phase_epochs) {
  if (history.empty()) throw InputError("cannot export curves from an empty history");
  std::vector<int> boundaries;
  int cumulative = 0;
  for (std::size_t i = 0; i + 1 < phase_epochs.size(); ++i) {
    cumulative += phase_epochs[i];
    boundaries.push_back(cumulative);
  }
  return {curve_csv(history, boundaries, true), curve_csv(history, boundaries, false)};
}

Curve parse_curve_csv(std::string_view text) {
  Curve c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  constexpr std::string_view marker = "# phase_boundary_after_epoch=";
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind(marker, 0) == 0) {
      c.phase_boundaries.push_back(static_cast<int>(parse_number(std::string_view(line).substr(marker.size()), line_no)));
      continue;
    }
    if (!header) {
      if (line != "epoch,train,validation") throw ParseError("line " + std::to_string(line_no) + ": bad header", 0);
      header = true;
      continue;
    }
    const auto a = line.find(',');
    const auto b = a == std::string::npos ? a : line.find(',', a + 1);
    if (b == std::string::npos) throw ParseError("line " + std::to_string(line_no) + ": expected 3 fields", 0);
    const std::string_view v(line);
    c.epochs.push_back(static_cast<int>(parse_number(v.substr(0, a), line_no)));
    c.train.push_back(parse_number(v.substr(a + 1, b - a - 1), line_no));
    c.validation.push_back(parse_number(v.substr(b + 1), line_no));
  }
  return c;
}

namespace {

template <typename Matrix, typename Fmt>
std::string matrix_csv_impl(const Matrix& m, std::span<const std::string> names, Fmt fmt) {
  std::string out = "true\\pred";
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    out += "," + (static_cast<std::size_t>(j) < names.size() ? names[static_cast<std::size_t>(j)] : std::to_string(j));
  out += "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)] : std::to_string(i);
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += "," + fmt(m(i, j));
    out += "\n";
  }
  return out;
}

} // namespace

std::string matrix_csv(const Eigen::MatrixXd& m, std::span<const std::string> class_names) {
  return matrix_csv_impl(m, class_names, [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  });
}

std::string matrix_csv(const CountMatrix& m, std::span<const std::string> class_names) {
  return matrix_csv_impl(m, class_names, [](std::int64_t v) { return std::to_string(v); });
}

} // namespace fer
