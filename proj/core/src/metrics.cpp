#include "cfaug/metrics.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "cfaug/detail/text.hpp"

namespace cfaug {

namespace {

struct F1Parts {
  std::vector<double> per_class;
  std::vector<std::int64_t> support;
};

// Per-class F1 from a confusion matrix; 0/0 ratios fall back to 0.
F1Parts per_class_f1(std::span<const double> y_true, std::span<const double> y_pred,
                     int classes) {
  std::vector<std::int64_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  F1Parts parts;
  parts.support.assign(classes, 0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = static_cast<int>(y_true[i]);
    const int p = static_cast<int>(y_pred[i]);
    require(t >= 0 && t < classes, "compute_metrics: true label out of range");
    require(p >= 0 && p < classes, "compute_metrics: predicted label out of range");
    parts.support[t] += 1;
    if (t == p) {
      tp[t] += 1;
    } else {
      fn[t] += 1;
      fp[p] += 1;
    }
  }
  parts.per_class.resize(classes);
  for (int k = 0; k < classes; ++k) {
    const double precision = tp[k] + fp[k] > 0
                                 ? static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fp[k])
                                 : 0.0;
    const double recall = tp[k] + fn[k] > 0
                              ? static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fn[k])
                              : 0.0;
    parts.per_class[k] = precision + recall > 0.0
                             ? 2.0 * precision * recall / (precision + recall)
                             : 0.0;
  }
  return parts;
}

}  // namespace

std::vector<std::string> metric_names(TaskKind kind) {
  if (kind == TaskKind::Regression) return {"r2", "nrmse"};
  return {"accuracy", "f1", "f1_macro", "f1_minority"};
}

bool lower_is_better(const std::string& metric_name) { return metric_name == "nrmse"; }

MetricsReport compute_metrics(std::span<const double> y_true,
                              std::span<const double> y_pred, const TaskSpec& task) {
  require(y_true.size() == y_pred.size(), "compute_metrics: length mismatch");
  require(!y_true.empty(), "compute_metrics: empty eval set");
  task.validate();

  MetricsReport report;
  report.n_eval = static_cast<std::int64_t>(y_true.size());
  const double n = static_cast<double>(y_true.size());

  if (task.is_classification()) {
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      if (y_true[i] == y_pred[i]) ++correct;
    }
    report.accuracy = static_cast<double>(correct) / n;

    const F1Parts parts = per_class_f1(y_true, y_pred, task.num_classes);
    double weighted = 0.0, macro = 0.0;
    for (int k = 0; k < task.num_classes; ++k) {
      weighted += static_cast<double>(parts.support[k]) / n * parts.per_class[k];
      macro += parts.per_class[k];
    }
    report.f1 = weighted;
    report.f1_macro = macro / static_cast<double>(task.num_classes);
    report.f1_minority = parts.per_class[task.minority_class];
    return report;
  }

  double mean = 0.0;
  for (const double y : y_true) mean += y;
  mean /= n;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double res = y_true[i] - y_pred[i];
    ss_res += res * res;
    const double dev = y_true[i] - mean;
    ss_tot += dev * dev;
  }
  if (ss_tot == 0.0) {
    throw Error("compute_metrics: evaluation labels have zero variance, nrmse undefined");
  }
  report.r2 = 1.0 - ss_res / ss_tot;
  // Population (divisor n) standard deviation, so a mean predictor scores
  // nrmse = 1 exactly.
  report.nrmse = std::sqrt(ss_res / n) / std::sqrt(ss_tot / n);
  return report;
}

std::string MetricsReport::to_text() const {
  std::ostringstream out;
  const auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) out << key << " = " << detail::format_double(*v) << '\n';
  };
  put("accuracy", accuracy);
  put("f1", f1);
  put("f1_macro", f1_macro);
  put("f1_minority", f1_minority);
  put("r2", r2);
  put("nrmse", nrmse);
  out << "n_eval = " << n_eval << '\n';
  out << "seed = " << seed << '\n';
  if (!config_hash.empty()) out << "config_hash = " << config_hash << '\n';
  return out.str();
}

MetricsReport MetricsReport::from_text(const std::string& text) {
  MetricsReport report;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    detail::chomp(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find(" = ");
    if (eq == std::string::npos) {
      throw Error("MetricsReport::from_text: malformed line '" + line + "'");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "accuracy") report.accuracy = detail::parse_double(value, key);
    else if (key == "f1") report.f1 = detail::parse_double(value, key);
    else if (key == "f1_macro") report.f1_macro = detail::parse_double(value, key);
    else if (key == "f1_minority") report.f1_minority = detail::parse_double(value, key);
    else if (key == "r2") report.r2 = detail::parse_double(value, key);
    else if (key == "nrmse") report.nrmse = detail::parse_double(value, key);
    else if (key == "n_eval") report.n_eval = detail::parse_int64(value, key);
    else if (key == "seed") report.seed = detail::parse_uint64(value, key);
    else if (key == "config_hash") report.config_hash = value;
    else throw Error("MetricsReport::from_text: unknown key '" + key + "'");
  }
  return report;
}

std::optional<double> MetricsReport::metric(const std::string& name) const {
  if (name == "accuracy") return accuracy;
  if (name == "f1") return f1;
  if (name == "f1_macro") return f1_macro;
  if (name == "f1_minority") return f1_minority;
  if (name == "r2") return r2;
  if (name == "nrmse") return nrmse;
  throw Error("MetricsReport::metric: unknown metric '" + name + "'");
}

}  // namespace cfaug
