#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "cfaug/data.hpp"

namespace cfaug {

// Metric suite for one (model, eval split) pair. Classification fills the
// four F1/accuracy fields; regression fills r2 and nrmse. "f1" is the
// support-weighted mean of per-class F1, "f1_macro" the unweighted mean, and
// "f1_minority" the F1 of the minority class fixed in the TaskSpec.
struct MetricsReport {
  std::optional<double> accuracy;
  std::optional<double> f1;
  std::optional<double> f1_macro;
  std::optional<double> f1_minority;
  std::optional<double> r2;
  std::optional<double> nrmse;
  std::int64_t n_eval = 0;
  std::uint64_t seed = 0;
  std::string config_hash;

  // Structured key/value text, one "key = value" line per set field.
  std::string to_text() const;
  static MetricsReport from_text(const std::string& text);

  std::optional<double> metric(const std::string& name) const;
};

// Names of the metrics a task kind reports, in table order.
std::vector<std::string> metric_names(TaskKind kind);
// True for metrics where smaller values are better.
bool lower_is_better(const std::string& metric_name);

// Computes the task's metrics from paired label vectors. Predictions are
// class indices for classification and raw values for regression.
MetricsReport compute_metrics(std::span<const double> y_true,
                              std::span<const double> y_pred, const TaskSpec& task);

}  // namespace cfaug
