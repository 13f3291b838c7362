#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "cfaug/data.hpp"
#include "cfaug/nn.hpp"

namespace cfaug {

// Sealed store of the true labels that bias induction withheld. Only oracle
// training and analysis code should accept one of these; everything else
// works from the masked rows alone. The file form carries a sentinel first
// line that the plain dataset loader refuses.
class OracleVault {
 public:
  OracleVault() = default;
  explicit OracleVault(std::map<std::int64_t, double> labels)
      : labels_(std::move(labels)) {}

  std::size_t size() const { return labels_.size(); }
  bool contains(std::int64_t id) const { return labels_.count(id) > 0; }
  double label(std::int64_t id) const;
  const std::map<std::int64_t, double>& labels() const { return labels_; }

 private:
  std::map<std::int64_t, double> labels_;
};

// Predictor from tabular features alone, used to derive recommendations.
// Classification tasks use a small one-hidden-layer network; regression uses
// linear least squares. t_rec is the training-set median prediction, the
// decision threshold for non-binary tasks.
class TabModel {
 public:
  TabModel() = default;
  TabModel(nn::Mlp net, TaskSpec task, int d_tab, double t_rec);
  TabModel(Eigen::VectorXd linear_weights, double intercept, int d_tab, double t_rec);

  int d_tab() const { return d_tab_; }
  double t_rec() const { return t_rec_; }
  const TaskSpec& task() const { return task_; }

  // Score per row: predicted class index for classification, predicted value
  // for regression. Input is the tabular block only (n x d_tab).
  Eigen::VectorXd predict_values(const Eigen::MatrixXd& x) const;

 private:
  std::optional<nn::Mlp> net_;
  Eigen::VectorXd linear_weights_;
  double intercept_ = 0.0;
  TaskSpec task_;
  int d_tab_ = 0;
  double t_rec_ = 0.0;
};

// One training row plus its bias state: rec is the recommendation r, and
// observed is the interaction indicator a. Rows with observed = 0 carry a
// NaN label; their true label lives in the vault.
struct BiasedRow {
  Row row;
  std::uint8_t rec = 0;
  std::uint8_t observed = 1;
};

class BiasedTrainSet {
 public:
  BiasedTrainSet() = default;
  // The vault, when present, must cover exactly the observed = 0 ids.
  BiasedTrainSet(std::vector<BiasedRow> rows, TaskSpec task, FeatureSchema schema,
                 std::optional<OracleVault> vault);

  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const std::vector<BiasedRow>& rows() const { return rows_; }
  const TaskSpec& task() const { return task_; }
  const FeatureSchema& schema() const { return schema_; }

  std::size_t observed_count() const;
  std::vector<std::size_t> observed_indices() const;
  std::vector<std::size_t> unobserved_indices() const;

  bool has_vault() const { return vault_.has_value(); }
  const OracleVault& oracle_vault() const;
  void attach_vault(OracleVault vault);

  // Feature matrix (x then w) for the given row indices.
  Eigen::MatrixXd features_of(const std::vector<std::size_t>& indices) const;

 private:
  void check_vault_coverage() const;

  std::vector<BiasedRow> rows_;
  TaskSpec task_;
  FeatureSchema schema_;
  std::optional<OracleVault> vault_;
};

TabModel fit_tab_model(const Dataset& d_original, const TaskSpec& task, std::uint64_t seed);

std::vector<std::uint8_t> predict_recs(const TabModel& m, const Dataset& d);

// Masks labels (r = 0 rows lose theirs with probability label_drop; true
// labels move to the vault), then removes a row_drop fraction of all rows.
BiasedTrainSet induce_train_bias(const Dataset& pool, const std::vector<std::uint8_t>& r,
                                 double label_drop, double row_drop, std::uint64_t seed);

// Removes each r = 0 row of the eval split with probability sample_drop;
// surviving rows keep their true labels.
Dataset make_biased_eval(const Dataset& d_eval, const TabModel& m, double sample_drop,
                         std::uint64_t seed);

// Rows (with r, a columns) and the vault serialize to separate files; the
// vault file starts with an oracle-only sentinel line.
void save_biased_train_set(const BiasedTrainSet& b, const std::filesystem::path& rows_path);
void save_vault(const OracleVault& vault, const std::filesystem::path& path);
BiasedTrainSet load_biased_train_set(const std::filesystem::path& rows_path,
                                     const TaskSpec& task);
OracleVault load_vault(const std::filesystem::path& path);

}  // namespace cfaug
