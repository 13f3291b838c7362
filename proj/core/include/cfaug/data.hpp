#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfaug/error.hpp"

namespace cfaug {

enum class TaskKind { Binary, Multiclass, Regression };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

// Describes the prediction target. For classification tasks the minority
// class is fixed here, at dataset construction time, so that later metric
// reports keep scoring the same class even after augmentation shifts the
// empirical label balance.
struct TaskSpec {
  TaskKind kind = TaskKind::Binary;
  int num_classes = 2;
  int minority_class = 1;

  bool is_classification() const { return kind != TaskKind::Regression; }
  // Width of a one-hot (classification) or scalar (regression) label block.
  int label_width() const {
    return kind == TaskKind::Multiclass ? num_classes : 1;
  }
  void validate() const;
};

// One sample: stable id, tabular features, rich features, label.
struct Row {
  std::int64_t id = 0;
  Eigen::VectorXd x;  // tabular block
  Eigen::VectorXd w;  // rich block (may be empty)
  double y = 0.0;
};

struct FeatureSchema {
  int d_tab = 0;
  int d_rich = 0;

  int total() const { return d_tab + d_rich; }
  bool operator==(const FeatureSchema&) const = default;
  void validate() const;
};

// Immutable labeled dataset. Construction validates that every row matches
// the schema, features are finite, labels conform to the task, and ids are
// unique.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Row> rows, TaskSpec task, FeatureSchema schema);

  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const std::vector<Row>& rows() const { return rows_; }
  const Row& row(std::size_t i) const { return rows_.at(i); }
  const TaskSpec& task() const { return task_; }
  const FeatureSchema& schema() const { return schema_; }

  // Row-major matrices assembled on demand.
  Eigen::MatrixXd features() const;          // n x (d_tab + d_rich)
  Eigen::MatrixXd tabular_features() const;  // n x d_tab
  Eigen::VectorXd labels() const;

 private:
  std::vector<Row> rows_;
  TaskSpec task_;
  FeatureSchema schema_;
};

// Maps dataset columns in a delimited text file. The loader requires the id
// and label columns plus every listed feature column to be present; extra
// columns in the file are ignored.
struct ColumnSchema {
  std::string id_column = "id";
  std::vector<std::string> tabular_columns;
  std::vector<std::string> rich_columns;
  std::string label_column = "y";

  // Column names x0..x{d_tab-1} and w0..w{d_rich-1}, as written by
  // save_dataset.
  static ColumnSchema standard(int d_tab, int d_rich);
};

// Throws unless y is a legal label for the task (finite; {0,1} for binary;
// an integer class index for multiclass).
void validate_label(double y, const TaskSpec& task, std::int64_t id);

Dataset load_dataset(const std::filesystem::path& path,
                     const ColumnSchema& schema, const TaskSpec& task);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// Rewrites labels so that the top positive_share of the label distribution
// becomes class 1 and the rest class 0. The threshold is the empirical
// (1 - positive_share) quantile; values exactly at the threshold map to 0.
Dataset binarize_labels(const Dataset& dataset, double positive_share);

struct SplitBundle {
  Dataset d_original;    // fits the recommendation model
  Dataset d_train_pool;  // undergoes bias induction
  Dataset d_eval;        // held out for evaluation
};

// Disjoint uniform random split. Fractions must be positive and sum to at
// most 1; when they sum to less than 1 the remainder of the dataset is left
// unused. Each part must be non-empty.
SplitBundle split_dataset(const Dataset& dataset, double f_original,
                          double f_train, double f_eval, std::uint64_t seed);

}  // namespace cfaug
