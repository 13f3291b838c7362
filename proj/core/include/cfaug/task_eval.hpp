#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cfaug/augment.hpp"
#include "cfaug/bias.hpp"
#include "cfaug/data.hpp"
#include "cfaug/metrics.hpp"
#include "cfaug/nn.hpp"

namespace cfaug {

struct TrainConfig {
  int epochs = 5;
  int hidden = 0;
  double learning_rate = 5e-4;
  int batch_size = 16;
  double validation_fraction = 0.1;

  void validate() const;
};

// Downstream predictor over (x ⊕ w) with the task's output head, trained by
// mini-batch gradient descent and selected by best validation loss across
// epochs. hidden = 0 drops the hidden layer and fits a linear model.
class TaskModel {
 public:
  TaskModel() = default;
  TaskModel(nn::Mlp net, TaskSpec task, FeatureSchema schema, TrainConfig config,
            std::uint64_t seed, std::vector<double> epoch_train_loss,
            std::vector<double> epoch_val_loss);

  const nn::Mlp& net() const { return net_; }
  const TaskSpec& task() const { return task_; }
  const FeatureSchema& schema() const { return schema_; }
  const TrainConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<double>& epoch_train_loss() const { return epoch_train_loss_; }
  const std::vector<double>& epoch_val_loss() const { return epoch_val_loss_; }

  // Predicted class index (classification) or value (regression) per row.
  Eigen::VectorXd predict_labels(const Eigen::MatrixXd& features) const;
  // Raw head output (probabilities or values).
  Eigen::MatrixXd predict_output(const Eigen::MatrixXd& features) const;

 private:
  nn::Mlp net_;
  TaskSpec task_;
  FeatureSchema schema_;
  TrainConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<double> epoch_train_loss_;
  std::vector<double> epoch_val_loss_;
};

TaskModel train_task_model(const Dataset& d, const TaskSpec& task, std::uint64_t seed,
                           const std::optional<std::vector<double>>& weights = std::nullopt,
                           const TrainConfig& config = {});

TaskModel train_task_model(const CorrectedDataset& c, const TaskSpec& task,
                           std::uint64_t seed, const TrainConfig& config = {});

MetricsReport evaluate(const TaskModel& m, const Dataset& d_eval, const TaskSpec& task);

// Shared metric path for any predictor: predictions are class indices or
// regression values aligned with d_eval's rows.
MetricsReport evaluate_predictions(const Eigen::VectorXd& predictions,
                                   const Dataset& d_eval, const TaskSpec& task);

// Restores every vault label (masked rows regain their true labels; rows
// removed by the uniform drop stay gone) and trains on the result.
TaskModel train_oracle(const BiasedTrainSet& b, const TaskSpec& task, std::uint64_t seed,
                       const TrainConfig& config = {});

void save_task_model(const TaskModel& m, const std::filesystem::path& path);
TaskModel load_task_model(const std::filesystem::path& path);

}  // namespace cfaug
