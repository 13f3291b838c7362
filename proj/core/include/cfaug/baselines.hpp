#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cfaug/bias.hpp"
#include "cfaug/data.hpp"
#include "cfaug/nn.hpp"
#include "cfaug/task_eval.hpp"

namespace cfaug {

// Observation propensities conditioned on the recommendation flag:
// e_c = P(a = 1 | r = c), floored at clip_min so IPW weights stay in
// [1, 1/clip_min].
struct PropensityTable {
  double e0 = 1.0;
  double e1 = 1.0;
  double clip_min = 0.01;

  double propensity_for(int rec) const { return rec == 0 ? e0 : e1; }
  double weight_for(int rec) const { return 1.0 / propensity_for(rec); }
};

PropensityTable estimate_propensities(const BiasedTrainSet& b, double clip_min = 0.01);

// Feature-based alternative: a logistic model of P(a = 1 | x ⊕ w) evaluated
// per row of b, floored at clip_min.
std::vector<double> estimate_feature_propensities(const BiasedTrainSet& b,
                                                  double clip_min, std::uint64_t seed);

// Fits the task model on observed rows only, unit weights.
TaskModel train_uncorrected(const BiasedTrainSet& b, const TaskSpec& task,
                            std::uint64_t seed, const TrainConfig& config = {});

// Same training loop with each observed row's loss multiplied by 1/e_{r_i}.
TaskModel train_ipw(const BiasedTrainSet& b, const PropensityTable& p,
                    const TaskSpec& task, std::uint64_t seed,
                    const TrainConfig& config = {});

// Variant taking per-row propensities aligned with b's rows (only observed
// rows' entries are used).
TaskModel train_ipw(const BiasedTrainSet& b, const std::vector<double>& row_propensities,
                    const TaskSpec& task, std::uint64_t seed,
                    const TrainConfig& config = {});

struct DragonnetConfig {
  int trunk_width = 200;
  int head_width = 100;
  int epochs = 5;
  double learning_rate = 1e-3;
  int batch_size = 64;

  void validate() const;
};

// Joint treatment/outcome network: a shared trunk over (x ⊕ w) feeds a
// propensity head predicting P(r=1|features) and one outcome head per
// recommendation condition. Binary labels only.
class DragonnetModel {
 public:
  DragonnetModel() = default;
  DragonnetModel(nn::Mlp trunk, nn::Mlp propensity_head,
                 std::array<nn::Mlp, 2> outcome_heads, TaskSpec task,
                 FeatureSchema schema, DragonnetConfig config, std::uint64_t seed,
                 std::vector<double> epoch_loss);

  const TaskSpec& task() const { return task_; }
  const FeatureSchema& schema() const { return schema_; }
  const DragonnetConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<double>& epoch_loss() const { return epoch_loss_; }
  const nn::Mlp& trunk() const { return trunk_; }
  const nn::Mlp& propensity_head() const { return propensity_head_; }
  const nn::Mlp& outcome_head(int condition) const;

  // P(r = 1 | features) per row.
  Eigen::VectorXd propensity(const Eigen::MatrixXd& features) const;
  // P(y = 1 | features) from the chosen condition's head.
  Eigen::VectorXd outcome_probability(const Eigen::MatrixXd& features, int condition) const;
  // Class prediction per row, reading the outcome head selected by that
  // row's recommendation flag.
  Eigen::VectorXd predict_labels(const Eigen::MatrixXd& features,
                                 const std::vector<std::uint8_t>& recs) const;

 private:
  nn::Mlp trunk_;
  nn::Mlp propensity_head_;
  std::array<nn::Mlp, 2> outcome_heads_;
  TaskSpec task_;
  FeatureSchema schema_;
  DragonnetConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<double> epoch_loss_;
};

DragonnetModel train_dragonnet(const BiasedTrainSet& b, const TaskSpec& task,
                               std::uint64_t seed, const DragonnetConfig& config = {});

void save_dragonnet(const DragonnetModel& m, const std::filesystem::path& path);
DragonnetModel load_dragonnet(const std::filesystem::path& path);

}  // namespace cfaug
