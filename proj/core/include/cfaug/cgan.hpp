#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "cfaug/bias.hpp"
#include "cfaug/data.hpp"
#include "cfaug/nn.hpp"

namespace cfaug {

struct GanConfig {
  int hidden_size = 128;
  int g_iters = 500;
  int d_steps = 8;
  double learning_rate = 1e-5;
  bool separate_discriminators = true;
  bool scale_features = false;
  int noise_dim = 0;  // 0 resolves to d_tab of the training schema
  int batch_size = 128;
  // Generator loss = supervised + adversarial_weight * fooling terms.
  double adversarial_weight = 1.0;

  void validate() const;
};

// Per-iteration training curves plus the conditioning counters. For each
// discriminator, rows_shown[c][r] counts rows with recommendation r that
// condition-c updates consumed; off-diagonal entries must stay zero.
struct GanTelemetry {
  std::vector<double> supervised_loss;
  std::vector<double> adversarial_loss;
  std::array<std::vector<double>, 2> discriminator_loss;
  std::array<std::vector<double>, 2> discriminator_accuracy;
  std::array<std::array<std::int64_t, 2>, 2> rows_shown{};

  // Mean accuracy over the final 10% of iterations for one condition.
  double final_discriminator_accuracy(int condition) const;
};

// Trained counterfactual label generator. The generator maps
// (x ⊕ w ⊕ z) to the task's label head; each discriminator maps
// (x ⊕ w ⊕ label) to the probability that the label is factual.
// Discriminator index = recommendation condition (a single shared
// discriminator sits at index 0 when separate_discriminators is off).
class CganModel {
 public:
  CganModel() = default;
  CganModel(nn::Mlp generator, std::vector<nn::Mlp> discriminators, GanConfig config,
            TaskSpec task, FeatureSchema schema, int noise_dim,
            Eigen::VectorXd feature_shift, Eigen::VectorXd feature_scale,
            GanTelemetry telemetry);

  const nn::Mlp& generator() const { return generator_; }
  const std::vector<nn::Mlp>& discriminators() const { return discriminators_; }
  const GanConfig& config() const { return config_; }
  const TaskSpec& task() const { return task_; }
  const FeatureSchema& schema() const { return schema_; }
  int noise_dim() const { return noise_dim_; }
  const GanTelemetry& telemetry() const { return telemetry_; }
  const Eigen::VectorXd& feature_shift() const { return feature_shift_; }
  const Eigen::VectorXd& feature_scale() const { return feature_scale_; }

  // Applies the stored standardization when scale_features is on; identity
  // otherwise.
  Eigen::MatrixXd scale(const Eigen::MatrixXd& features) const;

 private:
  nn::Mlp generator_;
  std::vector<nn::Mlp> discriminators_;
  GanConfig config_;
  TaskSpec task_;
  FeatureSchema schema_;
  int noise_dim_ = 0;
  Eigen::VectorXd feature_shift_;
  Eigen::VectorXd feature_scale_;
  GanTelemetry telemetry_;
};

// Generated labels for the unobserved rows, keyed by row id.
struct CfLabels {
  std::map<std::int64_t, double> labels;

  std::size_t size() const { return labels.size(); }
};

CganModel train_cgan(const BiasedTrainSet& b, const GanConfig& cfg, const TaskSpec& task,
                     std::uint64_t seed);

enum class GenerationMode { Expected, Sampled };

// Draws z per unobserved row and emits the generator's label: Expected takes
// the head's argmax/threshold/raw value, Sampled draws from the output
// distribution (regression outputs are point predictions either way).
CfLabels generate_counterfactuals(const CganModel& m, const BiasedTrainSet& b,
                                  std::uint64_t seed, GenerationMode mode);

// Central finite-difference audit of every loss the training loop uses, on
// the given rows of b: the supervised loss and the fooling loss over
// generator parameters, and each discriminator's classification loss over
// its parameters. Returns the worst relative error.
double gradient_check(const CganModel& m, const BiasedTrainSet& b,
                      const std::vector<std::size_t>& batch_rows, std::uint64_t seed);

void save_cf_labels(const CfLabels& cf, const std::filesystem::path& path);
CfLabels load_cf_labels(const std::filesystem::path& path);

void save_cgan_checkpoint(const CganModel& m, const std::filesystem::path& path);
CganModel load_cgan_checkpoint(const std::filesystem::path& path);

}  // namespace cfaug
