#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "cfaug/data.hpp"

namespace cfaug {

// Configuration for the synthetic generator. Rows carry a tabular block x
// and a rich block w of standard-normal features; a latent score
// s = x . beta_tab + w . beta_rich + noise drives the label. The two
// coefficient blocks are drawn once from weight_seed and normalized to unit
// length each, so both blocks carry signal; features and noise come from
// data_seed.
struct SynthConfig {
  std::int64_t n = 22895;
  int d_tab = 10;
  int d_rich = 8;
  double noise_sd = 0.5;
  TaskKind task = TaskKind::Binary;
  // Binary: fraction of rows labeled 1 (threshold on the latent score). The
  // default makes class 0 the 25% minority, so recommendation-driven label
  // masking starves exactly that class.
  double positive_share = 0.75;
  // Multiclass: number of equal-count quantile bins of the latent score.
  int num_classes = 2;
  std::uint64_t weight_seed = 7;
  std::uint64_t data_seed = 42;

  void validate() const;
};

// What the generator knows and the pipeline is not allowed to use: the true
// coefficients and the pre-binarization latent score of every row.
struct GroundTruth {
  Eigen::VectorXd beta_tab;
  Eigen::VectorXd beta_rich;
  std::vector<std::int64_t> ids;
  std::vector<double> latent_scores;
};

std::pair<Dataset, GroundTruth> generate_synthetic(const SynthConfig& config);

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace cfaug
