#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfaug/augment.hpp"
#include "cfaug/baselines.hpp"
#include "cfaug/bias.hpp"
#include "cfaug/cgan.hpp"
#include "cfaug/data.hpp"

namespace cfaug {

// Binning shared by every histogram in one report: class indices for
// discrete labels, 20 equal-width bins over a fixed range for continuous
// ones.
struct BinSpec {
  bool discrete = true;
  int bins = 2;
  double lo = 0.0;
  double hi = 1.0;

  static BinSpec classes(int num_classes);
  static BinSpec continuous(double lo, double hi, int bins = 20);

  int index_of(double value) const;
  // Lower edge of a bin (the class index itself for discrete specs).
  double bin_label(int index) const;
  bool operator==(const BinSpec&) const = default;
};

struct Histogram {
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;

  std::vector<double> probabilities() const;
};

Histogram make_histogram(std::span<const double> values, const BinSpec& spec);

// Half the L1 distance between the two probability vectors.
double total_variation(const Histogram& a, const Histogram& b);

// Largest absolute difference between the two empirical CDFs.
double ks_statistic(std::span<const double> a, std::span<const double> b);

// Shannon entropy in nats, with 0 * ln 0 = 0.
double entropy_nats(const std::vector<double>& probabilities);

struct SourceHistogram {
  std::string source;
  Histogram hist;
  double entropy = 0.0;
};

struct DistReport {
  BinSpec bin_spec;
  std::vector<SourceHistogram> histograms;
  std::optional<double> tv_distance;
  std::optional<double> ks;
  // Fraction of matched ids whose labels agree exactly (classification).
  std::optional<double> agreement;

  const SourceHistogram& source(const std::string& name) const;
  // Delimited rows "bin,source,count", one per (source, bin).
  std::string plot_data() const;
  std::string to_text() const;
};

// Compares generated counterfactual labels against the sealed true labels on
// the same ids. Oracle analysis: callers must hold the vault already.
DistReport counterfactual_report(const CfLabels& cf, const OracleVault& vault,
                                 const TaskSpec& task);

// Compares the observed-only label distribution with the corrected set's.
DistReport label_balance_report(const BiasedTrainSet& b, const CorrectedDataset& c,
                                const TaskSpec& task);

// Same report plus the vault-restored full distribution.
DistReport label_balance_report_oracle(const BiasedTrainSet& b, const CorrectedDataset& c,
                                       const TaskSpec& task);

struct PropensityMeanCheck {
  double weighted_mean = 0.0;
  double restored_mean = 0.0;
  double gap = 0.0;
};

// Inverse-propensity-weighted mean of the observed labels against the mean
// with every masked label restored from the vault. Oracle analysis.
PropensityMeanCheck propensity_mean_check_oracle(const BiasedTrainSet& b,
                                                 const PropensityTable& p);

}  // namespace cfaug
