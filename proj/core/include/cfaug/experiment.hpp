#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfaug/analysis.hpp"
#include "cfaug/augment.hpp"
#include "cfaug/baselines.hpp"
#include "cfaug/bias.hpp"
#include "cfaug/cgan.hpp"
#include "cfaug/data.hpp"
#include "cfaug/metrics.hpp"
#include "cfaug/synthetic.hpp"
#include "cfaug/task_eval.hpp"

namespace cfaug {

struct MethodToggles {
  bool uncorrected = true;
  bool ipw = true;
  bool dragonnet = true;
  bool corrected = true;
  bool oracle = true;

  int enabled_count() const;
  bool enabled(const std::string& method) const;
};

struct BiasParams {
  double label_drop = 0.9;
  double row_drop = 0.35;
  double sample_drop = 0.9;
};

// Everything a benchmark run needs, loadable from a dotted key/value config
// file. The seeds are master seeds; each stage of a run derives its own
// stream from the master, so one number reproduces the whole run. The
// synthetic data seed is likewise derived per master seed (weight_seed stays
// fixed: the coefficient vectors define the task, seeds vary the sample).
struct ExperimentConfig {
  std::string name = "experiment";

  std::string data_source = "synthetic";  // "synthetic" or "file"
  std::string data_file;
  int file_d_tab = 0;
  int file_d_rich = 0;
  SynthConfig synth;
  // Rich columns visible to the pipeline: -1 keeps all, 0 strips the rich
  // block entirely, k > 0 keeps the first k columns. Labels keep whatever
  // rich-feature dependence the source gave them, so restricting columns
  // makes the task harder rather than changing it.
  int rich_used = -1;

  double split_original = 0.2;
  double split_train = 0.4;
  double split_eval = 0.4;

  BiasParams bias;
  double clip_min = 0.01;
  bool feature_propensity = false;

  GanConfig gan;
  GenerationMode generation = GenerationMode::Sampled;
  TrainConfig train;
  DragonnetConfig dragonnet;
  MethodToggles methods;

  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_root;

  void validate() const;
};

// Parses "section.key = value" lines ('#' comments, blank lines allowed).
// Unknown keys are errors.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void apply_config_override(ExperimentConfig& cfg, const std::string& key,
                           const std::string& value);

// Canonical form: every key, sorted, one per line. Hashing this text names
// the run directory, so identical configs land in identical places.
std::string serialize_experiment_config(const ExperimentConfig& cfg);
std::string experiment_config_hash(const ExperimentConfig& cfg);

// Precedence: config value, then the CFAUG_OUTPUT_ROOT environment
// variable, then ./cfaug-out.
std::filesystem::path resolve_output_root(const ExperimentConfig& cfg);
std::filesystem::path experiment_run_dir(const ExperimentConfig& cfg);

struct SeedMethodOutcome {
  bool ok = false;
  std::string error;
  std::map<std::string, MetricsReport> by_split;  // "unbiased", "biased"
};

struct SeedAnalyses {
  std::optional<double> e0;
  std::optional<double> e1;
  std::optional<double> entropy_observed;
  std::optional<double> entropy_corrected;
  std::optional<double> tv_observed_corrected;
  std::optional<double> tv_generated_true;
  std::optional<double> agreement_generated_true;
  std::optional<double> propensity_weighted_mean;
  std::optional<double> vault_restored_mean;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::map<std::string, SeedMethodOutcome> methods;
  SeedAnalyses analyses;
};

struct AggregateCell {
  double mean = 0.0;
  double stdev = 0.0;
  int n = 0;
};

struct ExperimentResult {
  std::string config_text;
  std::string config_hash;
  std::string version;
  TaskKind task_kind = TaskKind::Binary;
  std::vector<std::string> metric_names_used;
  std::vector<std::string> methods_enabled;
  std::vector<SeedRun> seed_runs;
  // split -> method -> metric -> aggregate over succeeding seeds
  std::map<std::string, std::map<std::string, std::map<std::string, AggregateCell>>>
      aggregate;
  // split -> metric -> signed gain of the corrected method over the best
  // competing baseline (oracle excluded), oriented so positive means better
  std::map<std::string, std::map<std::string, double>> improvement;
  bool all_succeeded = false;
};

// Runs the full pipeline per seed, writes per-seed artifacts, tables, and
// results.json under experiment_run_dir(cfg), and returns the result.
// Emitted files are byte-stable for a fixed config.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

enum class TableFormat { Plain, Delimited, Markup };

TableFormat table_format_from_string(const std::string& name);
std::string render_tables(const ExperimentResult& r, TableFormat format);

std::string result_to_json(const ExperimentResult& r);
ExperimentResult result_from_json(const std::string& json_text);

}  // namespace cfaug
