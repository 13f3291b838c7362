#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cfaug/analysis.hpp"
#include "cfaug/augment.hpp"
#include "cfaug/baselines.hpp"
#include "cfaug/bias.hpp"
#include "cfaug/cgan.hpp"
#include "cfaug/data.hpp"
#include "cfaug/experiment.hpp"
#include "cfaug/rng.hpp"
#include "cfaug/synthetic.hpp"
#include "cfaug/version.hpp"

namespace {

using namespace cfaug;

cfaug::TaskSpec task_from(const std::string& kind, int classes) {
  TaskSpec task;
  task.kind = task_kind_from_string(kind);
  task.num_classes = classes;
  return task;
}

void add_gan_flags(CLI::App* cmd, GanConfig& gan) {
  cmd->add_option("--hidden-size", gan.hidden_size, "Generator/discriminator hidden width");
  cmd->add_option("--g-iters", gan.g_iters, "Generator iterations");
  cmd->add_option("--d-steps", gan.d_steps, "Discriminator updates per generator update");
  cmd->add_option("--learning-rate", gan.learning_rate, "Adam learning rate");
  cmd->add_flag("--separate-discriminators,!--shared-discriminator",
                gan.separate_discriminators,
                "One discriminator per recommendation condition");
  cmd->add_flag("--scale-features,!--no-scale-features", gan.scale_features,
                "Standardize features before training");
  cmd->add_option("--noise-dim", gan.noise_dim, "Noise width (0 = tabular width)");
  cmd->add_option("--batch-size", gan.batch_size, "Minibatch size");
  cmd->add_option("--adversarial-weight", gan.adversarial_weight,
                  "Weight of the fooling terms in the generator loss");
}

int run_synth(const SynthConfig& cfg, const std::string& out,
              const std::string& truth_out) {
  const auto [data, truth] = generate_synthetic(cfg);
  save_dataset(data, out);
  std::cout << "wrote " << data.size() << " rows to " << out << "\n";
  if (!truth_out.empty()) {
    save_ground_truth(truth, truth_out);
    std::cout << "wrote ground truth to " << truth_out << "\n";
  }
  return 0;
}

int run_bias(const std::string& data_file, int d_tab, int d_rich,
             const std::string& task_kind, int classes, std::uint64_t seed,
             double f_original, double f_train, double f_eval, double label_drop,
             double row_drop, double sample_drop, const std::string& out_dir) {
  const TaskSpec task = task_from(task_kind, classes);
  const Dataset data =
      load_dataset(data_file, ColumnSchema::standard(d_tab, d_rich), task);
  const SplitBundle split =
      split_dataset(data, f_original, f_train, f_eval, derive_seed(seed, "split"));
  const TabModel tab =
      fit_tab_model(split.d_original, data.task(), derive_seed(seed, "tab"));
  const std::vector<std::uint8_t> recs = predict_recs(tab, split.d_train_pool);
  const BiasedTrainSet b = induce_train_bias(split.d_train_pool, recs, label_drop,
                                             row_drop, derive_seed(seed, "bias"));
  const Dataset eval_biased =
      make_biased_eval(split.d_eval, tab, sample_drop, derive_seed(seed, "biased-eval"));

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  save_dataset(split.d_original, dir / "d_original.csv");
  save_biased_train_set(b, dir / "biased_train.csv");
  save_vault(b.oracle_vault(), dir / "vault.csv");
  save_dataset(split.d_eval, dir / "eval_unbiased.csv");
  save_dataset(eval_biased, dir / "eval_biased.csv");

  std::array<std::int64_t, 2> total{0, 0}, observed{0, 0};
  for (const BiasedRow& br : b.rows()) {
    total[br.rec] += 1;
    observed[br.rec] += br.observed ? 1 : 0;
  }
  std::cout << "biased training set: " << b.size() << " rows ("
            << split.d_train_pool.size() << " before the row drop)\n";
  for (int c = 0; c < 2; ++c) {
    std::cout << "r=" << c << ": " << observed[c] << "/" << total[c]
              << " labels observed\n";
  }
  std::cout << "biased eval: " << eval_biased.size() << "/" << split.d_eval.size()
            << " rows kept\n"
            << "artifacts in " << dir.string() << "\n";
  return 0;
}

int run_train_cgan(const std::string& train_file, const std::string& task_kind,
                   int classes, std::uint64_t seed, const GanConfig& gan,
                   const std::string& out) {
  const TaskSpec task = task_from(task_kind, classes);
  const BiasedTrainSet b = load_biased_train_set(train_file, task);
  const CganModel model = train_cgan(b, gan, b.task(), derive_seed(seed, "cgan"));
  save_cgan_checkpoint(model, out);
  const GanTelemetry& t = model.telemetry();
  std::cout << "trained " << gan.g_iters << " generator iterations; final supervised loss "
            << (t.supervised_loss.empty() ? 0.0 : t.supervised_loss.back()) << "\n";
  const int conditions = model.config().separate_discriminators ? 2 : 1;
  for (int c = 0; c < conditions; ++c) {
    if (t.discriminator_accuracy[static_cast<std::size_t>(c)].empty()) continue;
    std::cout << "discriminator " << c << " final accuracy "
              << t.final_discriminator_accuracy(c) << "\n";
  }
  std::cout << "checkpoint written to " << out << "\n";
  return 0;
}

int run_augment(const std::string& train_file, const std::string& task_kind, int classes,
                const std::string& cgan_file, std::uint64_t seed,
                const std::string& mode_name, const std::string& out,
                const std::string& cf_out) {
  const TaskSpec task = task_from(task_kind, classes);
  const BiasedTrainSet b = load_biased_train_set(train_file, task);
  const CganModel model = load_cgan_checkpoint(cgan_file);
  GenerationMode mode;
  if (mode_name == "expected") {
    mode = GenerationMode::Expected;
  } else if (mode_name == "sampled") {
    mode = GenerationMode::Sampled;
  } else {
    throw Error("augment: --mode expects expected or sampled, got '" + mode_name + "'");
  }
  const CfLabels cf = generate_counterfactuals(model, b, derive_seed(seed, "generate"), mode);
  if (!cf_out.empty()) save_cf_labels(cf, cf_out);
  const CorrectedDataset corrected = augment(b, cf);
  save_corrected(corrected, out);
  std::cout << "corrected set: " << corrected.observed_count() << " observed + "
            << corrected.generated_count() << " generated labels -> " << out << "\n";
  return 0;
}

int run_bench(const std::string& config_file, const std::vector<std::string>& overrides,
              const std::string& output_root, const std::string& seeds) {
  ExperimentConfig cfg;
  if (!config_file.empty()) cfg = load_experiment_config(config_file);
  for (const std::string& entry : overrides) {
    const std::size_t eq = entry.find('=');
    require(eq != std::string::npos,
            "--set expects key=value, got '" + entry + "'");
    std::string key = entry.substr(0, eq);
    std::string value = entry.substr(eq + 1);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    while (!value.empty() && value.front() == ' ') value.erase(value.begin());
    apply_config_override(cfg, key, value);
  }
  if (!seeds.empty()) apply_config_override(cfg, "seeds", seeds);
  if (!output_root.empty()) cfg.output_root = output_root;

  const ExperimentResult result = run_experiment(cfg);
  std::cout << render_tables(result, TableFormat::Plain);
  std::cout << "run directory: " << experiment_run_dir(cfg).string() << "\n";
  if (!result.all_succeeded) {
    std::cerr << "some methods failed; see results.json\n";
    return 1;
  }
  return 0;
}

int run_report(const std::string& results_file, const std::string& format,
               const std::string& out) {
  std::ifstream in(results_file, std::ios::binary);
  require(in.good(), "cannot open " + results_file);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const ExperimentResult result = result_from_json(buffer.str());
  const std::string text = render_tables(result, table_format_from_string(format));
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream file(out, std::ios::binary);
    require(file.good(), "cannot open " + out + " for writing");
    file << text;
    std::cout << "tables written to " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Presentation-bias simulation and counterfactual-augmentation benchmark"};
  app.set_version_flag("--version", cfaug::kVersion);
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  SynthConfig synth_cfg;
  std::string synth_task = "binary";
  std::string synth_out = "dataset.csv";
  std::string synth_truth;
  std::uint64_t synth_master = 0;
  bool synth_has_master = false;
  synth->add_option("--n", synth_cfg.n, "Row count");
  synth->add_option("--d-tab", synth_cfg.d_tab, "Tabular feature width");
  synth->add_option("--d-rich", synth_cfg.d_rich, "Rich feature width");
  synth->add_option("--noise-sd", synth_cfg.noise_sd, "Label noise standard deviation");
  synth->add_option("--task", synth_task, "binary, multiclass, or regression");
  synth->add_option("--classes", synth_cfg.num_classes, "Class count (multiclass)");
  synth->add_option("--positive-share", synth_cfg.positive_share,
                    "Fraction labeled 1 (binary)");
  synth->add_option("--weight-seed", synth_cfg.weight_seed, "Coefficient seed");
  synth->add_option("--data-seed", synth_cfg.data_seed, "Feature/noise seed");
  synth->add_option("--seed", synth_master,
                    "Master seed; derives the data seed the way bench does")
      ->each([&](const std::string&) { synth_has_master = true; });
  synth->add_option("--out", synth_out, "Output dataset path");
  synth->add_option("--truth", synth_truth, "Also write the generator ground truth");

  // bias
  auto* bias = app.add_subcommand("bias", "Split a dataset and induce presentation bias");
  std::string bias_data, bias_task = "binary", bias_out = "bias-out";
  int bias_d_tab = 10, bias_d_rich = 8, bias_classes = 2;
  std::uint64_t bias_seed = 1;
  double bias_f_original = 0.2, bias_f_train = 0.4, bias_f_eval = 0.4;
  BiasParams bias_params;
  bias->add_option("--data", bias_data, "Dataset file")->required();
  bias->add_option("--d-tab", bias_d_tab, "Tabular feature width");
  bias->add_option("--d-rich", bias_d_rich, "Rich feature width");
  bias->add_option("--task", bias_task, "binary, multiclass, or regression");
  bias->add_option("--classes", bias_classes, "Class count");
  bias->add_option("--seed", bias_seed, "Master seed");
  bias->add_option("--split-original", bias_f_original, "Tab-model split fraction");
  bias->add_option("--split-train", bias_f_train, "Training pool fraction");
  bias->add_option("--split-eval", bias_f_eval, "Eval split fraction");
  bias->add_option("--label-drop", bias_params.label_drop,
                   "Label masking rate for r=0 rows");
  bias->add_option("--row-drop", bias_params.row_drop, "Uniform row removal rate");
  bias->add_option("--sample-drop", bias_params.sample_drop,
                   "r=0 removal rate for the biased eval");
  bias->add_option("--out-dir", bias_out, "Artifact directory");

  // train-cgan
  auto* traincgan = app.add_subcommand("train-cgan",
                                       "Train the counterfactual label generator");
  std::string cgan_train, cgan_task = "binary", cgan_out = "cgan.ckpt";
  int cgan_classes = 2;
  std::uint64_t cgan_seed = 1;
  GanConfig gan_cfg;
  traincgan->add_option("--train", cgan_train, "biased_train.csv from bias")->required();
  traincgan->add_option("--task", cgan_task, "binary, multiclass, or regression");
  traincgan->add_option("--classes", cgan_classes, "Class count");
  traincgan->add_option("--seed", cgan_seed, "Master seed");
  add_gan_flags(traincgan, gan_cfg);
  traincgan->add_option("--out", cgan_out, "Checkpoint path");

  // augment
  auto* augment_cmd = app.add_subcommand("augment",
                                         "Generate counterfactual labels and build the corrected set");
  std::string aug_train, aug_task = "binary", aug_cgan, aug_mode = "sampled";
  std::string aug_out = "corrected.csv", aug_cf_out;
  int aug_classes = 2;
  std::uint64_t aug_seed = 1;
  augment_cmd->add_option("--train", aug_train, "biased_train.csv from bias")->required();
  augment_cmd->add_option("--task", aug_task, "binary, multiclass, or regression");
  augment_cmd->add_option("--classes", aug_classes, "Class count");
  augment_cmd->add_option("--cgan", aug_cgan, "Checkpoint from train-cgan")->required();
  augment_cmd->add_option("--seed", aug_seed, "Master seed");
  augment_cmd->add_option("--mode", aug_mode, "expected or sampled");
  augment_cmd->add_option("--out", aug_out, "Corrected dataset path");
  augment_cmd->add_option("--cf-out", aug_cf_out, "Also write the generated labels");

  // bench
  auto* bench = app.add_subcommand("bench", "Run the full benchmark pipeline");
  std::string bench_config, bench_output_root, bench_seeds;
  std::vector<std::string> bench_overrides;
  bench->add_option("--config", bench_config, "Config file (defaults apply without it)");
  bench->add_option("--set", bench_overrides, "Override a config key (key=value)");
  bench->add_option("--output-root", bench_output_root,
                    "Output root (overrides config and CFAUG_OUTPUT_ROOT)");
  bench->add_option("--seeds", bench_seeds, "Comma-separated master seeds");

  // report
  auto* report = app.add_subcommand("report", "Re-render tables from results.json");
  std::string report_results, report_format = "plain", report_out;
  report->add_option("--results", report_results, "results.json path")->required();
  report->add_option("--format", report_format, "plain, delimited, or markup");
  report->add_option("--out", report_out, "Write tables here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      synth_cfg.task = task_kind_from_string(synth_task);
      if (synth_has_master) {
        synth_cfg.data_seed = derive_seed(synth_master, "synth-data");
      }
      return run_synth(synth_cfg, synth_out, synth_truth);
    }
    if (*bias) {
      return run_bias(bias_data, bias_d_tab, bias_d_rich, bias_task, bias_classes,
                      bias_seed, bias_f_original, bias_f_train, bias_f_eval,
                      bias_params.label_drop, bias_params.row_drop,
                      bias_params.sample_drop, bias_out);
    }
    if (*traincgan) {
      return run_train_cgan(cgan_train, cgan_task, cgan_classes, cgan_seed, gan_cfg,
                            cgan_out);
    }
    if (*augment_cmd) {
      return run_augment(aug_train, aug_task, aug_classes, aug_cgan, aug_seed, aug_mode,
                         aug_out, aug_cf_out);
    }
    if (*bench) {
      return run_bench(bench_config, bench_overrides, bench_output_root, bench_seeds);
    }
    if (*report) {
      return run_report(report_results, report_format, report_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
