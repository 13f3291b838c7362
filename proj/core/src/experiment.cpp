#include "cfaug/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>

#include "cfaug/detail/text.hpp"
#include "cfaug/rng.hpp"
#include "cfaug/version.hpp"
#include "json.hpp"

namespace cfaug {

namespace {

using nlohmann::json;

const std::vector<std::string>& method_order() {
  static const std::vector<std::string> order{"uncorrected", "ipw", "dragonnet",
                                              "corrected", "oracle"};
  return order;
}

std::string display_name(const std::string& method) {
  if (method == "uncorrected") return "Uncorrected";
  if (method == "ipw") return "IPW";
  if (method == "dragonnet") return "Dragonnet";
  if (method == "corrected") return "CA";
  if (method == "oracle") return "Oracle";
  if (method == "improvement") return "Improvement";
  return method;
}

std::string trim(std::string_view s) {
  std::size_t begin = 0, end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return std::string(s.substr(begin, end - begin));
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw Error("config: " + key + " expects true or false, got '" + value + "'");
}

std::string bool_text(bool value) { return value ? "true" : "false"; }

std::string mode_text(GenerationMode mode) {
  return mode == GenerationMode::Expected ? "expected" : "sampled";
}

GenerationMode mode_from_text(const std::string& value) {
  if (value == "expected") return GenerationMode::Expected;
  if (value == "sampled") return GenerationMode::Sampled;
  throw Error("config: generate.mode expects expected or sampled, got '" + value + "'");
}

std::string seeds_text(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(seeds[i]);
  }
  return out;
}

std::vector<std::uint64_t> seeds_from_text(const std::string& value) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& part : detail::split_line(value, ',')) {
    const std::string token = trim(part);
    if (token.empty()) continue;
    seeds.push_back(detail::parse_uint64(token, "config: seeds"));
  }
  return seeds;
}

struct KeyBinding {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

const std::vector<KeyBinding>& key_bindings() {
  using C = ExperimentConfig;
  const auto dbl = [](const std::string& key, double C::*field) {
    return KeyBinding{
        key,
        [field](const C& c) { return detail::format_double(c.*field); },
        [field, key](C& c, const std::string& v) {
          c.*field = detail::parse_double(v, "config: " + key);
        }};
  };
  const auto str = [](const std::string& key, std::string C::*field) {
    return KeyBinding{key, [field](const C& c) { return c.*field; },
                      [field](C& c, const std::string& v) { c.*field = v; }};
  };
  const auto num = [](const std::string& key, auto accessor) {
    return KeyBinding{
        key,
        [accessor](const C& c) { return std::to_string(*accessor(const_cast<C&>(c))); },
        [accessor, key](C& c, const std::string& v) {
          using Field = std::remove_reference_t<decltype(*accessor(c))>;
          *accessor(c) = static_cast<Field>(detail::parse_int64(v, "config: " + key));
        }};
  };
  const auto flag = [](const std::string& key, auto accessor) {
    return KeyBinding{
        key,
        [accessor](const C& c) { return bool_text(*accessor(const_cast<C&>(c))); },
        [accessor, key](C& c, const std::string& v) {
          *accessor(c) = parse_bool(v, key);
        }};
  };
  const auto fdbl = [](const std::string& key, auto accessor) {
    return KeyBinding{
        key,
        [accessor](const C& c) { return detail::format_double(*accessor(const_cast<C&>(c))); },
        [accessor, key](C& c, const std::string& v) {
          *accessor(c) = detail::parse_double(v, "config: " + key);
        }};
  };

  static const std::vector<KeyBinding> bindings = [&] {
    std::vector<KeyBinding> b;
    b.push_back(str("name", &C::name));
    b.push_back(str("data.source", &C::data_source));
    b.push_back(str("data.file", &C::data_file));
    b.push_back(num("data.d_tab", [](C& c) { return &c.file_d_tab; }));
    b.push_back(num("data.d_rich", [](C& c) { return &c.file_d_rich; }));
    b.push_back(num("data.rich_used", [](C& c) { return &c.rich_used; }));
    b.push_back(KeyBinding{"task.kind",
                           [](const C& c) { return to_string(c.synth.task); },
                           [](C& c, const std::string& v) {
                             c.synth.task = task_kind_from_string(v);
                           }});
    b.push_back(num("task.classes", [](C& c) { return &c.synth.num_classes; }));
    b.push_back(num("synth.n", [](C& c) { return &c.synth.n; }));
    b.push_back(num("synth.d_tab", [](C& c) { return &c.synth.d_tab; }));
    b.push_back(num("synth.d_rich", [](C& c) { return &c.synth.d_rich; }));
    b.push_back(fdbl("synth.noise_sd", [](C& c) { return &c.synth.noise_sd; }));
    b.push_back(fdbl("synth.positive_share",
                     [](C& c) { return &c.synth.positive_share; }));
    b.push_back(num("synth.weight_seed", [](C& c) { return &c.synth.weight_seed; }));
    b.push_back(dbl("split.original", &C::split_original));
    b.push_back(dbl("split.train", &C::split_train));
    b.push_back(dbl("split.eval", &C::split_eval));
    b.push_back(fdbl("bias.label_drop", [](C& c) { return &c.bias.label_drop; }));
    b.push_back(fdbl("bias.row_drop", [](C& c) { return &c.bias.row_drop; }));
    b.push_back(fdbl("bias.sample_drop", [](C& c) { return &c.bias.sample_drop; }));
    b.push_back(dbl("ipw.clip_min", &C::clip_min));
    b.push_back(flag("ipw.feature_propensity",
                     [](C& c) { return &c.feature_propensity; }));
    b.push_back(num("gan.hidden_size", [](C& c) { return &c.gan.hidden_size; }));
    b.push_back(num("gan.g_iters", [](C& c) { return &c.gan.g_iters; }));
    b.push_back(num("gan.d_steps", [](C& c) { return &c.gan.d_steps; }));
    b.push_back(fdbl("gan.learning_rate", [](C& c) { return &c.gan.learning_rate; }));
    b.push_back(flag("gan.separate_discriminators",
                     [](C& c) { return &c.gan.separate_discriminators; }));
    b.push_back(flag("gan.scale_features", [](C& c) { return &c.gan.scale_features; }));
    b.push_back(num("gan.noise_dim", [](C& c) { return &c.gan.noise_dim; }));
    b.push_back(num("gan.batch_size", [](C& c) { return &c.gan.batch_size; }));
    b.push_back(fdbl("gan.adversarial_weight",
                     [](C& c) { return &c.gan.adversarial_weight; }));
    b.push_back(KeyBinding{"generate.mode",
                           [](const C& c) { return mode_text(c.generation); },
                           [](C& c, const std::string& v) {
                             c.generation = mode_from_text(v);
                           }});
    b.push_back(num("train.epochs", [](C& c) { return &c.train.epochs; }));
    b.push_back(num("train.hidden", [](C& c) { return &c.train.hidden; }));
    b.push_back(fdbl("train.learning_rate",
                     [](C& c) { return &c.train.learning_rate; }));
    b.push_back(num("train.batch_size", [](C& c) { return &c.train.batch_size; }));
    b.push_back(fdbl("train.validation_fraction",
                     [](C& c) { return &c.train.validation_fraction; }));
    b.push_back(num("dragonnet.trunk_width",
                    [](C& c) { return &c.dragonnet.trunk_width; }));
    b.push_back(num("dragonnet.head_width",
                    [](C& c) { return &c.dragonnet.head_width; }));
    b.push_back(num("dragonnet.epochs", [](C& c) { return &c.dragonnet.epochs; }));
    b.push_back(fdbl("dragonnet.learning_rate",
                     [](C& c) { return &c.dragonnet.learning_rate; }));
    b.push_back(num("dragonnet.batch_size",
                    [](C& c) { return &c.dragonnet.batch_size; }));
    b.push_back(flag("methods.uncorrected",
                     [](C& c) { return &c.methods.uncorrected; }));
    b.push_back(flag("methods.ipw", [](C& c) { return &c.methods.ipw; }));
    b.push_back(flag("methods.dragonnet", [](C& c) { return &c.methods.dragonnet; }));
    b.push_back(flag("methods.corrected", [](C& c) { return &c.methods.corrected; }));
    b.push_back(flag("methods.oracle", [](C& c) { return &c.methods.oracle; }));
    b.push_back(KeyBinding{"seeds",
                           [](const C& c) { return seeds_text(c.seeds); },
                           [](C& c, const std::string& v) { c.seeds = seeds_from_text(v); }});
    b.push_back(str("output.root", &C::output_root));
    std::sort(b.begin(), b.end(),
              [](const KeyBinding& x, const KeyBinding& y) { return x.key < y.key; });
    return b;
  }();
  return bindings;
}

const KeyBinding* find_binding(const std::string& key) {
  for (const KeyBinding& b : key_bindings()) {
    if (b.key == key) return &b;
  }
  return nullptr;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (const char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open " + path.string() + " for writing");
  out << content;
  require(out.good(), "failed writing " + path.string());
}

std::string fixed4(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", value);
  return buf;
}

std::string signed4(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.4f", value);
  return buf;
}

}  // namespace

int MethodToggles::enabled_count() const {
  return (uncorrected ? 1 : 0) + (ipw ? 1 : 0) + (dragonnet ? 1 : 0) +
         (corrected ? 1 : 0) + (oracle ? 1 : 0);
}

bool MethodToggles::enabled(const std::string& method) const {
  if (method == "uncorrected") return uncorrected;
  if (method == "ipw") return ipw;
  if (method == "dragonnet") return dragonnet;
  if (method == "corrected") return corrected;
  if (method == "oracle") return oracle;
  throw Error("MethodToggles: unknown method '" + method + "'");
}

void ExperimentConfig::validate() const {
  require(!name.empty() && name.find('/') == std::string::npos,
          "config: name must be nonempty and contain no '/'");
  if (data_source == "synthetic") {
    synth.validate();
  } else if (data_source == "file") {
    require(!data_file.empty(), "config: data.file is required when data.source = file");
    require(file_d_tab >= 1, "config: data.d_tab must be >= 1 for file sources");
    require(file_d_rich >= 0, "config: data.d_rich must be >= 0");
  } else {
    throw Error("config: data.source expects synthetic or file, got '" + data_source +
                "'");
  }
  require(rich_used >= -1, "config: data.rich_used must be >= -1");
  const int d_rich_available = data_source == "file" ? file_d_rich : synth.d_rich;
  require(rich_used <= d_rich_available,
          "config: data.rich_used exceeds the source's rich column count");
  for (const double f : {split_original, split_train, split_eval}) {
    require(f > 0.0, "config: split fractions must be positive");
  }
  require(split_original + split_train + split_eval <= 1.0 + 1e-9,
          "config: split fractions must sum to at most 1");
  for (const double d : {bias.label_drop, bias.row_drop, bias.sample_drop}) {
    require(d >= 0.0 && d < 1.0, "config: drop rates must lie in [0,1)");
  }
  require(clip_min > 0.0 && clip_min <= 1.0, "config: ipw.clip_min must lie in (0,1]");
  gan.validate();
  train.validate();
  dragonnet.validate();
  require(methods.enabled_count() >= 1, "config: at least one method must be enabled");
  require(!seeds.empty(), "config: at least one seed is required");
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp(line);
    const std::size_t comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    require(eq != std::string::npos, "config line " + std::to_string(line_no) +
                                         ": expected 'key = value', got '" + stripped +
                                         "'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    apply_config_override(cfg, key, value);
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

void apply_config_override(ExperimentConfig& cfg, const std::string& key,
                           const std::string& value) {
  const KeyBinding* binding = find_binding(key);
  require(binding != nullptr, "config: unknown key '" + key + "'");
  binding->set(cfg, value);
}

std::string serialize_experiment_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const KeyBinding& b : key_bindings()) {
    out += b.key;
    out += " = ";
    out += b.get(cfg);
    out += '\n';
  }
  return out;
}

std::string experiment_config_hash(const ExperimentConfig& cfg) {
  return hex64(fnv1a64(serialize_experiment_config(cfg)));
}

std::filesystem::path resolve_output_root(const ExperimentConfig& cfg) {
  if (!cfg.output_root.empty()) return cfg.output_root;
  if (const char* env = std::getenv("CFAUG_OUTPUT_ROOT"); env != nullptr && *env != '\0') {
    return env;
  }
  return "cfaug-out";
}

std::filesystem::path experiment_run_dir(const ExperimentConfig& cfg) {
  return resolve_output_root(cfg) / (cfg.name + "-" + experiment_config_hash(cfg));
}

namespace {

struct StageData {
  TaskSpec task;
  SplitBundle split;
  TabModel tab;
  BiasedTrainSet b;
  Dataset eval_biased;
};

Dataset restrict_rich_columns(const Dataset& d, int keep) {
  std::vector<Row> rows(d.rows());
  for (Row& r : rows) r.w = r.w.head(keep).eval();
  return Dataset(std::move(rows), d.task(), FeatureSchema{d.schema().d_tab, keep});
}

StageData build_stage(const ExperimentConfig& cfg, std::uint64_t master,
                      const std::optional<Dataset>& file_data) {
  StageData stage;
  Dataset data;
  if (file_data) {
    data = *file_data;
  } else {
    SynthConfig synth = cfg.synth;
    synth.data_seed = derive_seed(master, "synth-data");
    data = generate_synthetic(synth).first;
  }
  if (cfg.rich_used >= 0 && cfg.rich_used < data.schema().d_rich) {
    data = restrict_rich_columns(data, cfg.rich_used);
  }
  stage.task = data.task();
  stage.split = split_dataset(data, cfg.split_original, cfg.split_train, cfg.split_eval,
                              derive_seed(master, "split"));
  stage.tab = fit_tab_model(stage.split.d_original, stage.task,
                            derive_seed(master, "tab"));
  const std::vector<std::uint8_t> r_train = predict_recs(stage.tab, stage.split.d_train_pool);
  stage.b = induce_train_bias(stage.split.d_train_pool, r_train, cfg.bias.label_drop,
                              cfg.bias.row_drop, derive_seed(master, "bias"));
  stage.eval_biased = make_biased_eval(stage.split.d_eval, stage.tab,
                                       cfg.bias.sample_drop,
                                       derive_seed(master, "biased-eval"));
  return stage;
}

MetricsReport stamp(MetricsReport report, std::uint64_t master, const std::string& hash) {
  report.seed = master;
  report.config_hash = hash;
  return report;
}

std::map<std::string, MetricsReport> eval_both(const TaskModel& model,
                                               const StageData& stage,
                                               std::uint64_t master,
                                               const std::string& hash) {
  std::map<std::string, MetricsReport> out;
  out["unbiased"] = stamp(evaluate(model, stage.split.d_eval, stage.task), master, hash);
  out["biased"] = stamp(evaluate(model, stage.eval_biased, stage.task), master, hash);
  return out;
}

void write_metrics(const std::filesystem::path& seed_dir, const std::string& method,
                   const std::map<std::string, MetricsReport>& by_split) {
  for (const auto& [split, report] : by_split) {
    write_text_file(seed_dir / ("metrics_" + method + "_" + split + ".txt"),
                    report.to_text());
  }
}

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t master,
                 const std::string& hash, const std::optional<Dataset>& file_data,
                 const std::filesystem::path& run_dir,
                 const std::vector<std::string>& enabled) {
  SeedRun sr;
  sr.seed = master;
  const std::filesystem::path seed_dir = run_dir / ("seed_" + std::to_string(master));
  std::filesystem::create_directories(seed_dir);

  std::optional<StageData> stage;
  try {
    stage = build_stage(cfg, master, file_data);
    save_biased_train_set(stage->b, seed_dir / "biased_train.csv");
    if (cfg.methods.oracle) {
      save_vault(stage->b.oracle_vault(), seed_dir / "vault.csv");
    }
    try {
      const PropensityTable p = estimate_propensities(stage->b, cfg.clip_min);
      sr.analyses.e0 = p.e0;
      sr.analyses.e1 = p.e1;
    } catch (const std::exception&) {
    }
  } catch (const std::exception& e) {
    for (const std::string& method : enabled) {
      SeedMethodOutcome outcome;
      outcome.error = e.what();
      sr.methods[method] = outcome;
    }
    return sr;
  }

  const std::uint64_t task_seed = derive_seed(master, "task-model");
  const auto run_method = [&](const std::string& name,
                              const std::function<SeedMethodOutcome()>& fn) {
    if (!cfg.methods.enabled(name)) return;
    try {
      sr.methods[name] = fn();
    } catch (const std::exception& e) {
      SeedMethodOutcome outcome;
      outcome.error = e.what();
      sr.methods[name] = outcome;
    }
  };

  run_method("uncorrected", [&] {
    const TaskModel model =
        train_uncorrected(stage->b, stage->task, task_seed, cfg.train);
    SeedMethodOutcome outcome;
    outcome.by_split = eval_both(model, *stage, master, hash);
    outcome.ok = true;
    write_metrics(seed_dir, "uncorrected", outcome.by_split);
    return outcome;
  });

  run_method("ipw", [&] {
    TaskModel model;
    if (cfg.feature_propensity) {
      const std::vector<double> propensities = estimate_feature_propensities(
          stage->b, cfg.clip_min, derive_seed(master, "propensity"));
      model = train_ipw(stage->b, propensities, stage->task, task_seed, cfg.train);
    } else {
      const PropensityTable p = estimate_propensities(stage->b, cfg.clip_min);
      model = train_ipw(stage->b, p, stage->task, task_seed, cfg.train);
    }
    SeedMethodOutcome outcome;
    outcome.by_split = eval_both(model, *stage, master, hash);
    outcome.ok = true;
    write_metrics(seed_dir, "ipw", outcome.by_split);
    return outcome;
  });

  run_method("dragonnet", [&] {
    const DragonnetModel model = train_dragonnet(
        stage->b, stage->task, derive_seed(master, "dragonnet"), cfg.dragonnet);
    SeedMethodOutcome outcome;
    const Dataset& unbiased = stage->split.d_eval;
    outcome.by_split["unbiased"] = stamp(
        evaluate_predictions(model.predict_labels(unbiased.features(),
                                                  predict_recs(stage->tab, unbiased)),
                             unbiased, stage->task),
        master, hash);
    outcome.by_split["biased"] = stamp(
        evaluate_predictions(
            model.predict_labels(stage->eval_biased.features(),
                                 predict_recs(stage->tab, stage->eval_biased)),
            stage->eval_biased, stage->task),
        master, hash);
    outcome.ok = true;
    write_metrics(seed_dir, "dragonnet", outcome.by_split);
    return outcome;
  });

  run_method("corrected", [&] {
    const CganModel gan =
        train_cgan(stage->b, cfg.gan, stage->task, derive_seed(master, "cgan"));
    const CfLabels cf = generate_counterfactuals(gan, stage->b,
                                                 derive_seed(master, "generate"),
                                                 cfg.generation);
    save_cf_labels(cf, seed_dir / "cf_labels.csv");
    const CorrectedDataset corrected = augment(stage->b, cf);
    save_corrected(corrected, seed_dir / "corrected.csv");

    const DistReport balance =
        cfg.methods.oracle
            ? label_balance_report_oracle(stage->b, corrected, stage->task)
            : label_balance_report(stage->b, corrected, stage->task);
    write_text_file(seed_dir / "label_balance.txt", balance.to_text());
    sr.analyses.entropy_observed = balance.source("observed").entropy;
    sr.analyses.entropy_corrected = balance.source("corrected").entropy;
    sr.analyses.tv_observed_corrected = balance.tv_distance;

    if (cfg.methods.oracle && cf.size() > 0) {
      const DistReport cf_report =
          counterfactual_report(cf, stage->b.oracle_vault(), stage->task);
      write_text_file(seed_dir / "counterfactual.txt", cf_report.to_text());
      sr.analyses.tv_generated_true = cf_report.tv_distance;
      sr.analyses.agreement_generated_true = cf_report.agreement;
    }

    const TaskModel model = train_task_model(corrected, stage->task, task_seed, cfg.train);
    SeedMethodOutcome outcome;
    outcome.by_split = eval_both(model, *stage, master, hash);
    outcome.ok = true;
    write_metrics(seed_dir, "corrected", outcome.by_split);
    return outcome;
  });

  run_method("oracle", [&] {
    try {
      const PropensityTable p = estimate_propensities(stage->b, cfg.clip_min);
      const PropensityMeanCheck check = propensity_mean_check_oracle(stage->b, p);
      std::ostringstream text;
      text << "weighted_mean = " << detail::format_double(check.weighted_mean) << '\n'
           << "restored_mean = " << detail::format_double(check.restored_mean) << '\n'
           << "gap = " << detail::format_double(check.gap) << '\n';
      write_text_file(seed_dir / "propensity_check.txt", text.str());
      sr.analyses.propensity_weighted_mean = check.weighted_mean;
      sr.analyses.vault_restored_mean = check.restored_mean;
    } catch (const std::exception&) {
    }
    const TaskModel model = train_oracle(stage->b, stage->task, task_seed, cfg.train);
    SeedMethodOutcome outcome;
    outcome.by_split = eval_both(model, *stage, master, hash);
    outcome.ok = true;
    write_metrics(seed_dir, "oracle", outcome.by_split);
    return outcome;
  });

  return sr;
}

void aggregate_results(ExperimentResult& result) {
  for (const std::string split : {"unbiased", "biased"}) {
    for (const std::string& method : result.methods_enabled) {
      for (const std::string& metric : result.metric_names_used) {
        std::vector<double> values;
        for (const SeedRun& sr : result.seed_runs) {
          const auto it = sr.methods.find(method);
          if (it == sr.methods.end() || !it->second.ok) continue;
          const auto split_it = it->second.by_split.find(split);
          if (split_it == it->second.by_split.end()) continue;
          const std::optional<double> value = split_it->second.metric(metric);
          if (value) values.push_back(*value);
        }
        if (values.empty()) continue;
        std::sort(values.begin(), values.end());
        double sum = 0.0;
        for (const double v : values) sum += v;
        const double mean = sum / static_cast<double>(values.size());
        double sq = 0.0;
        for (const double v : values) sq += (v - mean) * (v - mean);
        AggregateCell cell;
        cell.mean = mean;
        cell.stdev = values.size() > 1
                         ? std::sqrt(sq / static_cast<double>(values.size() - 1))
                         : 0.0;
        cell.n = static_cast<int>(values.size());
        result.aggregate[split][method][metric] = cell;
      }
    }
  }
}

void compute_improvement(ExperimentResult& result) {
  const bool has_corrected =
      std::find(result.methods_enabled.begin(), result.methods_enabled.end(),
                "corrected") != result.methods_enabled.end();
  if (!has_corrected) return;
  for (const auto& [split, methods] : result.aggregate) {
    const auto ca_it = methods.find("corrected");
    if (ca_it == methods.end()) continue;
    for (const std::string& metric : result.metric_names_used) {
      const auto ca_metric = ca_it->second.find(metric);
      if (ca_metric == ca_it->second.end()) continue;
      std::optional<double> best;
      for (const std::string competitor : {"uncorrected", "ipw", "dragonnet"}) {
        const auto comp_it = methods.find(competitor);
        if (comp_it == methods.end()) continue;
        const auto comp_metric = comp_it->second.find(metric);
        if (comp_metric == comp_it->second.end()) continue;
        const double value = comp_metric->second.mean;
        if (!best) {
          best = value;
        } else if (lower_is_better(metric) ? value < *best : value > *best) {
          best = value;
        }
      }
      if (!best) continue;
      result.improvement[split][metric] = lower_is_better(metric)
                                              ? *best - ca_metric->second.mean
                                              : ca_metric->second.mean - *best;
    }
  }
}

json analyses_to_json(const SeedAnalyses& a) {
  json out = json::object();
  const auto put = [&](const char* key, const std::optional<double>& value) {
    if (value) out[key] = *value;
  };
  put("e0", a.e0);
  put("e1", a.e1);
  put("entropy_observed", a.entropy_observed);
  put("entropy_corrected", a.entropy_corrected);
  put("tv_observed_corrected", a.tv_observed_corrected);
  put("tv_generated_true", a.tv_generated_true);
  put("agreement_generated_true", a.agreement_generated_true);
  put("propensity_weighted_mean", a.propensity_weighted_mean);
  put("vault_restored_mean", a.vault_restored_mean);
  return out;
}

SeedAnalyses analyses_from_json(const json& j) {
  SeedAnalyses a;
  const auto get = [&](const char* key, std::optional<double>& value) {
    if (j.contains(key)) value = j.at(key).get<double>();
  };
  get("e0", a.e0);
  get("e1", a.e1);
  get("entropy_observed", a.entropy_observed);
  get("entropy_corrected", a.entropy_corrected);
  get("tv_observed_corrected", a.tv_observed_corrected);
  get("tv_generated_true", a.tv_generated_true);
  get("agreement_generated_true", a.agreement_generated_true);
  get("propensity_weighted_mean", a.propensity_weighted_mean);
  get("vault_restored_mean", a.vault_restored_mean);
  return a;
}

void set_metric(MetricsReport& report, const std::string& name, double value) {
  if (name == "accuracy") {
    report.accuracy = value;
  } else if (name == "f1") {
    report.f1 = value;
  } else if (name == "f1_macro") {
    report.f1_macro = value;
  } else if (name == "f1_minority") {
    report.f1_minority = value;
  } else if (name == "r2") {
    report.r2 = value;
  } else if (name == "nrmse") {
    report.nrmse = value;
  } else {
    throw Error("results: unknown metric '" + name + "'");
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();

  ExperimentResult result;
  result.config_text = serialize_experiment_config(cfg);
  result.config_hash = experiment_config_hash(cfg);
  result.version = kVersion;

  std::optional<Dataset> file_data;
  if (cfg.data_source == "file") {
    TaskSpec task;
    task.kind = cfg.synth.task;
    task.num_classes = cfg.synth.num_classes;
    file_data = load_dataset(cfg.data_file,
                             ColumnSchema::standard(cfg.file_d_tab, cfg.file_d_rich),
                             task);
    result.task_kind = file_data->task().kind;
  } else {
    result.task_kind = cfg.synth.task;
  }
  result.metric_names_used = metric_names(result.task_kind);
  for (const std::string& method : method_order()) {
    if (cfg.methods.enabled(method)) result.methods_enabled.push_back(method);
  }

  const std::filesystem::path run_dir = experiment_run_dir(cfg);
  std::filesystem::create_directories(run_dir);

  for (const std::uint64_t seed : cfg.seeds) {
    result.seed_runs.push_back(run_seed(cfg, seed, result.config_hash, file_data,
                                        run_dir, result.methods_enabled));
  }

  aggregate_results(result);
  compute_improvement(result);

  bool all_ok = true;
  bool any_ok = false;
  std::string first_error;
  for (const SeedRun& sr : result.seed_runs) {
    for (const std::string& method : result.methods_enabled) {
      const auto it = sr.methods.find(method);
      const bool ok = it != sr.methods.end() && it->second.ok;
      all_ok = all_ok && ok;
      any_ok = any_ok || ok;
      if (!ok && first_error.empty() && it != sr.methods.end()) {
        first_error = it->second.error;
      }
    }
  }
  result.all_succeeded = all_ok;

  write_text_file(run_dir / "config.txt", result.config_text);
  write_text_file(run_dir / "results.json", result_to_json(result));
  write_text_file(run_dir / "tables.txt", render_tables(result, TableFormat::Plain));
  write_text_file(run_dir / "tables.csv", render_tables(result, TableFormat::Delimited));
  write_text_file(run_dir / "tables.md", render_tables(result, TableFormat::Markup));

  if (!any_ok) {
    throw Error("run_experiment: every method failed on every seed; first error: " +
                first_error);
  }
  return result;
}

TableFormat table_format_from_string(const std::string& name) {
  if (name == "plain") return TableFormat::Plain;
  if (name == "delimited") return TableFormat::Delimited;
  if (name == "markup") return TableFormat::Markup;
  throw Error("render_tables: unknown format '" + name + "' (expected plain, delimited, or markup)");
}

std::string render_tables(const ExperimentResult& r, TableFormat format) {
  require(!r.seed_runs.empty(), "render_tables: empty result");

  if (format == TableFormat::Delimited) {
    std::ostringstream out;
    out << "split,method,metric,mean,stdev,n\n";
    for (const auto& [split, methods] : r.aggregate) {
      for (const std::string& method : r.methods_enabled) {
        const auto it = methods.find(method);
        if (it == methods.end()) continue;
        for (const std::string& metric : r.metric_names_used) {
          const auto cell = it->second.find(metric);
          if (cell == it->second.end()) continue;
          out << split << ',' << method << ',' << metric << ','
              << detail::format_double(cell->second.mean) << ','
              << detail::format_double(cell->second.stdev) << ',' << cell->second.n
              << '\n';
        }
      }
      const auto imp = r.improvement.find(split);
      if (imp != r.improvement.end()) {
        for (const std::string& metric : r.metric_names_used) {
          const auto value = imp->second.find(metric);
          if (value == imp->second.end()) continue;
          out << split << ",improvement," << metric << ','
              << detail::format_double(value->second) << ",0,0\n";
        }
      }
    }
    return out.str();
  }

  const bool markup = format == TableFormat::Markup;
  std::ostringstream out;
  for (const std::string split : {"unbiased", "biased"}) {
    const auto methods_it = r.aggregate.find(split);

    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header{"method"};
    for (const std::string& metric : r.metric_names_used) header.push_back(metric);
    grid.push_back(header);

    for (const std::string& method : r.methods_enabled) {
      std::vector<std::string> row{display_name(method)};
      const std::map<std::string, AggregateCell>* cells = nullptr;
      if (methods_it != r.aggregate.end()) {
        const auto method_it = methods_it->second.find(method);
        if (method_it != methods_it->second.end()) cells = &method_it->second;
      }
      for (const std::string& metric : r.metric_names_used) {
        if (cells != nullptr) {
          const auto cell = cells->find(metric);
          if (cell != cells->end()) {
            row.push_back(fixed4(cell->second.mean) + " +/- " +
                          fixed4(cell->second.stdev));
            continue;
          }
        }
        row.push_back("failed");
      }
      grid.push_back(row);
    }

    const auto imp = r.improvement.find(split);
    if (imp != r.improvement.end() && !imp->second.empty()) {
      std::vector<std::string> row{display_name("improvement")};
      for (const std::string& metric : r.metric_names_used) {
        const auto value = imp->second.find(metric);
        row.push_back(value != imp->second.end() ? signed4(value->second) : "");
      }
      grid.push_back(row);
    }

    const std::string title = std::string("Task metrics (") + split + " eval)";
    if (markup) {
      out << "## " << title << "\n\n";
      for (std::size_t i = 0; i < grid.size(); ++i) {
        out << '|';
        for (const std::string& cell : grid[i]) out << ' ' << cell << " |";
        out << '\n';
        if (i == 0) {
          out << '|';
          for (std::size_t j = 0; j < grid[0].size(); ++j) out << " --- |";
          out << '\n';
        }
      }
      out << '\n';
    } else {
      std::vector<std::size_t> widths(grid[0].size(), 0);
      for (const auto& row : grid) {
        for (std::size_t j = 0; j < row.size(); ++j) {
          widths[j] = std::max(widths[j], row[j].size());
        }
      }
      out << title << "\n\n";
      for (const auto& row : grid) {
        for (std::size_t j = 0; j < row.size(); ++j) {
          out << row[j];
          if (j + 1 < row.size()) {
            out << std::string(widths[j] - row[j].size() + 2, ' ');
          }
        }
        out << '\n';
      }
      out << '\n';
    }
  }
  return out.str();
}

std::string result_to_json(const ExperimentResult& r) {
  json root;
  root["config"] = r.config_text;
  root["config_hash"] = r.config_hash;
  root["version"] = r.version;
  root["task_kind"] = to_string(r.task_kind);
  root["metric_names"] = r.metric_names_used;
  root["methods_enabled"] = r.methods_enabled;
  root["all_succeeded"] = r.all_succeeded;

  json seeds = json::array();
  for (const SeedRun& sr : r.seed_runs) {
    json seed_json;
    seed_json["seed"] = sr.seed;
    seed_json["analyses"] = analyses_to_json(sr.analyses);
    json methods = json::object();
    for (const auto& [name, outcome] : sr.methods) {
      json method_json;
      method_json["ok"] = outcome.ok;
      if (!outcome.error.empty()) method_json["error"] = outcome.error;
      json splits = json::object();
      for (const auto& [split, report] : outcome.by_split) {
        json split_json;
        split_json["n_eval"] = report.n_eval;
        json metrics = json::object();
        for (const std::string& metric : r.metric_names_used) {
          if (const std::optional<double> value = report.metric(metric)) {
            metrics[metric] = *value;
          }
        }
        split_json["metrics"] = metrics;
        splits[split] = split_json;
      }
      method_json["splits"] = splits;
      methods[name] = method_json;
    }
    seed_json["methods"] = methods;
    seeds.push_back(seed_json);
  }
  root["seed_runs"] = seeds;

  json aggregate = json::object();
  for (const auto& [split, methods] : r.aggregate) {
    json split_json = json::object();
    for (const auto& [method, metrics] : methods) {
      json method_json = json::object();
      for (const auto& [metric, cell] : metrics) {
        method_json[metric] = {{"mean", cell.mean}, {"stdev", cell.stdev}, {"n", cell.n}};
      }
      split_json[method] = method_json;
    }
    aggregate[split] = split_json;
  }
  root["aggregate"] = aggregate;

  json improvement = json::object();
  for (const auto& [split, metrics] : r.improvement) {
    json split_json = json::object();
    for (const auto& [metric, value] : metrics) split_json[metric] = value;
    improvement[split] = split_json;
  }
  root["improvement"] = improvement;

  return root.dump(2) + "\n";
}

ExperimentResult result_from_json(const std::string& json_text) {
  const json root = json::parse(json_text);
  ExperimentResult r;
  r.config_text = root.at("config").get<std::string>();
  r.config_hash = root.at("config_hash").get<std::string>();
  r.version = root.at("version").get<std::string>();
  r.task_kind = task_kind_from_string(root.at("task_kind").get<std::string>());
  r.metric_names_used = root.at("metric_names").get<std::vector<std::string>>();
  r.methods_enabled = root.at("methods_enabled").get<std::vector<std::string>>();
  r.all_succeeded = root.at("all_succeeded").get<bool>();

  for (const json& seed_json : root.at("seed_runs")) {
    SeedRun sr;
    sr.seed = seed_json.at("seed").get<std::uint64_t>();
    sr.analyses = analyses_from_json(seed_json.at("analyses"));
    for (const auto& [name, method_json] : seed_json.at("methods").items()) {
      SeedMethodOutcome outcome;
      outcome.ok = method_json.at("ok").get<bool>();
      if (method_json.contains("error")) {
        outcome.error = method_json.at("error").get<std::string>();
      }
      for (const auto& [split, split_json] : method_json.at("splits").items()) {
        MetricsReport report;
        report.n_eval = split_json.at("n_eval").get<std::int64_t>();
        report.seed = sr.seed;
        report.config_hash = r.config_hash;
        for (const auto& [metric, value] : split_json.at("metrics").items()) {
          set_metric(report, metric, value.get<double>());
        }
        outcome.by_split[split] = report;
      }
      sr.methods[name] = outcome;
    }
    r.seed_runs.push_back(std::move(sr));
  }

  for (const auto& [split, methods] : root.at("aggregate").items()) {
    for (const auto& [method, metrics] : methods.items()) {
      for (const auto& [metric, cell_json] : metrics.items()) {
        AggregateCell cell;
        cell.mean = cell_json.at("mean").get<double>();
        cell.stdev = cell_json.at("stdev").get<double>();
        cell.n = cell_json.at("n").get<int>();
        r.aggregate[split][method][metric] = cell;
      }
    }
  }

  for (const auto& [split, metrics] : root.at("improvement").items()) {
    for (const auto& [metric, value] : metrics.items()) {
      r.improvement[split][metric] = value.get<double>();
    }
  }
  return r;
}

}  // namespace cfaug
