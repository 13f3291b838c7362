#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cfaug/detail/text.hpp"
#include "cfaug/experiment.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cfaug;

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

ExperimentConfig small_config(const std::string& name, const fs::path& root) {
  ExperimentConfig cfg;
  cfg.name = name;
  cfg.synth.n = 1600;
  cfg.synth.d_tab = 5;
  cfg.synth.d_rich = 2;
  cfg.rich_used = 0;
  cfg.gan.hidden_size = 16;
  cfg.gan.g_iters = 40;
  cfg.gan.d_steps = 2;
  cfg.gan.learning_rate = 1e-3;
  cfg.gan.batch_size = 32;
  cfg.gan.noise_dim = 3;
  cfg.dragonnet.trunk_width = 32;
  cfg.dragonnet.head_width = 16;
  cfg.dragonnet.epochs = 2;
  cfg.seeds = {7};
  cfg.output_root = root.string();
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool tree_contains_text(const fs::path& root, const std::string& needle) {
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    if (slurp(entry.path()).find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("config text round trips through parse and serialize") {
  const ExperimentConfig defaults;
  const std::string canonical = serialize_experiment_config(defaults);
  const ExperimentConfig reparsed = parse_experiment_config(canonical);
  CHECK(serialize_experiment_config(reparsed) == canonical);

  ExperimentConfig custom;
  custom.name = "spin";
  custom.synth.n = 4242;
  custom.synth.task = TaskKind::Multiclass;
  custom.synth.num_classes = 4;
  custom.rich_used = 3;
  custom.bias.label_drop = 0.8;
  custom.clip_min = 0.05;
  custom.feature_propensity = true;
  custom.gan.separate_discriminators = false;
  custom.gan.adversarial_weight = 0.5;
  custom.generation = GenerationMode::Expected;
  custom.train.hidden = 12;
  custom.methods.dragonnet = false;
  custom.seeds = {11, 12, 13};
  custom.output_root = "/tmp/spin-out";
  const std::string text = serialize_experiment_config(custom);
  const ExperimentConfig back = parse_experiment_config(text);
  CHECK(serialize_experiment_config(back) == text);
  CHECK(back.synth.task == TaskKind::Multiclass);
  CHECK(back.synth.num_classes == 4);
  CHECK(back.generation == GenerationMode::Expected);
  CHECK(back.methods.dragonnet == false);
  CHECK((back.seeds == std::vector<std::uint64_t>{11, 12, 13}));
  CHECK(back.output_root == "/tmp/spin-out");
}

TEST_CASE("config parsing accepts comments and rejects unknown keys") {
  const std::string text =
      "# comment line\n"
      "\n"
      "name = demo\n"
      "synth.n = 500\n"
      "seeds = 1, 2, 3\n";
  const ExperimentConfig cfg = parse_experiment_config(text);
  CHECK(cfg.name == "demo");
  CHECK(cfg.synth.n == 500);
  CHECK((cfg.seeds == std::vector<std::uint64_t>{1, 2, 3}));

  CHECK_THROWS_WITH_AS(parse_experiment_config("bogus.key = 1\n"),
                       doctest::Contains("unknown key"), Error);
  CHECK_THROWS_AS(parse_experiment_config("name demo\n"), Error);
}

TEST_CASE("config overrides reach every value family") {
  ExperimentConfig cfg;
  apply_config_override(cfg, "name", "alt");
  CHECK(cfg.name == "alt");
  apply_config_override(cfg, "synth.n", "777");
  CHECK(cfg.synth.n == 777);
  apply_config_override(cfg, "bias.label_drop", "0.5");
  CHECK(cfg.bias.label_drop == 0.5);
  apply_config_override(cfg, "gan.separate_discriminators", "false");
  CHECK_FALSE(cfg.gan.separate_discriminators);
  apply_config_override(cfg, "generate.mode", "expected");
  CHECK(cfg.generation == GenerationMode::Expected);
  apply_config_override(cfg, "methods.oracle", "false");
  CHECK_FALSE(cfg.methods.oracle);
  apply_config_override(cfg, "seeds", "4,5");
  CHECK((cfg.seeds == std::vector<std::uint64_t>{4, 5}));
  apply_config_override(cfg, "task.kind", "regression");
  CHECK(cfg.synth.task == TaskKind::Regression);

  CHECK_THROWS_AS(apply_config_override(cfg, "gan.nonsense", "1"), Error);
  CHECK_THROWS_AS(apply_config_override(cfg, "methods.oracle", "maybe"), Error);
  CHECK_THROWS_AS(apply_config_override(cfg, "generate.mode", "sideways"), Error);
}

TEST_CASE("config validation guards structure and ranges") {
  const auto invalid = [](auto mutate) {
    ExperimentConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(cfg.validate(), Error);
  };
  invalid([](ExperimentConfig& c) { c.name = ""; });
  invalid([](ExperimentConfig& c) { c.name = "a/b"; });
  invalid([](ExperimentConfig& c) { c.data_source = "mystery"; });
  invalid([](ExperimentConfig& c) { c.data_source = "file"; });
  invalid([](ExperimentConfig& c) { c.rich_used = -2; });
  invalid([](ExperimentConfig& c) { c.rich_used = c.synth.d_rich + 1; });
  invalid([](ExperimentConfig& c) { c.split_original = 0.0; });
  invalid([](ExperimentConfig& c) {
    c.split_original = 0.5;
    c.split_train = 0.4;
    c.split_eval = 0.2;
  });
  invalid([](ExperimentConfig& c) { c.bias.label_drop = 1.0; });
  invalid([](ExperimentConfig& c) { c.bias.sample_drop = -0.1; });
  invalid([](ExperimentConfig& c) { c.clip_min = 0.0; });
  invalid([](ExperimentConfig& c) { c.clip_min = 1.5; });
  invalid([](ExperimentConfig& c) { c.gan.batch_size = 1; });
  invalid([](ExperimentConfig& c) { c.train.epochs = 0; });
  invalid([](ExperimentConfig& c) { c.dragonnet.trunk_width = 0; });
  invalid([](ExperimentConfig& c) {
    c.methods = MethodToggles{false, false, false, false, false};
  });
  invalid([](ExperimentConfig& c) { c.seeds.clear(); });
  CHECK_NOTHROW(ExperimentConfig{}.validate());
}

TEST_CASE("config hashes are stable and sensitive") {
  const ExperimentConfig a;
  const ExperimentConfig b;
  CHECK(experiment_config_hash(a) == experiment_config_hash(b));
  CHECK(experiment_config_hash(a).size() == 16);
  ExperimentConfig c;
  c.synth.n = 123;
  CHECK(experiment_config_hash(c) != experiment_config_hash(a));
}

TEST_CASE("output root resolution prefers config over environment over default") {
  ExperimentConfig cfg;
  cfg.output_root = "/tmp/explicit-root";
  CHECK(resolve_output_root(cfg) == fs::path("/tmp/explicit-root"));

  cfg.output_root.clear();
  REQUIRE(setenv("CFAUG_OUTPUT_ROOT", "/tmp/env-root", 1) == 0);
  CHECK(resolve_output_root(cfg) == fs::path("/tmp/env-root"));
  REQUIRE(unsetenv("CFAUG_OUTPUT_ROOT") == 0);
  CHECK(resolve_output_root(cfg) == fs::path("cfaug-out"));

  cfg.output_root = "/tmp/dir-root";
  cfg.name = "runner";
  const fs::path dir = experiment_run_dir(cfg);
  CHECK(dir.parent_path() == fs::path("/tmp/dir-root"));
  CHECK(dir.filename().string() == "runner-" + experiment_config_hash(cfg));
}

TEST_CASE("table rendering covers the three formats") {
  ExperimentResult r;
  r.task_kind = TaskKind::Binary;
  r.metric_names_used = {"accuracy", "f1_minority"};
  r.methods_enabled = {"uncorrected", "corrected"};
  r.seed_runs.resize(1);
  r.seed_runs[0].seed = 1;
  for (const std::string split : {"unbiased", "biased"}) {
    r.aggregate[split]["uncorrected"]["accuracy"] = {0.8, 0.01, 1};
    r.aggregate[split]["uncorrected"]["f1_minority"] = {0.1, 0.02, 1};
    r.aggregate[split]["corrected"]["accuracy"] = {0.85, 0.01, 1};
    r.aggregate[split]["corrected"]["f1_minority"] = {0.4, 0.05, 1};
    r.improvement[split]["accuracy"] = 0.05;
    r.improvement[split]["f1_minority"] = 0.3;
  }
  r.all_succeeded = true;

  const std::string plain = render_tables(r, TableFormat::Plain);
  CHECK(plain.find("Uncorrected") != std::string::npos);
  CHECK(plain.find("CA") != std::string::npos);
  CHECK(plain.find("Improvement") != std::string::npos);
  CHECK(plain.find("unbiased") != std::string::npos);
  CHECK(plain.find("biased") != std::string::npos);
  CHECK(plain.find("+0.3000") != std::string::npos);

  const std::string markup = render_tables(r, TableFormat::Markup);
  CHECK(markup.find('|') != std::string::npos);
  CHECK(markup.find("---") != std::string::npos);

  const std::string delim = render_tables(r, TableFormat::Delimited);
  std::istringstream in(delim);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "split,method,metric,mean,stdev,n");
  bool found_cell = false;
  while (std::getline(in, line)) {
    if (line.rfind("unbiased,corrected,f1_minority,", 0) == 0) {
      const auto fields = detail::split_line(line, ',');
      REQUIRE(fields.size() == 6);
      CHECK(detail::parse_double(fields[3], "cell") == 0.4);
      CHECK(fields[5] == "1");
      found_cell = true;
    }
  }
  CHECK(found_cell);

  ExperimentResult lone = r;
  lone.methods_enabled = {"uncorrected"};
  lone.improvement.clear();
  for (auto& [split, methods] : lone.aggregate) methods.erase("corrected");
  const std::string lone_plain = render_tables(lone, TableFormat::Plain);
  CHECK(lone_plain.find("Improvement") == std::string::npos);

  CHECK(table_format_from_string("plain") == TableFormat::Plain);
  CHECK(table_format_from_string("delimited") == TableFormat::Delimited);
  CHECK(table_format_from_string("markup") == TableFormat::Markup);
  CHECK_THROWS_AS(table_format_from_string("tsv"), Error);
}

TEST_CASE("a small synthetic experiment runs end to end with every artifact") {
  const fs::path root = fresh_dir("cfaug_exp_end_to_end");
  const ExperimentConfig cfg = small_config("unit", root);
  const ExperimentResult result = run_experiment(cfg);

  CHECK(result.all_succeeded);
  CHECK(result.config_hash == experiment_config_hash(cfg));
  CHECK(result.config_text == serialize_experiment_config(cfg));
  CHECK(result.task_kind == TaskKind::Binary);
  CHECK(result.metric_names_used ==
        std::vector<std::string>{"accuracy", "f1", "f1_macro", "f1_minority"});
  CHECK(result.methods_enabled ==
        std::vector<std::string>{"uncorrected", "ipw", "dragonnet", "corrected",
                                 "oracle"});
  REQUIRE(result.seed_runs.size() == 1);
  const SeedRun& run = result.seed_runs[0];
  CHECK(run.seed == 7);
  for (const std::string& method : result.methods_enabled) {
    REQUIRE(run.methods.count(method) == 1);
    const SeedMethodOutcome& outcome = run.methods.at(method);
    CAPTURE(method);
    CHECK(outcome.ok);
    REQUIRE(outcome.by_split.count("unbiased") == 1);
    REQUIRE(outcome.by_split.count("biased") == 1);
    CHECK(outcome.by_split.at("unbiased").accuracy.has_value());
  }
  CHECK(run.analyses.e0.has_value());
  CHECK(run.analyses.e1.value() == 1.0);
  CHECK(run.analyses.entropy_observed.has_value());
  CHECK(run.analyses.entropy_corrected.has_value());
  CHECK(run.analyses.tv_generated_true.has_value());
  CHECK(run.analyses.agreement_generated_true.has_value());
  CHECK(run.analyses.propensity_weighted_mean.has_value());

  const fs::path dir = experiment_run_dir(cfg);
  CHECK(fs::exists(dir / "config.txt"));
  CHECK(fs::exists(dir / "results.json"));
  CHECK(fs::exists(dir / "tables.txt"));
  CHECK(fs::exists(dir / "tables.csv"));
  CHECK(fs::exists(dir / "tables.md"));
  const fs::path seed_dir = dir / "seed_7";
  CHECK(fs::exists(seed_dir / "biased_train.csv"));
  CHECK(fs::exists(seed_dir / "vault.csv"));
  CHECK(fs::exists(seed_dir / "cf_labels.csv"));
  CHECK(fs::exists(seed_dir / "corrected.csv"));
  CHECK(fs::exists(seed_dir / "label_balance.txt"));
  CHECK(fs::exists(seed_dir / "counterfactual.txt"));
  CHECK(fs::exists(seed_dir / "propensity_check.txt"));
  for (const std::string& method : result.methods_enabled) {
    for (const std::string split : {"unbiased", "biased"}) {
      CHECK(fs::exists(seed_dir / ("metrics_" + method + "_" + split + ".txt")));
    }
  }

  const std::string header = [&] {
    std::ifstream in(seed_dir / "biased_train.csv");
    std::string line;
    std::getline(in, line);
    return line;
  }();
  CHECK(header.find(",w") == std::string::npos);
  CHECK(header.find(",r,a") != std::string::npos);

  const std::string config_text = slurp(dir / "config.txt");
  CHECK(config_text == serialize_experiment_config(cfg));

  for (const std::string& split : {std::string("unbiased"), std::string("biased")}) {
    for (const std::string& metric : result.metric_names_used) {
      const auto& agg = result.aggregate.at(split);
      const double corrected = agg.at("corrected").at(metric).mean;
      double best = agg.at("uncorrected").at(metric).mean;
      best = std::max(best, agg.at("ipw").at(metric).mean);
      best = std::max(best, agg.at("dragonnet").at(metric).mean);
      CHECK(result.improvement.at(split).at(metric) ==
            doctest::Approx(corrected - best).epsilon(1e-12));
    }
  }

  const std::string json_bytes = slurp(dir / "results.json");
  CHECK(json_bytes == result_to_json(result));
  const std::string tables_csv = slurp(dir / "tables.csv");
  CHECK(tables_csv == render_tables(result, TableFormat::Delimited));

  const ExperimentResult parsed = result_from_json(json_bytes);
  CHECK(parsed.config_hash == result.config_hash);
  CHECK(parsed.all_succeeded == result.all_succeeded);
  CHECK(parsed.metric_names_used == result.metric_names_used);
  CHECK(parsed.methods_enabled == result.methods_enabled);
  REQUIRE(parsed.seed_runs.size() == 1);
  CHECK(parsed.seed_runs[0].methods.at("corrected").by_split.at("unbiased").f1_minority ==
        result.seed_runs[0].methods.at("corrected").by_split.at("unbiased").f1_minority);
  CHECK(result_to_json(parsed) == json_bytes);
  CHECK(parsed.improvement == result.improvement);

  const ExperimentResult rerun = run_experiment(cfg);
  CHECK(slurp(dir / "results.json") == json_bytes);
  CHECK(slurp(dir / "tables.csv") == tables_csv);
  CHECK(result_to_json(rerun) == json_bytes);

  fs::remove_all(root);
}

TEST_CASE("seed runs are isolated: adding a seed leaves existing ones unchanged") {
  const fs::path root = fresh_dir("cfaug_exp_seed_isolation");
  ExperimentConfig one = small_config("iso", root);
  one.methods.dragonnet = false;
  one.methods.oracle = false;
  one.methods.ipw = false;
  ExperimentConfig two = one;
  two.seeds = {7, 8};

  const ExperimentResult r1 = run_experiment(one);
  const ExperimentResult r2 = run_experiment(two);

  const auto& m1 = r1.seed_runs[0].methods.at("corrected").by_split.at("unbiased");
  const SeedRun* run7 = nullptr;
  for (const SeedRun& run : r2.seed_runs) {
    if (run.seed == 7) run7 = &run;
  }
  REQUIRE(run7 != nullptr);
  const auto& m2 = run7->methods.at("corrected").by_split.at("unbiased");
  CHECK(m1.accuracy == m2.accuracy);
  CHECK(m1.f1_minority == m2.f1_minority);
  REQUIRE(r1.seed_runs[0].analyses.entropy_corrected.has_value());
  CHECK(r1.seed_runs[0].analyses.entropy_corrected ==
        run7->analyses.entropy_corrected);

  ExperimentConfig swapped = two;
  swapped.seeds = {8, 7};
  const ExperimentResult r3 = run_experiment(swapped);
  for (const auto& [split, methods] : r2.aggregate) {
    for (const auto& [method, metrics] : methods) {
      for (const auto& [metric, cell] : metrics) {
        const AggregateCell& other = r3.aggregate.at(split).at(method).at(metric);
        CHECK(other.mean == cell.mean);
        CHECK(other.stdev == cell.stdev);
        CHECK(other.n == cell.n);
      }
    }
  }

  fs::remove_all(root);
}

TEST_CASE("disabling the oracle keeps vault data out of the run directory") {
  const fs::path root = fresh_dir("cfaug_exp_vault_hygiene");
  ExperimentConfig cfg = small_config("sealed", root);
  cfg.methods.oracle = false;
  const ExperimentResult result = run_experiment(cfg);
  CHECK(result.all_succeeded);
  CHECK(result.methods_enabled ==
        std::vector<std::string>{"uncorrected", "ipw", "dragonnet", "corrected"});

  const fs::path dir = experiment_run_dir(cfg);
  bool vault_file = false;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.path().filename() == "vault.csv") vault_file = true;
  }
  CHECK_FALSE(vault_file);
  CHECK_FALSE(fs::exists(dir / "seed_7" / "counterfactual.txt"));
  CHECK_FALSE(fs::exists(dir / "seed_7" / "propensity_check.txt"));
  CHECK_FALSE(tree_contains_text(dir, std::string(detail::kVaultSentinel)));

  const SeedRun& run = result.seed_runs[0];
  CHECK_FALSE(run.analyses.tv_generated_true.has_value());
  CHECK_FALSE(run.analyses.agreement_generated_true.has_value());
  CHECK(run.analyses.entropy_corrected.has_value());

  fs::remove_all(root);
}
