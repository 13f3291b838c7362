#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <vector>

#include "cfaug/bias.hpp"
#include "cfaug/synthetic.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cfaug;
using cfaug::testutil::make_row;
using cfaug::testutil::temp_path;

namespace {

double train_accuracy(const TabModel& m, const Dataset& d) {
  const Eigen::VectorXd values = m.predict_values(d.tabular_features());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (values(static_cast<Eigen::Index>(i)) == d.rows()[i].y) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

Dataset line_dataset(int n, double slope, double intercept) {
  std::vector<Row> rows;
  for (int i = 1; i <= n; ++i) {
    const double x = static_cast<double>(i);
    rows.push_back(make_row(i, {x}, {}, slope * x + intercept));
  }
  TaskSpec task;
  task.kind = TaskKind::Regression;
  return Dataset(std::move(rows), task, FeatureSchema{1, 0});
}

// Recommends every row: zero-init sigmoid output predicts exactly 0.5,
// which the binary rule reads as class 1.
TabModel recommend_all_model(int d_tab) {
  TaskSpec task;
  task.kind = TaskKind::Binary;
  return TabModel(nn::Mlp({d_tab, 1}, nn::Head::Sigmoid, 1), task, d_tab, 1.0);
}

TabModel recommend_none_model(int d_tab) {
  nn::Mlp net({d_tab, 1}, nn::Head::Sigmoid, 1);
  Eigen::VectorXd bias(1);
  bias << -5.0;
  net.set_output_bias(bias);
  TaskSpec task;
  task.kind = TaskKind::Binary;
  return TabModel(std::move(net), task, d_tab, 1.0);
}

}  // namespace

TEST_CASE("tabular recommender separates a noiseless tabular-only task perfectly") {
  SynthConfig cfg;
  cfg.n = 500;
  cfg.d_tab = 6;
  cfg.d_rich = 0;
  cfg.noise_sd = 0.0;
  auto [data, truth] = generate_synthetic(cfg);
  const TabModel m = fit_tab_model(data, data.task(), 31);
  CHECK(train_accuracy(m, data) == 1.0);
}

TEST_CASE("rich-block label signal keeps the tabular recommender imperfect") {
  SynthConfig cfg;
  cfg.n = 1500;
  auto [data, truth] = generate_synthetic(cfg);
  const TabModel m = fit_tab_model(data, data.task(), 31);
  const double acc = train_accuracy(m, data);
  CHECK(acc < 1.0);
  CHECK(acc > 0.6);
}

TEST_CASE("recommender training rejects degenerate inputs") {
  TaskSpec task;
  task.kind = TaskKind::Binary;
  const Dataset empty({}, task, FeatureSchema{2, 0});
  CHECK_THROWS_WITH_AS(fit_tab_model(empty, task, 1), doctest::Contains("empty"), Error);

  std::vector<Row> rows;
  for (int i = 0; i < 10; ++i) rows.push_back(make_row(i, {double(i), 1.0}, {}, 1.0));
  const Dataset single_class(std::move(rows), task, FeatureSchema{2, 0});
  CHECK_THROWS_WITH_AS(fit_tab_model(single_class, task, 1),
                       doctest::Contains("single-class"), Error);
}

TEST_CASE("regression recommender fits the line and thresholds at the median") {
  const Dataset d = line_dataset(100, 3.0, -1.0);
  const TabModel m = fit_tab_model(d, d.task(), 5);
  const Eigen::VectorXd values = m.predict_values(d.tabular_features());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(values(static_cast<Eigen::Index>(i)) ==
          doctest::Approx(d.rows()[i].y).epsilon(1e-9));
  }
  CHECK(m.t_rec() == doctest::Approx(3.0 * 50.5 - 1.0).epsilon(1e-9));

  const auto recs = predict_recs(m, d);
  CHECK(std::count(recs.begin(), recs.end(), std::uint8_t{1}) == 50);
  for (int i = 0; i < 50; ++i) CHECK(recs[static_cast<std::size_t>(i)] == 0);
  for (int i = 50; i < 100; ++i) CHECK(recs[static_cast<std::size_t>(i)] == 1);
}

TEST_CASE("hand-built linear recommender thresholds exactly where asked") {
  const TabModel m(Eigen::VectorXd::Ones(1), 0.0, 1, 50.0);
  const Dataset d = line_dataset(100, 1.0, 0.0);
  const Eigen::VectorXd values = m.predict_values(d.tabular_features());
  for (int i = 0; i < 100; ++i) CHECK(values(i) == static_cast<double>(i + 1));
  const auto recs = predict_recs(m, d);
  CHECK(std::count(recs.begin(), recs.end(), std::uint8_t{1}) == 50);
  CHECK(recs[49] == 0);
  CHECK(recs[50] == 1);
}

TEST_CASE("recommender rejects feature blocks of the wrong width") {
  const TabModel m(Eigen::VectorXd::Ones(2), 0.0, 2, 0.0);
  CHECK_THROWS_AS(m.predict_values(Eigen::MatrixXd::Zero(3, 3)), Error);
}

TEST_CASE("label masking hits unrecommended rows at the configured rate") {
  const int n = 10000;
  const int n_r0 = 4000;
  std::vector<Row> rows;
  std::vector<std::uint8_t> r;
  Rng rng(9001);
  for (int i = 0; i < n; ++i) {
    rows.push_back(make_row(i, {rng.normal()}, {}, rng.bernoulli(0.5) ? 1.0 : 0.0));
    r.push_back(i < n_r0 ? 0 : 1);
  }
  TaskSpec task;
  task.kind = TaskKind::Binary;
  const Dataset pool(std::move(rows), task, FeatureSchema{1, 0});

  const BiasedTrainSet b = induce_train_bias(pool, r, 0.9, 0.0, 77);
  CHECK(b.size() == pool.size());

  int masked_r0 = 0;
  int observed_r0 = 0;
  for (const BiasedRow& br : b.rows()) {
    if (br.rec == 1) {
      CHECK(br.observed == 1);
    } else if (br.observed == 1) {
      ++observed_r0;
    } else {
      ++masked_r0;
    }
  }
  CHECK(masked_r0 + observed_r0 == n_r0);
  CHECK(std::abs(observed_r0 - 400) <= 57);
  CHECK(b.oracle_vault().size() == static_cast<std::size_t>(masked_r0));
}

TEST_CASE("the vault holds exactly the masked labels and masked rows carry NaN") {
  auto [data, truth] = [] {
    SynthConfig cfg;
    cfg.n = 2000;
    cfg.d_rich = 0;
    return generate_synthetic(cfg);
  }();
  const TabModel m = fit_tab_model(data, data.task(), 3);
  const auto recs = predict_recs(m, data);
  const BiasedTrainSet b = induce_train_bias(data, recs, 0.9, 0.35, 4);

  REQUIRE(b.has_vault());
  const OracleVault& vault = b.oracle_vault();
  std::size_t masked = 0;
  for (const BiasedRow& br : b.rows()) {
    const Row& original = data.rows()[static_cast<std::size_t>(br.row.id)];
    if (br.observed == 1) {
      CHECK(br.row.y == original.y);
      CHECK_FALSE(vault.contains(br.row.id));
    } else {
      ++masked;
      CHECK(std::isnan(br.row.y));
      REQUIRE(vault.contains(br.row.id));
      CHECK(vault.label(br.row.id) == original.y);
    }
  }
  CHECK(vault.size() == masked);
  CHECK(masked > 0);
}

TEST_CASE("row removal keeps roughly the configured fraction") {
  std::vector<Row> rows;
  std::vector<std::uint8_t> r(10000, 1);
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    rows.push_back(make_row(i, {rng.normal()}, {}, rng.bernoulli(0.5) ? 1.0 : 0.0));
  }
  TaskSpec task;
  task.kind = TaskKind::Binary;
  const Dataset pool(std::move(rows), task, FeatureSchema{1, 0});

  const BiasedTrainSet b = induce_train_bias(pool, r, 0.9, 0.35, 8);
  const double retention = static_cast<double>(b.size()) / 10000.0;
  CHECK(retention > 0.63);
  CHECK(retention < 0.67);
  CHECK(b.oracle_vault().size() == 0);
  for (const BiasedRow& br : b.rows()) CHECK(br.observed == 1);
}

TEST_CASE("zero drop rates reproduce the pool unchanged") {
  std::vector<Row> rows;
  std::vector<std::uint8_t> r;
  Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    rows.push_back(make_row(i, {rng.normal()}, {}, rng.bernoulli(0.5) ? 1.0 : 0.0));
    r.push_back(rng.bernoulli(0.5) ? 1 : 0);
  }
  TaskSpec task;
  task.kind = TaskKind::Binary;
  const Dataset pool(rows, task, FeatureSchema{1, 0});

  const BiasedTrainSet b = induce_train_bias(pool, r, 0.0, 0.0, 5);
  REQUIRE(b.size() == pool.size());
  CHECK(b.has_vault());
  CHECK(b.oracle_vault().size() == 0);
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(b.rows()[i].row.id == pool.rows()[i].id);
    CHECK(b.rows()[i].row.y == pool.rows()[i].y);
    CHECK(b.rows()[i].observed == 1);
    CHECK(b.rows()[i].rec == r[i]);
  }
}

TEST_CASE("bias induction validates its inputs") {
  std::vector<Row> rows;
  for (int i = 0; i < 10; ++i) rows.push_back(make_row(i, {double(i)}, {}, i % 2));
  TaskSpec task;
  task.kind = TaskKind::Binary;
  const Dataset pool(std::move(rows), task, FeatureSchema{1, 0});
  const std::vector<std::uint8_t> r(10, 0);

  CHECK_THROWS_AS(induce_train_bias(pool, r, 1.0, 0.0, 1), Error);
  CHECK_THROWS_AS(induce_train_bias(pool, r, -0.1, 0.0, 1), Error);
  CHECK_THROWS_AS(induce_train_bias(pool, r, 0.0, 1.0, 1), Error);
  CHECK_THROWS_AS(induce_train_bias(pool, std::vector<std::uint8_t>(9, 0), 0.5, 0.0, 1),
                  Error);

  bool starved = false;
  for (std::uint64_t seed = 0; seed < 40 && !starved; ++seed) {
    try {
      induce_train_bias(pool, r, 0.99, 0.0, seed);
    } catch (const Error& e) {
      starved = true;
      CHECK(std::string(e.what()).find("no observed labels") != std::string::npos);
    }
  }
  CHECK(starved);
}

TEST_CASE("biased eval keeps every recommended row and drops the rest at the rate") {
  std::vector<Row> rows;
  Rng rng(31);
  for (int i = 0; i < 4000; ++i) {
    rows.push_back(make_row(i, {rng.normal(), rng.normal()}, {},
                            rng.bernoulli(0.5) ? 1.0 : 0.0));
  }
  TaskSpec task;
  task.kind = TaskKind::Binary;
  const Dataset d_eval(std::move(rows), task, FeatureSchema{2, 0});

  const Dataset all_kept = make_biased_eval(d_eval, recommend_all_model(2), 0.9, 7);
  REQUIRE(all_kept.size() == d_eval.size());
  for (std::size_t i = 0; i < d_eval.size(); ++i) {
    CHECK(all_kept.rows()[i].id == d_eval.rows()[i].id);
    CHECK(all_kept.rows()[i].y == d_eval.rows()[i].y);
  }

  const Dataset no_drop = make_biased_eval(d_eval, recommend_none_model(2), 0.0, 7);
  CHECK(no_drop.size() == d_eval.size());

  const Dataset thinned = make_biased_eval(d_eval, recommend_none_model(2), 0.9, 7);
  const double kept = static_cast<double>(thinned.size()) / 4000.0;
  CHECK(kept == doctest::Approx(0.1).epsilon(0.25));
  std::set<std::int64_t> ids;
  for (const Row& row : d_eval.rows()) ids.insert(row.id);
  for (const Row& row : thinned.rows()) {
    CHECK(ids.count(row.id) == 1);
    CHECK(row.y == d_eval.rows()[static_cast<std::size_t>(row.id)].y);
  }
}

TEST_CASE("biased eval reports when every row is dropped") {
  std::vector<Row> rows;
  Rng rng(41);
  for (int i = 0; i < 10; ++i) {
    rows.push_back(make_row(i, {rng.normal()}, {}, rng.bernoulli(0.5) ? 1.0 : 0.0));
  }
  TaskSpec task;
  task.kind = TaskKind::Binary;
  const Dataset d_eval(std::move(rows), task, FeatureSchema{1, 0});

  bool emptied = false;
  for (std::uint64_t seed = 0; seed < 60 && !emptied; ++seed) {
    try {
      make_biased_eval(d_eval, recommend_none_model(1), 0.999, seed);
    } catch (const Error& e) {
      emptied = true;
      CHECK(std::string(e.what()).find("every eval row was dropped") != std::string::npos);
    }
  }
  CHECK(emptied);
}

TEST_CASE("masked training sets round trip through their two files") {
  const BiasedTrainSet b = cfaug::testutil::masked_set(60, 10, 30, 17);
  const auto rows_path = temp_path("cfaug_biased_roundtrip.csv");
  const auto vault_path = temp_path("cfaug_vault_roundtrip.csv");
  save_biased_train_set(b, rows_path);
  save_vault(b.oracle_vault(), vault_path);

  BiasedTrainSet loaded = load_biased_train_set(rows_path, b.task());
  CHECK_FALSE(loaded.has_vault());
  REQUIRE(loaded.size() == b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(loaded.rows()[i].row.id == b.rows()[i].row.id);
    CHECK(loaded.rows()[i].row.x == b.rows()[i].row.x);
    CHECK(loaded.rows()[i].rec == b.rows()[i].rec);
    CHECK(loaded.rows()[i].observed == b.rows()[i].observed);
    if (b.rows()[i].observed == 1) {
      CHECK(loaded.rows()[i].row.y == b.rows()[i].row.y);
    } else {
      CHECK(std::isnan(loaded.rows()[i].row.y));
    }
  }

  const OracleVault vault = load_vault(vault_path);
  CHECK(vault.labels() == b.oracle_vault().labels());
  loaded.attach_vault(vault);
  CHECK(loaded.has_vault());

  CHECK_THROWS_AS(load_biased_train_set(vault_path, b.task()), Error);
  CHECK_THROWS_AS(load_vault(rows_path), Error);
  std::filesystem::remove(rows_path);
  std::filesystem::remove(vault_path);
}

TEST_CASE("masked sets reject inconsistent vault coverage and labels") {
  auto rows = [] {
    std::vector<BiasedRow> out;
    BiasedRow a;
    a.row = make_row(1, {0.5}, {}, 1.0);
    a.rec = 1;
    a.observed = 1;
    BiasedRow b;
    b.row = make_row(2, {-0.5}, {}, std::numeric_limits<double>::quiet_NaN());
    b.rec = 0;
    b.observed = 0;
    out.push_back(a);
    out.push_back(b);
    return out;
  };
  TaskSpec task;
  task.kind = TaskKind::Binary;
  const FeatureSchema schema{1, 0};

  CHECK_NOTHROW(BiasedTrainSet(rows(), task, schema, OracleVault({{2, 0.0}})));

  CHECK_THROWS_AS(BiasedTrainSet(rows(), task, schema, OracleVault()), Error);
  CHECK_THROWS_AS(BiasedTrainSet(rows(), task, schema,
                                 OracleVault({{2, 0.0}, {3, 1.0}})),
                  Error);
  auto labeled_mask = rows();
  labeled_mask[1].row.y = 1.0;
  CHECK_THROWS_AS(BiasedTrainSet(std::move(labeled_mask), task, schema,
                                 OracleVault({{2, 0.0}})),
                  Error);

  auto observed_nan = rows();
  observed_nan[0].row.y = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(BiasedTrainSet(std::move(observed_nan), task, schema,
                                 OracleVault({{2, 0.0}})),
                  Error);
}

TEST_CASE("observed and unobserved index lists partition the rows") {
  const BiasedTrainSet b = cfaug::testutil::masked_set(20, 5, 15, 3);
  CHECK(b.observed_count() == 25);
  const auto obs = b.observed_indices();
  const auto unobs = b.unobserved_indices();
  CHECK(obs.size() == 25);
  CHECK(unobs.size() == 15);
  std::set<std::size_t> all(obs.begin(), obs.end());
  all.insert(unobs.begin(), unobs.end());
  CHECK(all.size() == b.size());
  for (std::size_t i : obs) CHECK(b.rows()[i].observed == 1);
  for (std::size_t i : unobs) CHECK(b.rows()[i].observed == 0);

  const Eigen::MatrixXd f = b.features_of({0, 39});
  CHECK(f.rows() == 2);
  CHECK(f.cols() == 3);
  CHECK(f.row(0).transpose() == b.rows()[0].row.x);
  CHECK(f.row(1).transpose() == b.rows()[39].row.x);
}
