#include <cmath>
#include <filesystem>
#include <vector>

#include "cfaug/baselines.hpp"
#include "cfaug/synthetic.hpp"
#include "cfaug/task_eval.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cfaug;
using cfaug::testutil::masked_set;
using cfaug::testutil::temp_path;

namespace {

Dataset separable_dataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Row> rows;
  for (std::size_t i = 0; i < n; ++i) {
    Row r;
    r.id = static_cast<std::int64_t>(i);
    r.x = Eigen::VectorXd::NullaryExpr(3, [&](Eigen::Index) { return rng.normal(); });
    r.w = Eigen::VectorXd();
    r.y = r.x(0) + 0.5 * r.x(1) > 0.0 ? 1.0 : 0.0;
    rows.push_back(std::move(r));
  }
  TaskSpec task;
  task.kind = TaskKind::Binary;
  task.minority_class = 0;
  return Dataset(std::move(rows), task, FeatureSchema{3, 0});
}

}  // namespace

TEST_CASE("training config validation rejects bad settings") {
  const auto invalid = [](auto mutate) {
    TrainConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(cfg.validate(), Error);
  };
  invalid([](TrainConfig& c) { c.epochs = 0; });
  invalid([](TrainConfig& c) { c.hidden = -1; });
  invalid([](TrainConfig& c) { c.learning_rate = 0.0; });
  invalid([](TrainConfig& c) { c.batch_size = 0; });
  invalid([](TrainConfig& c) { c.validation_fraction = 0.0; });
  invalid([](TrainConfig& c) { c.validation_fraction = 1.0; });
  CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("task training drives the loss down to near zero on separable data") {
  const Dataset d = separable_dataset(600, 7);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.hidden = 16;
  cfg.learning_rate = 2e-2;
  cfg.batch_size = 32;
  const TaskModel m = train_task_model(d, d.task(), 3, std::nullopt, cfg);

  REQUIRE(m.epoch_train_loss().size() == 30);
  REQUIRE(m.epoch_val_loss().size() == 30);
  CHECK(m.epoch_train_loss().back() < 1e-2);
  CHECK(m.epoch_train_loss().back() < 0.05 * m.epoch_train_loss().front());
  int increases = 0;
  for (std::size_t e = 1; e < m.epoch_train_loss().size(); ++e) {
    if (m.epoch_train_loss()[e] > m.epoch_train_loss()[e - 1]) ++increases;
  }
  CHECK(increases <= 3);

  const Eigen::VectorXd preds = m.predict_labels(d.features());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (preds(static_cast<Eigen::Index>(i)) == d.rows()[i].y) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(d.size()) > 0.98);
}

TEST_CASE("task training is deterministic in the seed") {
  const Dataset d = separable_dataset(200, 11);
  const TaskModel a = train_task_model(d, d.task(), 5);
  const TaskModel b = train_task_model(d, d.task(), 5);
  CHECK(a.net().parameters() == b.net().parameters());
  CHECK(a.epoch_train_loss() == b.epoch_train_loss());
  CHECK(a.epoch_val_loss() == b.epoch_val_loss());
  const TaskModel c = train_task_model(d, d.task(), 6);
  CHECK(a.net().parameters() != c.net().parameters());
}

TEST_CASE("task training rejects degenerate inputs") {
  TaskSpec task;
  task.kind = TaskKind::Binary;
  const Dataset empty({}, task, FeatureSchema{2, 0});
  CHECK_THROWS_WITH_AS(train_task_model(empty, task, 1), doctest::Contains("empty"),
                       Error);

  const Dataset d = separable_dataset(50, 3);
  std::vector<double> short_weights(49, 1.0);
  CHECK_THROWS_AS(train_task_model(d, d.task(), 1, short_weights), Error);
  std::vector<double> negative(50, 1.0);
  negative[10] = -1.0;
  CHECK_THROWS_AS(train_task_model(d, d.task(), 1, negative), Error);

  std::vector<Row> one;
  one.push_back(cfaug::testutil::make_row(0, {1.0, 0.0}, {}, 1.0));
  one.push_back(cfaug::testutil::make_row(1, {0.0, 1.0}, {}, 0.0));
  const Dataset two_rows(std::move(one), task, FeatureSchema{2, 0});
  TrainConfig cfg;
  cfg.validation_fraction = 0.9;
  CHECK_THROWS_WITH_AS(train_task_model(two_rows, task, 1, std::nullopt, cfg),
                       doctest::Contains("validation"), Error);

  std::vector<Row> same;
  for (int i = 0; i < 20; ++i)
    same.push_back(cfaug::testutil::make_row(i, {double(i), 1.0}, {}, 1.0));
  const Dataset single_class(std::move(same), task, FeatureSchema{2, 0});
  CHECK_THROWS_WITH_AS(train_task_model(single_class, task, 1),
                       doctest::Contains("single-class"), Error);
}

TEST_CASE("task models round trip through checkpoints") {
  const Dataset d = separable_dataset(150, 13);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.hidden = 8;
  const TaskModel m = train_task_model(d, d.task(), 9, std::nullopt, cfg);
  const auto path = temp_path("cfaug_task_model_roundtrip.bin");
  save_task_model(m, path);
  const TaskModel loaded = load_task_model(path);
  std::filesystem::remove(path);

  CHECK(loaded.net().parameters() == m.net().parameters());
  CHECK((loaded.schema() == m.schema()));
  CHECK(loaded.config().hidden == 8);
  CHECK(loaded.seed() == m.seed());
  CHECK(loaded.epoch_train_loss() == m.epoch_train_loss());
  CHECK(loaded.epoch_val_loss() == m.epoch_val_loss());
  const Eigen::MatrixXd f = d.features();
  CHECK(loaded.predict_labels(f) == m.predict_labels(f));
}

TEST_CASE("evaluation is read-only and validates its inputs") {
  const Dataset d = separable_dataset(300, 17);
  const TaskModel m = train_task_model(d, d.task(), 21);
  const auto first = evaluate(m, d, d.task());
  const auto second = evaluate(m, d, d.task());
  CHECK(first.accuracy == second.accuracy);
  CHECK(first.f1_minority == second.f1_minority);
  CHECK(first.n_eval == 300);

  TaskSpec task = d.task();
  const Dataset wrong_schema = cfaug::testutil::random_dataset(20, 4, 0,
                                                               TaskKind::Binary, 1);
  CHECK_THROWS_WITH_AS(evaluate(m, wrong_schema, task), doctest::Contains("schema"),
                       Error);

  const Eigen::VectorXd preds = Eigen::VectorXd::Zero(5);
  CHECK_THROWS_AS(evaluate_predictions(preds, d, task), Error);
}

TEST_CASE("evaluating aligned predictions matches the direct metric path") {
  const Dataset d = separable_dataset(250, 19);
  const TaskModel m = train_task_model(d, d.task(), 23);
  const auto via_model = evaluate(m, d, d.task());
  const auto via_predictions =
      evaluate_predictions(m.predict_labels(d.features()), d, d.task());
  CHECK(via_model.accuracy == via_predictions.accuracy);
  CHECK(via_model.f1 == via_predictions.f1);
  CHECK(via_model.f1_macro == via_predictions.f1_macro);
  CHECK(via_model.f1_minority == via_predictions.f1_minority);
}

TEST_CASE("oracle training equals uncorrected training when nothing is masked") {
  const BiasedTrainSet b = masked_set(80, 40, 0, 29);
  const TaskModel oracle = train_oracle(b, b.task(), 31);
  const TaskModel uncorrected = train_uncorrected(b, b.task(), 31);
  CHECK(oracle.net().parameters() == uncorrected.net().parameters());
}

TEST_CASE("oracle training restores masked labels from the vault") {
  const BiasedTrainSet b = masked_set(300, 60, 240, 37);
  const TaskModel oracle = train_oracle(b, b.task(), 41);
  const TaskModel uncorrected = train_uncorrected(b, b.task(), 41);
  CHECK(oracle.net().parameters() != uncorrected.net().parameters());

  BiasedTrainSet no_vault = masked_set(300, 60, 240, 37);
  const BiasedTrainSet detached = [&] {
    save_biased_train_set(no_vault, temp_path("cfaug_oracle_rows.csv"));
    auto loaded = load_biased_train_set(temp_path("cfaug_oracle_rows.csv"), b.task());
    std::filesystem::remove(temp_path("cfaug_oracle_rows.csv"));
    return loaded;
  }();
  CHECK_THROWS_AS(train_oracle(detached, b.task(), 41), Error);
}
