#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "cfaug/bias.hpp"
#include "cfaug/data.hpp"
#include "cfaug/rng.hpp"
#include "cfaug/synthetic.hpp"

namespace cfaug::testutil {

inline Row make_row(std::int64_t id, std::vector<double> x, std::vector<double> w,
                    double y) {
  Row r;
  r.id = id;
  r.x = Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  r.w = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  r.y = y;
  return r;
}

inline Dataset random_dataset(std::size_t n, int d_tab, int d_rich, TaskKind kind,
                              std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Row> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Row r;
    r.id = static_cast<std::int64_t>(i);
    r.x = Eigen::VectorXd::NullaryExpr(d_tab, [&](Eigen::Index) { return rng.normal(); });
    r.w = Eigen::VectorXd::NullaryExpr(d_rich, [&](Eigen::Index) { return rng.normal(); });
    r.y = kind == TaskKind::Regression ? rng.normal()
                                       : (rng.bernoulli(0.5) ? 1.0 : 0.0);
    rows.push_back(std::move(r));
  }
  TaskSpec task;
  task.kind = kind;
  task.num_classes = 2;
  task.minority_class = 0;
  return Dataset(std::move(rows), task, FeatureSchema{d_tab, d_rich});
}

// Hand-built masked training set: n1 recommended observed rows, n0_obs
// unrecommended observed rows, n0_mask unrecommended masked rows whose true
// labels live in the vault. Labels follow sign(x0 + 0.5 x1) when
// labels_from_features is set, otherwise a fair coin.
inline BiasedTrainSet masked_set(int n1, int n0_obs, int n0_mask, std::uint64_t seed,
                                 int d_tab = 3, bool labels_from_features = true) {
  Rng rng(seed);
  std::vector<BiasedRow> rows;
  std::map<std::int64_t, double> vault;
  std::int64_t id = 0;
  auto push = [&](std::uint8_t rec, bool observed) {
    BiasedRow br;
    br.row.id = id++;
    br.row.x =
        Eigen::VectorXd::NullaryExpr(d_tab, [&](Eigen::Index) { return rng.normal(); });
    br.row.w = Eigen::VectorXd();
    const double y = labels_from_features
                         ? (br.row.x(0) + 0.5 * br.row.x(1) > 0.0 ? 1.0 : 0.0)
                         : (rng.bernoulli(0.5) ? 1.0 : 0.0);
    br.rec = rec;
    br.observed = observed ? 1 : 0;
    if (observed) {
      br.row.y = y;
    } else {
      br.row.y = std::numeric_limits<double>::quiet_NaN();
      vault.emplace(br.row.id, y);
    }
    rows.push_back(std::move(br));
  };
  for (int i = 0; i < n1; ++i) push(1, true);
  for (int i = 0; i < n0_obs; ++i) push(0, true);
  for (int i = 0; i < n0_mask; ++i) push(0, false);
  TaskSpec task;
  task.kind = TaskKind::Binary;
  task.num_classes = 2;
  task.minority_class = 0;
  return BiasedTrainSet(std::move(rows), task, FeatureSchema{d_tab, 0},
                        OracleVault(std::move(vault)));
}

// Full front half of the pipeline on synthetic data: generate, split, fit
// the recommender, bias the training pool.
struct PipelineFixture {
  Dataset d_original;
  Dataset d_train_pool;
  Dataset d_eval;
  TabModel tab;
  BiasedTrainSet biased;
  TaskSpec task;
};

inline PipelineFixture make_pipeline(std::uint64_t seed, std::int64_t n = 9000,
                                     int d_tab = 6, int d_rich = 0,
                                     double noise_sd = 0.5) {
  SynthConfig sc;
  sc.n = n;
  sc.d_tab = d_tab;
  sc.d_rich = d_rich;
  sc.noise_sd = noise_sd;
  sc.data_seed = derive_seed(seed, "fixture-data");
  auto [data, truth] = generate_synthetic(sc);
  auto split = split_dataset(data, 0.2, 0.4, 0.4, derive_seed(seed, "fixture-split"));
  PipelineFixture f;
  f.task = data.task();
  f.tab = fit_tab_model(split.d_original, f.task, derive_seed(seed, "fixture-tab"));
  auto recs = predict_recs(f.tab, split.d_train_pool);
  f.biased = induce_train_bias(split.d_train_pool, recs, 0.9, 0.35,
                               derive_seed(seed, "fixture-bias"));
  f.d_original = std::move(split.d_original);
  f.d_train_pool = std::move(split.d_train_pool);
  f.d_eval = std::move(split.d_eval);
  return f;
}

inline std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace cfaug::testutil
