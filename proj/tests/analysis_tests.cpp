#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "cfaug/analysis.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cfaug;
using cfaug::testutil::masked_set;

namespace {

TaskSpec binary_task() {
  TaskSpec t;
  t.kind = TaskKind::Binary;
  t.minority_class = 0;
  return t;
}

CfLabels exact_vault_copy(const OracleVault& vault) {
  CfLabels cf;
  cf.labels = vault.labels();
  return cf;
}

}  // namespace

TEST_CASE("bin specs map values to bins and label bins by lower edge") {
  const BinSpec classes = BinSpec::classes(3);
  CHECK(classes.discrete);
  CHECK(classes.bins == 3);
  CHECK(classes.index_of(0.0) == 0);
  CHECK(classes.index_of(2.0) == 2);
  CHECK(classes.bin_label(1) == 1.0);
  CHECK_THROWS_AS(classes.index_of(0.5), Error);
  CHECK_THROWS_AS(classes.index_of(3.0), Error);
  CHECK_THROWS_AS(classes.index_of(-1.0), Error);
  CHECK_THROWS_AS(BinSpec::classes(1), Error);

  const BinSpec cont = BinSpec::continuous(-2.0, 2.0);
  CHECK_FALSE(cont.discrete);
  CHECK(cont.bins == 20);
  CHECK(cont.index_of(-2.0) == 0);
  CHECK(cont.index_of(2.0) == 19);
  CHECK(cont.index_of(-5.0) == 0);
  CHECK(cont.index_of(5.0) == 19);
  CHECK(cont.index_of(0.0) == 10);
  CHECK(cont.bin_label(0) == -2.0);
  CHECK(cont.bin_label(10) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(BinSpec::continuous(1.0, -1.0), Error);
  CHECK_THROWS_AS(BinSpec::continuous(0.0, 1.0, 0), Error);
}

TEST_CASE("histograms conserve mass and normalize to probabilities") {
  const std::vector<double> values{0, 1, 1, 0, 1, 1, 1, 0};
  const Histogram h = make_histogram(values, BinSpec::classes(2));
  CHECK(h.total == 8);
  CHECK(h.counts == std::vector<std::int64_t>{3, 5});
  const auto p = h.probabilities();
  CHECK(p[0] == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.625).epsilon(1e-12));
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("total variation matches the half-L1 definition") {
  Rng rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    const int bins = 2 + static_cast<int>(rng.index(9));
    Histogram a, b;
    for (int k = 0; k < bins; ++k) {
      a.counts.push_back(static_cast<std::int64_t>(rng.index(50)));
      b.counts.push_back(static_cast<std::int64_t>(rng.index(50)));
    }
    a.counts[0] += 1;
    b.counts[0] += 1;
    for (const auto c : a.counts) a.total += c;
    for (const auto c : b.counts) b.total += c;

    const auto pa = a.probabilities();
    const auto pb = b.probabilities();
    double half_l1 = 0.0;
    for (int k = 0; k < bins; ++k) half_l1 += std::abs(pa[k] - pb[k]);
    half_l1 *= 0.5;
    CHECK(total_variation(a, b) == doctest::Approx(half_l1).epsilon(1e-12));
  }

  Histogram same;
  same.counts = {4, 6};
  same.total = 10;
  CHECK(total_variation(same, same) == 0.0);

  Histogram left, right;
  left.counts = {10, 0};
  left.total = 10;
  right.counts = {0, 25};
  right.total = 25;
  CHECK(total_variation(left, right) == 1.0);
}

TEST_CASE("ks statistic hits its extremes") {
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0};
  CHECK(ks_statistic(a, a) == 0.0);
  const std::vector<double> b{10.0, 11.0, 12.0};
  CHECK(ks_statistic(a, b) == 1.0);
  const std::vector<double> c{1.5, 2.5, 3.5, 4.5};
  const double mid = ks_statistic(a, c);
  CHECK(mid > 0.0);
  CHECK(mid < 1.0);
}

TEST_CASE("entropy is zero on point masses and ln k on uniform ones") {
  CHECK(entropy_nats({1.0, 0.0, 0.0}) == 0.0);
  CHECK(entropy_nats({0.25, 0.25, 0.25, 0.25}) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(entropy_nats({0.5, 0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("counterfactual report scores perfect and disjoint generations") {
  const BiasedTrainSet b = masked_set(40, 10, 50, 5);
  const OracleVault& vault = b.oracle_vault();

  const DistReport perfect = counterfactual_report(exact_vault_copy(vault), vault,
                                                   binary_task());
  CHECK(perfect.tv_distance.value() == 0.0);
  CHECK(perfect.agreement.value() == 1.0);
  CHECK_FALSE(perfect.ks.has_value());
  CHECK(perfect.source("generated").hist.total == 50);
  CHECK(perfect.source("true-counterfactual").hist.total == 50);
  CHECK_THROWS_AS(perfect.source("nonexistent"), Error);

  CfLabels flipped = exact_vault_copy(vault);
  for (auto& [id, label] : flipped.labels) label = 1.0 - label;
  const DistReport worst = counterfactual_report(flipped, vault, binary_task());
  CHECK(worst.agreement.value() == 0.0);

  CfLabels wrong_ids = exact_vault_copy(vault);
  auto node = wrong_ids.labels.extract(wrong_ids.labels.begin());
  node.key() = 999999;
  wrong_ids.labels.insert(std::move(node));
  CHECK_THROWS_WITH_AS(counterfactual_report(wrong_ids, vault, binary_task()),
                       doctest::Contains("vault"), Error);

  CfLabels short_set = exact_vault_copy(vault);
  short_set.labels.erase(short_set.labels.begin());
  CHECK_THROWS_AS(counterfactual_report(short_set, vault, binary_task()), Error);
}

TEST_CASE("counterfactual report uses ks for regression labels") {
  std::map<std::int64_t, double> truth;
  CfLabels cf;
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.normal();
    truth.emplace(i, v);
    cf.labels.emplace(i, v);
  }
  TaskSpec task;
  task.kind = TaskKind::Regression;
  const DistReport r = counterfactual_report(cf, OracleVault(std::move(truth)), task);
  CHECK(r.ks.value() == 0.0);
  CHECK_FALSE(r.agreement.has_value());
}

TEST_CASE("plot data lists one row per source and bin") {
  const BiasedTrainSet b = masked_set(30, 10, 20, 7);
  const DistReport r = counterfactual_report(exact_vault_copy(b.oracle_vault()),
                                             b.oracle_vault(), binary_task());
  std::istringstream in(r.plot_data());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "bin,source,count");
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 2 * 2);

  const std::string text = r.to_text();
  CHECK(text.find("tv_distance = ") != std::string::npos);
  CHECK(text.find("agreement = ") != std::string::npos);
  CHECK(text.find("entropy_generated = ") != std::string::npos);
  CHECK(text.find("count_generated = ") != std::string::npos);
}

TEST_CASE("label balance compares observed against corrected distributions") {
  const BiasedTrainSet b = masked_set(120, 30, 90, 9);
  CfLabels cf;
  for (const std::size_t i : b.unobserved_indices()) {
    cf.labels.emplace(b.rows()[i].row.id, 0.0);
  }
  const CorrectedDataset c = augment(b, cf);

  const DistReport r = label_balance_report(b, c, b.task());
  CHECK(r.source("observed").hist.total ==
        static_cast<std::int64_t>(b.observed_count()));
  CHECK(r.source("corrected").hist.total == static_cast<std::int64_t>(b.size()));
  CHECK(r.tv_distance.has_value());
  CHECK(r.tv_distance.value() > 0.0);
  CHECK_THROWS_AS(r.source("full"), Error);

  const DistReport with_full = label_balance_report_oracle(b, c, b.task());
  CHECK(with_full.source("full").hist.total == static_cast<std::int64_t>(b.size()));

  double full_zeros = 0.0;
  for (const BiasedRow& br : b.rows()) {
    const double y = br.observed == 1 ? br.row.y : b.oracle_vault().label(br.row.id);
    if (y == 0.0) full_zeros += 1.0;
  }
  CHECK(with_full.source("full").hist.counts[0] ==
        static_cast<std::int64_t>(full_zeros));
}

TEST_CASE("label balance is the identity when nothing was masked") {
  const BiasedTrainSet b = masked_set(80, 40, 0, 11);
  const CorrectedDataset c = augment(b, CfLabels{});
  const DistReport r = label_balance_report(b, c, b.task());
  CHECK(r.source("observed").hist.counts == r.source("corrected").hist.counts);
  CHECK(r.tv_distance.value() == 0.0);
}

TEST_CASE("balance reports refuse mismatched row counts") {
  const BiasedTrainSet b = masked_set(30, 10, 20, 13);
  CfLabels cf;
  for (const std::size_t i : b.unobserved_indices()) {
    cf.labels.emplace(b.rows()[i].row.id, 1.0);
  }
  const CorrectedDataset c = augment(b, cf);
  const BiasedTrainSet other = masked_set(30, 10, 21, 13);
  CHECK_THROWS_AS(label_balance_report(other, c, b.task()), Error);
}

TEST_CASE("corrected label entropy rises when the minority class is refilled") {
  std::vector<BiasedRow> rows;
  std::map<std::int64_t, double> vault;
  Rng rng(15);
  for (int i = 0; i < 300; ++i) {
    BiasedRow br;
    br.row.id = i;
    br.row.x = Eigen::VectorXd::Constant(1, rng.normal());
    if (i < 200) {
      br.rec = 1;
      br.observed = 1;
      br.row.y = i < 180 ? 1.0 : 0.0;
    } else {
      br.rec = 0;
      br.observed = 0;
      br.row.y = std::numeric_limits<double>::quiet_NaN();
      vault.emplace(br.row.id, 0.0);
    }
    rows.push_back(std::move(br));
  }
  const BiasedTrainSet b(std::move(rows), binary_task(), FeatureSchema{1, 0},
                         OracleVault(std::move(vault)));

  CfLabels cf;
  for (const std::size_t i : b.unobserved_indices()) {
    cf.labels.emplace(b.rows()[i].row.id, 0.0);
  }
  const CorrectedDataset c = augment(b, cf);
  const DistReport r = label_balance_report(b, c, b.task());
  const auto p_obs = r.source("observed").hist.probabilities();
  CHECK(r.source("observed").entropy ==
        doctest::Approx(entropy_nats(p_obs)).epsilon(1e-12));
  CHECK(r.source("corrected").entropy > r.source("observed").entropy);
}
