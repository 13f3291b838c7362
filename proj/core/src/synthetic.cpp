#include "cfaug/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cfaug/detail/text.hpp"
#include "cfaug/rng.hpp"

namespace cfaug {

namespace {

Eigen::VectorXd unit_coefficients(int dim, Rng& rng) {
  Eigen::VectorXd beta(dim);
  for (int j = 0; j < dim; ++j) beta(j) = rng.normal();
  if (dim > 0) {
    const double norm = beta.norm();
    if (norm < 1e-12) {
      beta.setZero();
      beta(0) = 1.0;
    } else {
      beta /= norm;
    }
  }
  return beta;
}

// Equal-count quantile thresholds; values exactly at a threshold fall in the
// lower class, matching the binarization convention.
std::vector<double> quantile_thresholds(std::vector<double> sorted, int classes) {
  const std::int64_t n = static_cast<std::int64_t>(sorted.size());
  std::vector<double> thresholds;
  for (int k = 1; k < classes; ++k) {
    const double q = static_cast<double>(k) / classes;
    std::int64_t idx = static_cast<std::int64_t>(std::ceil(q * static_cast<double>(n))) - 1;
    idx = std::clamp<std::int64_t>(idx, 0, n - 1);
    thresholds.push_back(sorted[static_cast<std::size_t>(idx)]);
  }
  return thresholds;
}

}  // namespace

void SynthConfig::validate() const {
  if (n < 1) throw Error("SynthConfig: n must be >= 1");
  if (d_tab < 1) throw Error("SynthConfig: d_tab must be >= 1");
  if (d_rich < 0) throw Error("SynthConfig: d_rich must be >= 0");
  if (noise_sd < 0.0) throw Error("SynthConfig: noise_sd must be >= 0");
  if (task == TaskKind::Binary && !(positive_share > 0.0 && positive_share < 1.0)) {
    throw Error("SynthConfig: positive_share must lie in (0,1)");
  }
  if (task == TaskKind::Multiclass && num_classes < 3) {
    throw Error("SynthConfig: multiclass generation needs num_classes >= 3");
  }
}

std::pair<Dataset, GroundTruth> generate_synthetic(const SynthConfig& config) {
  config.validate();

  Rng weight_rng(config.weight_seed);
  GroundTruth truth;
  truth.beta_tab = unit_coefficients(config.d_tab, weight_rng);
  truth.beta_rich = unit_coefficients(config.d_rich, weight_rng);

  Rng data_rng(config.data_seed);
  std::vector<Row> rows;
  rows.reserve(static_cast<std::size_t>(config.n));
  truth.ids.reserve(static_cast<std::size_t>(config.n));
  truth.latent_scores.reserve(static_cast<std::size_t>(config.n));
  for (std::int64_t i = 0; i < config.n; ++i) {
    Row r;
    r.id = i;
    r.x.resize(config.d_tab);
    for (int j = 0; j < config.d_tab; ++j) r.x(j) = data_rng.normal();
    r.w.resize(config.d_rich);
    for (int j = 0; j < config.d_rich; ++j) r.w(j) = data_rng.normal();
    const double noise = config.noise_sd > 0.0 ? data_rng.normal(0.0, config.noise_sd) : 0.0;
    r.y = r.x.dot(truth.beta_tab) + r.w.dot(truth.beta_rich) + noise;
    truth.ids.push_back(r.id);
    truth.latent_scores.push_back(r.y);
    rows.push_back(std::move(r));
  }

  const FeatureSchema schema{config.d_tab, config.d_rich};
  TaskSpec regression{TaskKind::Regression, 2, 0};
  Dataset scored(std::move(rows), regression, schema);

  switch (config.task) {
    case TaskKind::Regression:
      return {std::move(scored), std::move(truth)};
    case TaskKind::Binary:
      return {binarize_labels(scored, config.positive_share), std::move(truth)};
    case TaskKind::Multiclass:
      break;
  }

  std::vector<double> sorted(truth.latent_scores);
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) {
    throw Error("generate_synthetic: degenerate latent scores, cannot form classes");
  }
  const std::vector<double> thresholds =
      quantile_thresholds(std::move(sorted), config.num_classes);

  std::vector<Row> classed(scored.rows());
  std::vector<std::int64_t> counts(static_cast<std::size_t>(config.num_classes), 0);
  for (Row& r : classed) {
    int cls = 0;
    for (const double t : thresholds) cls += r.y > t ? 1 : 0;
    r.y = static_cast<double>(cls);
    counts[static_cast<std::size_t>(cls)] += 1;
  }
  TaskSpec task{TaskKind::Multiclass, config.num_classes, 0};
  for (int k = 1; k < config.num_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] <= counts[static_cast<std::size_t>(task.minority_class)]) {
      task.minority_class = k;
    }
  }
  return {Dataset(std::move(classed), task, schema), std::move(truth)};
}

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_ground_truth: cannot open " + path.string() + " for writing");
  out << "beta_tab";
  for (int j = 0; j < truth.beta_tab.size(); ++j) {
    out << ',' << detail::format_double(truth.beta_tab(j));
  }
  out << "\nbeta_rich";
  for (int j = 0; j < truth.beta_rich.size(); ++j) {
    out << ',' << detail::format_double(truth.beta_rich(j));
  }
  out << "\nid,latent\n";
  for (std::size_t i = 0; i < truth.ids.size(); ++i) {
    out << truth.ids[i] << ',' << detail::format_double(truth.latent_scores[i]) << '\n';
  }
  if (!out) throw Error("save_ground_truth: write to " + path.string() + " failed");
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_ground_truth: cannot open " + path.string());
  GroundTruth truth;
  std::string line;

  const auto read_beta = [&](const std::string& tag) {
    if (!std::getline(in, line)) throw Error("load_ground_truth: missing " + tag + " line");
    detail::chomp(line);
    const auto fields = detail::split_line(line, ',');
    if (fields.empty() || fields[0] != tag) {
      throw Error("load_ground_truth: expected '" + tag + "' line in " + path.string());
    }
    Eigen::VectorXd beta(fields.size() - 1);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      beta(static_cast<int>(j - 1)) = detail::parse_double(fields[j], path.string());
    }
    return beta;
  };

  truth.beta_tab = read_beta("beta_tab");
  truth.beta_rich = read_beta("beta_rich");

  if (!std::getline(in, line)) throw Error("load_ground_truth: missing score header");
  detail::chomp(line);
  if (line != "id,latent") {
    throw Error("load_ground_truth: unexpected score header '" + line + "'");
  }
  while (std::getline(in, line)) {
    detail::chomp(line);
    if (line.empty()) continue;
    const auto fields = detail::split_line(line, ',');
    if (fields.size() != 2) throw Error("load_ground_truth: malformed score row");
    truth.ids.push_back(detail::parse_int64(fields[0], path.string()));
    truth.latent_scores.push_back(detail::parse_double(fields[1], path.string()));
  }
  return truth;
}

}  // namespace cfaug
