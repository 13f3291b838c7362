#include "cfaug/bias.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "cfaug/detail/text.hpp"
#include "cfaug/rng.hpp"

namespace cfaug {

namespace {

constexpr int kTabHidden = 32;
constexpr int kTabEpochs = 20;
constexpr int kTabBatch = 64;
constexpr double kTabLearningRate = 1e-2;

double median(std::vector<double> values) {
  require(!values.empty(), "median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void check_distinct_classes(const Dataset& d) {
  const double first = d.row(0).y;
  for (const Row& r : d.rows()) {
    if (r.y != first) return;
  }
  throw Error("fit_tab_model: single-class training labels, nothing to separate");
}

}  // namespace

double OracleVault::label(std::int64_t id) const {
  const auto it = labels_.find(id);
  if (it == labels_.end()) {
    throw Error("OracleVault: no label for id " + std::to_string(id));
  }
  return it->second;
}

TabModel::TabModel(nn::Mlp net, TaskSpec task, int d_tab, double t_rec)
    : net_(std::move(net)), task_(task), d_tab_(d_tab), t_rec_(t_rec) {}

TabModel::TabModel(Eigen::VectorXd linear_weights, double intercept, int d_tab, double t_rec)
    : linear_weights_(std::move(linear_weights)),
      intercept_(intercept),
      task_{TaskKind::Regression, 2, 0},
      d_tab_(d_tab),
      t_rec_(t_rec) {}

Eigen::VectorXd TabModel::predict_values(const Eigen::MatrixXd& x) const {
  require(x.cols() == d_tab_, "TabModel: input has " + std::to_string(x.cols()) +
                                  " tabular features, model expects " +
                                  std::to_string(d_tab_));
  if (task_.kind == TaskKind::Regression) {
    return (x * linear_weights_).array() + intercept_;
  }
  const Eigen::MatrixXd out = net_->predict(x);
  Eigen::VectorXd values(x.rows());
  if (task_.kind == TaskKind::Binary) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) values(i) = out(i, 0) >= 0.5 ? 1.0 : 0.0;
  } else {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      Eigen::Index best = 0;
      out.row(i).maxCoeff(&best);
      values(i) = static_cast<double>(best);
    }
  }
  return values;
}

BiasedTrainSet::BiasedTrainSet(std::vector<BiasedRow> rows, TaskSpec task,
                               FeatureSchema schema, std::optional<OracleVault> vault)
    : rows_(std::move(rows)), task_(task), schema_(schema), vault_(std::move(vault)) {
  task_.validate();
  schema_.validate();
  std::unordered_set<std::int64_t> seen;
  seen.reserve(rows_.size());
  for (const BiasedRow& br : rows_) {
    require(br.rec <= 1 && br.observed <= 1,
            "BiasedTrainSet: r and a must be 0 or 1");
    if (br.row.x.size() != schema_.d_tab || br.row.w.size() != schema_.d_rich) {
      throw Error("BiasedTrainSet: row id " + std::to_string(br.row.id) +
                  " does not match the feature schema");
    }
    if (!br.row.x.allFinite() || !br.row.w.allFinite()) {
      throw Error("BiasedTrainSet: non-finite feature on row id " +
                  std::to_string(br.row.id));
    }
    if (br.observed) {
      validate_label(br.row.y, task_, br.row.id);
    } else if (!std::isnan(br.row.y)) {
      throw Error("BiasedTrainSet: masked row id " + std::to_string(br.row.id) +
                  " still carries a label");
    }
    if (!seen.insert(br.row.id).second) {
      throw Error("BiasedTrainSet: duplicate row id " + std::to_string(br.row.id));
    }
  }
  if (vault_) check_vault_coverage();
}

void BiasedTrainSet::check_vault_coverage() const {
  std::size_t masked = 0;
  for (const BiasedRow& br : rows_) {
    if (br.observed) continue;
    ++masked;
    if (!vault_->contains(br.row.id)) {
      throw Error("BiasedTrainSet: vault is missing masked row id " +
                  std::to_string(br.row.id));
    }
    validate_label(vault_->label(br.row.id), task_, br.row.id);
  }
  if (masked != vault_->size()) {
    throw Error("BiasedTrainSet: vault holds " + std::to_string(vault_->size()) +
                " labels but the set has " + std::to_string(masked) + " masked rows");
  }
}

std::size_t BiasedTrainSet::observed_count() const {
  std::size_t count = 0;
  for (const BiasedRow& br : rows_) count += br.observed;
  return count;
}

std::vector<std::size_t> BiasedTrainSet::observed_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].observed) idx.push_back(i);
  }
  return idx;
}

std::vector<std::size_t> BiasedTrainSet::unobserved_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (!rows_[i].observed) idx.push_back(i);
  }
  return idx;
}

const OracleVault& BiasedTrainSet::oracle_vault() const {
  if (!vault_) {
    throw Error("BiasedTrainSet: vault missing; it is stored separately and only "
                "oracle/analysis code may attach it");
  }
  return *vault_;
}

void BiasedTrainSet::attach_vault(OracleVault vault) {
  vault_ = std::move(vault);
  check_vault_coverage();
}

Eigen::MatrixXd BiasedTrainSet::features_of(const std::vector<std::size_t>& indices) const {
  Eigen::MatrixXd m(indices.size(), schema_.total());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Row& r = rows_.at(indices[i]).row;
    m.row(i).head(schema_.d_tab) = r.x;
    m.row(i).tail(schema_.d_rich) = r.w;
  }
  return m;
}

TabModel fit_tab_model(const Dataset& d_original, const TaskSpec& task, std::uint64_t seed) {
  require(!d_original.empty(), "fit_tab_model: empty dataset");
  task.validate();
  const int d_tab = d_original.schema().d_tab;
  const Eigen::MatrixXd x = d_original.tabular_features();
  const Eigen::VectorXd y = d_original.labels();

  if (task.kind == TaskKind::Regression) {
    Eigen::MatrixXd design(x.rows(), d_tab + 1);
    design.leftCols(d_tab) = x;
    design.col(d_tab).setOnes();
    const Eigen::VectorXd solution = design.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd weights = solution.head(d_tab);
    const double intercept = solution(d_tab);
    Eigen::VectorXd predictions = (x * weights).array() + intercept;
    std::vector<double> values(predictions.data(), predictions.data() + predictions.size());
    return TabModel(std::move(weights), intercept, d_tab, median(std::move(values)));
  }

  check_distinct_classes(d_original);
  const bool binary = task.kind == TaskKind::Binary;
  const int out_dim = binary ? 1 : task.num_classes;
  const nn::Head head = binary ? nn::Head::Sigmoid : nn::Head::Softmax;
  nn::Mlp net({d_tab, kTabHidden, out_dim}, head, derive_seed(seed, "tab-init"));
  const Eigen::MatrixXd target = binary ? Eigen::MatrixXd(y) : nn::one_hot(y, task.num_classes);

  nn::Adam opt(kTabLearningRate);
  Rng shuffle_rng(derive_seed(seed, "tab-shuffle"));
  std::vector<std::size_t> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), 0);
  nn::GradBuffer grads = net.make_grads();
  for (int epoch = 0; epoch < kTabEpochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += kTabBatch) {
      const std::size_t count = std::min<std::size_t>(kTabBatch, order.size() - start);
      Eigen::MatrixXd bx(count, d_tab);
      Eigen::MatrixXd bt(count, target.cols());
      for (std::size_t i = 0; i < count; ++i) {
        bx.row(i) = x.row(static_cast<Eigen::Index>(order[start + i]));
        bt.row(i) = target.row(static_cast<Eigen::Index>(order[start + i]));
      }
      const nn::Mlp::Trace trace = net.forward(bx);
      const nn::LossGrad loss = nn::supervised_loss(trace.logits, bt, head);
      grads.set_zero();
      net.backward(trace, loss.grad_logits, grads);
      opt.step(net, grads);
    }
  }

  const Eigen::MatrixXd out = net.predict(x);
  std::vector<double> values(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (binary) {
      values[static_cast<std::size_t>(i)] = out(i, 0) >= 0.5 ? 1.0 : 0.0;
    } else {
      Eigen::Index best = 0;
      out.row(i).maxCoeff(&best);
      values[static_cast<std::size_t>(i)] = static_cast<double>(best);
    }
  }
  return TabModel(std::move(net), task, d_tab, median(std::move(values)));
}

std::vector<std::uint8_t> predict_recs(const TabModel& m, const Dataset& d) {
  require(d.schema().d_tab == m.d_tab(),
          "predict_recs: dataset d_tab does not match the model");
  const Eigen::VectorXd values = m.predict_values(d.tabular_features());
  std::vector<std::uint8_t> recs(d.size());
  if (m.task().kind == TaskKind::Binary) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      recs[i] = values(static_cast<Eigen::Index>(i)) >= 1.0 ? 1 : 0;
    }
  } else {
    for (std::size_t i = 0; i < d.size(); ++i) {
      recs[i] = values(static_cast<Eigen::Index>(i)) > m.t_rec() ? 1 : 0;
    }
  }
  return recs;
}

BiasedTrainSet induce_train_bias(const Dataset& pool, const std::vector<std::uint8_t>& r,
                                 double label_drop, double row_drop, std::uint64_t seed) {
  require(r.size() == pool.size(), "induce_train_bias: |r| must equal |pool|");
  for (const double f : {label_drop, row_drop}) {
    require(f >= 0.0 && f < 1.0, "induce_train_bias: fractions must lie in [0,1)");
  }

  Rng rng(seed);
  std::vector<BiasedRow> rows;
  rows.reserve(pool.size());
  std::map<std::int64_t, double> vault;
  // Masking pass first, removal pass second; separate passes keep the two
  // sets of draws independent of one another.
  for (std::size_t i = 0; i < pool.size(); ++i) {
    BiasedRow br;
    br.row = pool.row(i);
    br.rec = r[i];
    br.observed = 1;
    if (br.rec == 0 && rng.bernoulli(label_drop)) {
      vault.emplace(br.row.id, br.row.y);
      br.row.y = std::numeric_limits<double>::quiet_NaN();
      br.observed = 0;
    }
    rows.push_back(std::move(br));
  }
  std::vector<BiasedRow> kept;
  kept.reserve(rows.size());
  for (BiasedRow& br : rows) {
    if (!rng.bernoulli(row_drop)) kept.push_back(std::move(br));
  }
  std::map<std::int64_t, double> kept_vault;
  for (const BiasedRow& br : kept) {
    if (!br.observed) kept_vault.emplace(br.row.id, vault.at(br.row.id));
  }

  std::size_t observed = 0;
  for (const BiasedRow& br : kept) observed += br.observed;
  if (observed == 0) {
    throw Error("induce_train_bias: no observed labels survive the drops");
  }
  return BiasedTrainSet(std::move(kept), pool.task(), pool.schema(),
                        OracleVault(std::move(kept_vault)));
}

Dataset make_biased_eval(const Dataset& d_eval, const TabModel& m, double sample_drop,
                         std::uint64_t seed) {
  require(!d_eval.empty(), "make_biased_eval: empty eval split");
  require(sample_drop >= 0.0 && sample_drop < 1.0,
          "make_biased_eval: sample_drop must lie in [0,1)");
  const std::vector<std::uint8_t> recs = predict_recs(m, d_eval);
  Rng rng(seed);
  std::vector<Row> kept;
  for (std::size_t i = 0; i < d_eval.size(); ++i) {
    if (recs[i] == 0 && rng.bernoulli(sample_drop)) continue;
    kept.push_back(d_eval.row(i));
  }
  if (kept.empty()) throw Error("make_biased_eval: every eval row was dropped");
  return Dataset(std::move(kept), d_eval.task(), d_eval.schema());
}

void save_biased_train_set(const BiasedTrainSet& b, const std::filesystem::path& rows_path) {
  std::ofstream out(rows_path);
  if (!out) {
    throw Error("save_biased_train_set: cannot open " + rows_path.string() + " for writing");
  }
  out << "id";
  for (int j = 0; j < b.schema().d_tab; ++j) out << ",x" << j;
  for (int j = 0; j < b.schema().d_rich; ++j) out << ",w" << j;
  out << ",y,r,a\n";
  for (const BiasedRow& br : b.rows()) {
    out << br.row.id;
    for (int j = 0; j < br.row.x.size(); ++j) out << ',' << detail::format_double(br.row.x(j));
    for (int j = 0; j < br.row.w.size(); ++j) out << ',' << detail::format_double(br.row.w(j));
    out << ',' << detail::format_double(br.row.y) << ',' << static_cast<int>(br.rec)
        << ',' << static_cast<int>(br.observed) << '\n';
  }
  if (!out) throw Error("save_biased_train_set: write to " + rows_path.string() + " failed");
}

void save_vault(const OracleVault& vault, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_vault: cannot open " + path.string() + " for writing");
  out << detail::kVaultSentinel << "\nid,y\n";
  for (const auto& [id, y] : vault.labels()) {
    out << id << ',' << detail::format_double(y) << '\n';
  }
  if (!out) throw Error("save_vault: write to " + path.string() + " failed");
}

BiasedTrainSet load_biased_train_set(const std::filesystem::path& rows_path,
                                     const TaskSpec& task) {
  std::ifstream in(rows_path);
  if (!in) throw Error("load_biased_train_set: cannot open " + rows_path.string());
  std::string header;
  if (!std::getline(in, header)) {
    throw Error("load_biased_train_set: " + rows_path.string() + " is empty");
  }
  detail::chomp(header);
  if (header.starts_with(detail::kVaultSentinel)) {
    throw Error("load_biased_train_set: " + rows_path.string() +
                " is a sealed label vault, not a biased training set");
  }
  const std::vector<std::string> names = detail::split_line(header, ',');
  require(names.size() >= 4 && names.front() == "id" && names[names.size() - 3] == "y" &&
              names[names.size() - 2] == "r" && names.back() == "a",
          "load_biased_train_set: expected columns id,<features>,y,r,a");
  int d_tab = 0, d_rich = 0;
  for (std::size_t j = 1; j + 3 < names.size(); ++j) {
    if (names[j].starts_with("x")) ++d_tab;
    else if (names[j].starts_with("w")) ++d_rich;
    else throw Error("load_biased_train_set: unexpected feature column '" + names[j] + "'");
  }

  std::vector<BiasedRow> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = detail::split_line(line, ',');
    if (fields.size() != names.size()) {
      throw Error("load_biased_train_set: " + rows_path.string() + ":" +
                  std::to_string(line_no) + " has wrong field count");
    }
    const std::string context = rows_path.string() + ":" + std::to_string(line_no);
    BiasedRow br;
    br.row.id = detail::parse_int64(fields[0], context);
    br.row.x.resize(d_tab);
    for (int j = 0; j < d_tab; ++j) {
      br.row.x(j) = detail::parse_double(fields[static_cast<std::size_t>(1 + j)], context);
    }
    br.row.w.resize(d_rich);
    for (int j = 0; j < d_rich; ++j) {
      br.row.w(j) = detail::parse_double(fields[static_cast<std::size_t>(1 + d_tab + j)], context);
    }
    br.row.y = detail::parse_double(fields[fields.size() - 3], context);
    br.rec = static_cast<std::uint8_t>(detail::parse_int64(fields[fields.size() - 2], context));
    br.observed = static_cast<std::uint8_t>(detail::parse_int64(fields.back(), context));
    if (br.observed == 0 && !std::isnan(br.row.y)) {
      throw Error(context + ": masked row carries a label");
    }
    rows.push_back(std::move(br));
  }
  return BiasedTrainSet(std::move(rows), task, FeatureSchema{d_tab, d_rich}, std::nullopt);
}

OracleVault load_vault(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_vault: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("load_vault: " + path.string() + " is empty");
  detail::chomp(line);
  if (line != detail::kVaultSentinel) {
    throw Error("load_vault: " + path.string() + " is not a sealed label vault");
  }
  if (!std::getline(in, line)) throw Error("load_vault: missing header");
  detail::chomp(line);
  if (line != "id,y") throw Error("load_vault: unexpected header '" + line + "'");
  std::map<std::int64_t, double> labels;
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = detail::split_line(line, ',');
    if (fields.size() != 2) {
      throw Error("load_vault: " + path.string() + ":" + std::to_string(line_no) +
                  " is malformed");
    }
    const std::string context = path.string() + ":" + std::to_string(line_no);
    labels.emplace(detail::parse_int64(fields[0], context),
                   detail::parse_double(fields[1], context));
  }
  return OracleVault(std::move(labels));
}

}  // namespace cfaug
