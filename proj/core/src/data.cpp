#include "cfaug/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "cfaug/detail/text.hpp"
#include "cfaug/rng.hpp"

namespace cfaug {

namespace {

bool is_integral_value(double v) { return std::floor(v) == v; }

}  // namespace

void validate_label(double y, const TaskSpec& task, std::int64_t id) {
  if (!std::isfinite(y)) {
    throw Error("Dataset: non-finite label on row id " + std::to_string(id));
  }
  switch (task.kind) {
    case TaskKind::Binary:
      if (y != 0.0 && y != 1.0) {
        throw Error("Dataset: binary task requires labels in {0,1}, got " +
                    detail::format_double(y) + " on row id " + std::to_string(id));
      }
      break;
    case TaskKind::Multiclass:
      if (!is_integral_value(y) || y < 0.0 || y >= task.num_classes) {
        throw Error("Dataset: multiclass task requires integer labels in [0," +
                    std::to_string(task.num_classes) + "), got " +
                    detail::format_double(y) + " on row id " + std::to_string(id));
      }
      break;
    case TaskKind::Regression:
      break;
  }
}

namespace {

int count_minority_class(const std::vector<Row>& rows, const TaskSpec& task) {
  std::vector<std::int64_t> counts(task.num_classes, 0);
  for (const Row& r : rows) counts[static_cast<int>(r.y)] += 1;
  int minority = 0;
  for (int k = 1; k < task.num_classes; ++k) {
    if (counts[k] <= counts[minority]) minority = k;
  }
  return minority;
}

}  // namespace

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Binary: return "binary";
    case TaskKind::Multiclass: return "multiclass";
    case TaskKind::Regression: return "regression";
  }
  throw Error("to_string: unknown TaskKind");
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "binary") return TaskKind::Binary;
  if (name == "multiclass") return TaskKind::Multiclass;
  if (name == "regression") return TaskKind::Regression;
  throw Error("task_kind_from_string: unknown task kind '" + name + "'");
}

void TaskSpec::validate() const {
  if (kind == TaskKind::Binary && num_classes != 2) {
    throw Error("TaskSpec: binary task must have num_classes = 2");
  }
  if (kind == TaskKind::Multiclass && num_classes < 2) {
    throw Error("TaskSpec: multiclass task needs num_classes >= 2");
  }
  if (is_classification() &&
      (minority_class < 0 || minority_class >= num_classes)) {
    throw Error("TaskSpec: minority_class " + std::to_string(minority_class) +
                " out of range for " + std::to_string(num_classes) + " classes");
  }
}

void FeatureSchema::validate() const {
  if (d_tab < 1) throw Error("FeatureSchema: d_tab must be >= 1");
  if (d_rich < 0) throw Error("FeatureSchema: d_rich must be >= 0");
}

Dataset::Dataset(std::vector<Row> rows, TaskSpec task, FeatureSchema schema)
    : rows_(std::move(rows)), task_(task), schema_(schema) {
  task_.validate();
  schema_.validate();
  std::unordered_set<std::int64_t> seen;
  seen.reserve(rows_.size());
  for (const Row& r : rows_) {
    if (r.x.size() != schema_.d_tab || r.w.size() != schema_.d_rich) {
      throw Error("Dataset: row id " + std::to_string(r.id) +
                  " does not match the feature schema");
    }
    if (!r.x.allFinite() || !r.w.allFinite()) {
      throw Error("Dataset: non-finite feature on row id " + std::to_string(r.id));
    }
    validate_label(r.y, task_, r.id);
    if (!seen.insert(r.id).second) {
      throw Error("Dataset: duplicate row id " + std::to_string(r.id));
    }
  }
}

Eigen::MatrixXd Dataset::features() const {
  Eigen::MatrixXd m(rows_.size(), schema_.total());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    m.row(i).head(schema_.d_tab) = rows_[i].x;
    m.row(i).tail(schema_.d_rich) = rows_[i].w;
  }
  return m;
}

Eigen::MatrixXd Dataset::tabular_features() const {
  Eigen::MatrixXd m(rows_.size(), schema_.d_tab);
  for (std::size_t i = 0; i < rows_.size(); ++i) m.row(i) = rows_[i].x;
  return m;
}

Eigen::VectorXd Dataset::labels() const {
  Eigen::VectorXd v(rows_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) v(i) = rows_[i].y;
  return v;
}

ColumnSchema ColumnSchema::standard(int d_tab, int d_rich) {
  ColumnSchema s;
  for (int j = 0; j < d_tab; ++j) s.tabular_columns.push_back("x" + std::to_string(j));
  for (int j = 0; j < d_rich; ++j) s.rich_columns.push_back("w" + std::to_string(j));
  return s;
}

Dataset load_dataset(const std::filesystem::path& path,
                     const ColumnSchema& schema, const TaskSpec& task) {
  std::ifstream in(path);
  if (!in) throw Error("load_dataset: cannot open " + path.string());

  std::string header;
  if (!std::getline(in, header)) {
    throw Error("load_dataset: " + path.string() + " is empty");
  }
  detail::chomp(header);
  if (header.starts_with(detail::kVaultSentinel)) {
    throw Error("load_dataset: " + path.string() +
                " is a sealed label vault; only oracle and analysis code may read it");
  }

  const std::vector<std::string> names = detail::split_line(header, ',');
  std::unordered_map<std::string, std::size_t> column_of;
  for (std::size_t j = 0; j < names.size(); ++j) column_of[names[j]] = j;

  const auto locate = [&](const std::string& name) {
    const auto it = column_of.find(name);
    if (it == column_of.end()) {
      throw Error("load_dataset: " + path.string() + " has no column '" + name + "'");
    }
    return it->second;
  };

  const std::size_t id_col = locate(schema.id_column);
  const std::size_t label_col = locate(schema.label_column);
  std::vector<std::size_t> tab_cols, rich_cols;
  for (const std::string& c : schema.tabular_columns) tab_cols.push_back(locate(c));
  for (const std::string& c : schema.rich_columns) rich_cols.push_back(locate(c));

  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = detail::split_line(line, ',');
    if (fields.size() != names.size()) {
      throw Error("load_dataset: " + path.string() + ":" + std::to_string(line_no) +
                  " has " + std::to_string(fields.size()) + " fields, expected " +
                  std::to_string(names.size()));
    }
    const std::string context = path.string() + ":" + std::to_string(line_no);
    Row r;
    r.id = detail::parse_int64(fields[id_col], context);
    r.x.resize(tab_cols.size());
    for (std::size_t j = 0; j < tab_cols.size(); ++j) {
      r.x(j) = detail::parse_double(fields[tab_cols[j]], context);
    }
    r.w.resize(rich_cols.size());
    for (std::size_t j = 0; j < rich_cols.size(); ++j) {
      r.w(j) = detail::parse_double(fields[rich_cols[j]], context);
    }
    r.y = detail::parse_double(fields[label_col], context);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw Error("load_dataset: " + path.string() + " has no rows");

  TaskSpec resolved = task;
  FeatureSchema fs{static_cast<int>(tab_cols.size()), static_cast<int>(rich_cols.size())};
  Dataset d(std::move(rows), resolved, fs);
  if (resolved.is_classification()) {
    resolved.minority_class = count_minority_class(d.rows(), resolved);
    d = Dataset(std::vector<Row>(d.rows()), resolved, fs);
  }
  return d;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_dataset: cannot open " + path.string() + " for writing");

  out << "id";
  for (int j = 0; j < dataset.schema().d_tab; ++j) out << ",x" << j;
  for (int j = 0; j < dataset.schema().d_rich; ++j) out << ",w" << j;
  out << ",y\n";
  for (const Row& r : dataset.rows()) {
    out << r.id;
    for (int j = 0; j < r.x.size(); ++j) out << ',' << detail::format_double(r.x(j));
    for (int j = 0; j < r.w.size(); ++j) out << ',' << detail::format_double(r.w(j));
    out << ',' << detail::format_double(r.y) << '\n';
  }
  if (!out) throw Error("save_dataset: write to " + path.string() + " failed");
}

Dataset binarize_labels(const Dataset& dataset, double positive_share) {
  if (!(positive_share > 0.0 && positive_share < 1.0)) {
    throw Error("binarize_labels: positive_share must lie in (0,1), got " +
                detail::format_double(positive_share));
  }
  if (dataset.empty()) throw Error("binarize_labels: empty dataset");

  std::vector<double> sorted(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) sorted[i] = dataset.row(i).y;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) {
    throw Error("binarize_labels: all labels are identical; no threshold separates classes");
  }

  // Threshold at the empirical (1 - positive_share) quantile; labels equal to
  // the threshold fall in class 0.
  const double q = 1.0 - positive_share;
  const std::int64_t n = static_cast<std::int64_t>(sorted.size());
  std::int64_t idx = static_cast<std::int64_t>(std::ceil(q * static_cast<double>(n))) - 1;
  idx = std::clamp<std::int64_t>(idx, 0, n - 1);
  const double threshold = sorted[static_cast<std::size_t>(idx)];

  std::vector<Row> rows(dataset.rows());
  std::int64_t positives = 0;
  for (Row& r : rows) {
    r.y = r.y > threshold ? 1.0 : 0.0;
    positives += static_cast<std::int64_t>(r.y);
  }

  TaskSpec task;
  task.kind = TaskKind::Binary;
  task.num_classes = 2;
  task.minority_class = 2 * positives <= n ? 1 : 0;
  return Dataset(std::move(rows), task, dataset.schema());
}

SplitBundle split_dataset(const Dataset& dataset, double f_original,
                          double f_train, double f_eval, std::uint64_t seed) {
  for (const double f : {f_original, f_train, f_eval}) {
    if (!(f > 0.0)) {
      throw Error("split_dataset: fractions must be positive");
    }
  }
  const double sum = f_original + f_train + f_eval;
  if (sum > 1.0 + 1e-9) {
    throw Error("split_dataset: fractions must sum to at most 1");
  }

  const std::int64_t n = static_cast<std::int64_t>(dataset.size());
  const std::int64_t n_original = std::llround(f_original * static_cast<double>(n));
  const std::int64_t n_train = std::llround(f_train * static_cast<double>(n));
  const std::int64_t n_eval = sum >= 1.0 - 1e-9
                                  ? n - n_original - n_train
                                  : std::llround(f_eval * static_cast<double>(n));
  if (n_original < 1 || n_train < 1 || n_eval < 1 || n_original + n_train + n_eval > n) {
    throw Error("split_dataset: a split part would be empty (n = " +
                std::to_string(n) + ")");
  }

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  const auto take = [&](std::size_t offset, std::size_t count) {
    std::vector<std::size_t> part(order.begin() + offset, order.begin() + offset + count);
    std::sort(part.begin(), part.end());
    std::vector<Row> rows;
    rows.reserve(count);
    for (const std::size_t i : part) rows.push_back(dataset.row(i));
    return Dataset(std::move(rows), dataset.task(), dataset.schema());
  };

  SplitBundle bundle;
  bundle.d_original = take(0, static_cast<std::size_t>(n_original));
  bundle.d_train_pool = take(static_cast<std::size_t>(n_original), static_cast<std::size_t>(n_train));
  bundle.d_eval = take(static_cast<std::size_t>(n_original + n_train), static_cast<std::size_t>(n_eval));
  return bundle;
}

}  // namespace cfaug
