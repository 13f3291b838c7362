#include "cfaug/task_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cfaug/checkpoint.hpp"
#include "cfaug/rng.hpp"

namespace cfaug {

namespace {

nn::Head head_for(const TaskSpec& task) {
  switch (task.kind) {
    case TaskKind::Binary: return nn::Head::Sigmoid;
    case TaskKind::Multiclass: return nn::Head::Softmax;
    case TaskKind::Regression: return nn::Head::Linear;
  }
  throw Error("head_for: unknown task kind");
}

Eigen::MatrixXd target_matrix(const Eigen::VectorXd& labels, const TaskSpec& task) {
  if (task.kind == TaskKind::Multiclass) return nn::one_hot(labels, task.num_classes);
  return labels;
}

// Matched-prior output bias: log-odds of the weighted positive rate
// (Sigmoid), log weighted class shares (Softmax), or the weighted target
// mean (Linear). Starting from the prior makes the model loss-optimal among
// constants at step 0, so training spends its budget on separation.
Eigen::VectorXd prior_output_bias(const Eigen::MatrixXd& target, const Eigen::VectorXd& w,
                                  nn::Head head) {
  const Eigen::VectorXd mean = target.transpose() * w / w.sum();
  switch (head) {
    case nn::Head::Sigmoid: {
      const double p = std::clamp(mean(0), 1e-6, 1.0 - 1e-6);
      return Eigen::VectorXd::Constant(1, std::log(p / (1.0 - p)));
    }
    case nn::Head::Softmax:
      return mean.array().max(1e-6).log().matrix();
    default:
      return mean;
  }
}

void check_classification_labels(const Dataset& d, const TaskSpec& task) {
  if (!task.is_classification()) return;
  const double first = d.row(0).y;
  for (const Row& r : d.rows()) {
    if (r.y != first) return;
  }
  throw Error("train_task_model: single-class training labels, nothing to separate");
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("TrainConfig: epochs must be >= 1");
  if (hidden < 0) throw Error("TrainConfig: hidden width must be >= 0");
  if (learning_rate <= 0.0) throw Error("TrainConfig: learning_rate must be > 0");
  if (batch_size < 1) throw Error("TrainConfig: batch_size must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw Error("TrainConfig: validation_fraction must lie in (0,1)");
  }
}

TaskModel::TaskModel(nn::Mlp net, TaskSpec task, FeatureSchema schema, TrainConfig config,
                     std::uint64_t seed, std::vector<double> epoch_train_loss,
                     std::vector<double> epoch_val_loss)
    : net_(std::move(net)),
      task_(task),
      schema_(schema),
      config_(config),
      seed_(seed),
      epoch_train_loss_(std::move(epoch_train_loss)),
      epoch_val_loss_(std::move(epoch_val_loss)) {}

Eigen::MatrixXd TaskModel::predict_output(const Eigen::MatrixXd& features) const {
  require(features.cols() == schema_.total(),
          "TaskModel: feature width does not match the training schema");
  return net_.predict(features);
}

Eigen::VectorXd TaskModel::predict_labels(const Eigen::MatrixXd& features) const {
  const Eigen::MatrixXd out = predict_output(features);
  Eigen::VectorXd labels(out.rows());
  switch (task_.kind) {
    case TaskKind::Binary:
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        labels(i) = out(i, 0) >= 0.5 ? 1.0 : 0.0;
      }
      break;
    case TaskKind::Multiclass:
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        Eigen::Index best = 0;
        out.row(i).maxCoeff(&best);
        labels(i) = static_cast<double>(best);
      }
      break;
    case TaskKind::Regression:
      labels = out.col(0);
      break;
  }
  return labels;
}

TaskModel train_task_model(const Dataset& d, const TaskSpec& task, std::uint64_t seed,
                           const std::optional<std::vector<double>>& weights,
                           const TrainConfig& config) {
  config.validate();
  task.validate();
  require(!d.empty(), "train_task_model: empty training set");
  require(task.kind == d.task().kind && task.num_classes == d.task().num_classes,
          "train_task_model: task does not match the dataset");
  check_classification_labels(d, task);
  if (weights) {
    require(weights->size() == d.size(),
            "train_task_model: weight count does not match the row count");
    for (const double w : *weights) {
      require(std::isfinite(w) && w > 0.0, "train_task_model: weights must be positive");
    }
  }

  const Eigen::MatrixXd features = d.features();
  const Eigen::MatrixXd target = target_matrix(d.labels(), task);
  const nn::Head head = head_for(task);

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(seed, "task-val-split"));
  split_rng.shuffle(order);
  const std::size_t n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::llround(config.validation_fraction * static_cast<double>(d.size()))));
  require(n_val < d.size(), "train_task_model: dataset too small for a validation slice");
  std::vector<std::size_t> val_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  const auto gather = [&](const std::vector<std::size_t>& rows, Eigen::MatrixXd& f,
                          Eigen::MatrixXd& t, Eigen::VectorXd& w) {
    f.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    t.resize(static_cast<Eigen::Index>(rows.size()), target.cols());
    w.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto ri = static_cast<Eigen::Index>(i);
      f.row(ri) = features.row(static_cast<Eigen::Index>(rows[i]));
      t.row(ri) = target.row(static_cast<Eigen::Index>(rows[i]));
      w(ri) = weights ? (*weights)[rows[i]] : 1.0;
    }
  };
  Eigen::MatrixXd val_f, val_t;
  Eigen::VectorXd val_w;
  gather(val_rows, val_f, val_t, val_w);

  std::vector<int> dims{d.schema().total()};
  if (config.hidden > 0) dims.push_back(config.hidden);
  dims.push_back(task.label_width());
  nn::Mlp net(dims, head, derive_seed(seed, "task-init"));
  {
    Eigen::MatrixXd train_f, train_t;
    Eigen::VectorXd train_w;
    gather(train_rows, train_f, train_t, train_w);
    net.set_output_bias(prior_output_bias(train_t, train_w, head));
  }
  nn::Adam opt(config.learning_rate);
  nn::GradBuffer grads = net.make_grads();
  Rng shuffle_rng(derive_seed(seed, "task-shuffle"));

  std::vector<double> epoch_train_loss, epoch_val_loss;
  Eigen::VectorXd best_params = net.parameters();
  double best_val = std::numeric_limits<double>::infinity();

  Eigen::MatrixXd batch_f, batch_t;
  Eigen::VectorXd batch_w;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(train_rows);
    for (std::size_t start = 0; start < train_rows.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t count =
          std::min<std::size_t>(config.batch_size, train_rows.size() - start);
      std::vector<std::size_t> batch(train_rows.begin() + static_cast<std::ptrdiff_t>(start),
                                     train_rows.begin() + static_cast<std::ptrdiff_t>(start + count));
      gather(batch, batch_f, batch_t, batch_w);
      const nn::Mlp::Trace trace = net.forward(batch_f);
      const nn::LossGrad loss = nn::supervised_loss(trace.logits, batch_t, head, &batch_w);
      grads.set_zero();
      net.backward(trace, loss.grad_logits, grads);
      opt.step(net, grads);
    }

    Eigen::MatrixXd train_f, train_t;
    Eigen::VectorXd train_w;
    gather(train_rows, train_f, train_t, train_w);
    epoch_train_loss.push_back(
        nn::supervised_loss(net.forward(train_f).logits, train_t, head, &train_w).value);
    const double val_loss =
        nn::supervised_loss(net.forward(val_f).logits, val_t, head, &val_w).value;
    epoch_val_loss.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best_params = net.parameters();
    }
  }
  net.set_parameters(best_params);

  return TaskModel(std::move(net), task, d.schema(), config, seed,
                   std::move(epoch_train_loss), std::move(epoch_val_loss));
}

TaskModel train_task_model(const CorrectedDataset& c, const TaskSpec& task,
                           std::uint64_t seed, const TrainConfig& config) {
  return train_task_model(c.as_dataset(), task, seed, std::nullopt, config);
}

MetricsReport evaluate_predictions(const Eigen::VectorXd& predictions,
                                   const Dataset& d_eval, const TaskSpec& task) {
  require(!d_eval.empty(), "evaluate: empty eval set");
  require(static_cast<std::size_t>(predictions.size()) == d_eval.size(),
          "evaluate: prediction count does not match the eval set");
  std::vector<double> y_true(d_eval.size()), y_pred(d_eval.size());
  for (std::size_t i = 0; i < d_eval.size(); ++i) {
    y_true[i] = d_eval.row(i).y;
    y_pred[i] = predictions(static_cast<Eigen::Index>(i));
  }
  return compute_metrics(y_true, y_pred, task);
}

MetricsReport evaluate(const TaskModel& m, const Dataset& d_eval, const TaskSpec& task) {
  require(m.schema() == d_eval.schema(), "evaluate: schema mismatch");
  require(task.kind == m.task().kind && task.num_classes == m.task().num_classes,
          "evaluate: task mismatch");
  MetricsReport report =
      evaluate_predictions(m.predict_labels(d_eval.features()), d_eval, task);
  report.seed = m.seed();
  return report;
}

TaskModel train_oracle(const BiasedTrainSet& b, const TaskSpec& task, std::uint64_t seed,
                       const TrainConfig& config) {
  const OracleVault& vault = b.oracle_vault();
  std::vector<Row> rows;
  rows.reserve(b.size());
  for (const BiasedRow& br : b.rows()) {
    Row r = br.row;
    if (!br.observed) r.y = vault.label(r.id);
    rows.push_back(std::move(r));
  }
  return train_task_model(Dataset(std::move(rows), b.task(), b.schema()), task, seed,
                          std::nullopt, config);
}

void save_task_model(const TaskModel& m, const std::filesystem::path& path) {
  CheckpointWriter w;
  w.put_string("kind", "task_model");
  w.put_string("task_kind", to_string(m.task().kind));
  w.put_int("num_classes", m.task().num_classes);
  w.put_int("minority_class", m.task().minority_class);
  w.put_int("d_tab", m.schema().d_tab);
  w.put_int("d_rich", m.schema().d_rich);
  w.put_int("epochs", m.config().epochs);
  w.put_int("hidden", m.config().hidden);
  w.put_double("learning_rate", m.config().learning_rate);
  w.put_int("batch_size", m.config().batch_size);
  w.put_double("validation_fraction", m.config().validation_fraction);
  w.put_int("seed", static_cast<std::int64_t>(m.seed()));
  std::vector<std::int64_t> dims(m.net().dims().begin(), m.net().dims().end());
  w.put_ints("net_dims", dims);
  w.put_int("net_head", static_cast<int>(m.net().head()));
  w.put_doubles("net_params", m.net().parameters());
  w.put_doubles("epoch_train_loss", m.epoch_train_loss());
  w.put_doubles("epoch_val_loss", m.epoch_val_loss());
  w.write(path);
}

TaskModel load_task_model(const std::filesystem::path& path) {
  CheckpointReader r(path);
  require(r.get_string("kind") == "task_model",
          "load_task_model: " + path.string() + " is not a task model checkpoint");
  TaskSpec task;
  task.kind = task_kind_from_string(r.get_string("task_kind"));
  task.num_classes = static_cast<int>(r.get_int("num_classes"));
  task.minority_class = static_cast<int>(r.get_int("minority_class"));
  const FeatureSchema schema{static_cast<int>(r.get_int("d_tab")),
                             static_cast<int>(r.get_int("d_rich"))};
  TrainConfig config;
  config.epochs = static_cast<int>(r.get_int("epochs"));
  config.hidden = static_cast<int>(r.get_int("hidden"));
  config.learning_rate = r.get_double("learning_rate");
  config.batch_size = static_cast<int>(r.get_int("batch_size"));
  config.validation_fraction = r.get_double("validation_fraction");

  const std::vector<std::int64_t> dims64 = r.get_ints("net_dims");
  std::vector<int> dims(dims64.begin(), dims64.end());
  const auto head = static_cast<nn::Head>(r.get_int("net_head"));
  nn::Mlp net(dims, head, 0);
  net.set_parameters(r.get_doubles("net_params"));

  const auto to_vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  return TaskModel(std::move(net), task, schema, config,
                   static_cast<std::uint64_t>(r.get_int("seed")),
                   to_vec(r.get_doubles("epoch_train_loss")),
                   to_vec(r.get_doubles("epoch_val_loss")));
}

}  // namespace cfaug
