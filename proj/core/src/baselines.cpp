#include "cfaug/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfaug/checkpoint.hpp"
#include "cfaug/rng.hpp"

namespace cfaug {

namespace {

constexpr int kPropensityHidden = 32;
constexpr int kPropensityEpochs = 20;
constexpr int kPropensityBatch = 64;
constexpr double kPropensityLearningRate = 1e-2;

Dataset observed_dataset(const BiasedTrainSet& b, const char* caller) {
  std::vector<Row> rows;
  rows.reserve(b.observed_count());
  for (const BiasedRow& br : b.rows()) {
    if (br.observed) rows.push_back(br.row);
  }
  require(!rows.empty(), std::string(caller) + ": no observed labels to train on");
  return Dataset(std::move(rows), b.task(), b.schema());
}

void check_clip(double clip_min, const char* caller) {
  require(clip_min > 0.0 && clip_min <= 1.0,
          std::string(caller) + ": clip_min must lie in (0,1]");
}

}  // namespace

PropensityTable estimate_propensities(const BiasedTrainSet& b, double clip_min) {
  check_clip(clip_min, "estimate_propensities");
  std::array<std::int64_t, 2> total{0, 0};
  std::array<std::int64_t, 2> observed{0, 0};
  for (const BiasedRow& br : b.rows()) {
    total[br.rec] += 1;
    observed[br.rec] += br.observed ? 1 : 0;
  }
  for (int c = 0; c < 2; ++c) {
    require(total[c] > 0, "estimate_propensities: no rows with r = " + std::to_string(c));
  }
  PropensityTable table;
  table.clip_min = clip_min;
  table.e0 = std::max(clip_min,
                      static_cast<double>(observed[0]) / static_cast<double>(total[0]));
  table.e1 = std::max(clip_min,
                      static_cast<double>(observed[1]) / static_cast<double>(total[1]));
  return table;
}

std::vector<double> estimate_feature_propensities(const BiasedTrainSet& b,
                                                  double clip_min, std::uint64_t seed) {
  check_clip(clip_min, "estimate_feature_propensities");
  require(b.size() > 0, "estimate_feature_propensities: empty training set");

  std::vector<std::size_t> all(b.size());
  std::iota(all.begin(), all.end(), 0);
  const Eigen::MatrixXd features = b.features_of(all);
  Eigen::MatrixXd target(static_cast<Eigen::Index>(b.size()), 1);
  for (std::size_t i = 0; i < b.size(); ++i) {
    target(static_cast<Eigen::Index>(i), 0) = b.rows()[i].observed ? 1.0 : 0.0;
  }

  nn::Mlp net({b.schema().total(), kPropensityHidden, 1}, nn::Head::Sigmoid,
              derive_seed(seed, "fprop-init"));
  nn::Adam opt(kPropensityLearningRate);
  nn::GradBuffer grads = net.make_grads();
  Rng shuffle_rng(derive_seed(seed, "fprop-shuffle"));

  std::vector<std::size_t> order = all;
  for (int epoch = 0; epoch < kPropensityEpochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(kPropensityBatch)) {
      const std::size_t count =
          std::min<std::size_t>(kPropensityBatch, order.size() - start);
      Eigen::MatrixXd f(static_cast<Eigen::Index>(count), features.cols());
      Eigen::MatrixXd t(static_cast<Eigen::Index>(count), 1);
      for (std::size_t i = 0; i < count; ++i) {
        const auto src = static_cast<Eigen::Index>(order[start + i]);
        f.row(static_cast<Eigen::Index>(i)) = features.row(src);
        t(static_cast<Eigen::Index>(i), 0) = target(src, 0);
      }
      const nn::Mlp::Trace trace = net.forward(f);
      const nn::LossGrad loss = nn::supervised_loss(trace.logits, t, nn::Head::Sigmoid);
      grads.set_zero();
      net.backward(trace, loss.grad_logits, grads);
      opt.step(net, grads);
    }
  }

  const Eigen::MatrixXd probs = net.predict(features);
  std::vector<double> out(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    out[i] = std::max(clip_min, probs(static_cast<Eigen::Index>(i), 0));
  }
  return out;
}

TaskModel train_uncorrected(const BiasedTrainSet& b, const TaskSpec& task,
                            std::uint64_t seed, const TrainConfig& config) {
  return train_task_model(observed_dataset(b, "train_uncorrected"), task, seed,
                          std::nullopt, config);
}

TaskModel train_ipw(const BiasedTrainSet& b, const PropensityTable& p,
                    const TaskSpec& task, std::uint64_t seed, const TrainConfig& config) {
  check_clip(p.clip_min, "train_ipw");
  for (const double e : {p.e0, p.e1}) {
    require(e >= p.clip_min && e <= 1.0,
            "train_ipw: propensities must lie in [clip_min, 1]");
  }
  std::vector<double> weights;
  weights.reserve(b.observed_count());
  for (const BiasedRow& br : b.rows()) {
    if (br.observed) weights.push_back(p.weight_for(br.rec));
  }
  return train_task_model(observed_dataset(b, "train_ipw"), task, seed, weights, config);
}

TaskModel train_ipw(const BiasedTrainSet& b, const std::vector<double>& row_propensities,
                    const TaskSpec& task, std::uint64_t seed, const TrainConfig& config) {
  require(row_propensities.size() == b.size(),
          "train_ipw: propensity count does not match the row count");
  std::vector<double> weights;
  weights.reserve(b.observed_count());
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!b.rows()[i].observed) continue;
    const double e = row_propensities[i];
    require(std::isfinite(e) && e > 0.0 && e <= 1.0,
            "train_ipw: propensities must lie in (0,1]");
    weights.push_back(1.0 / e);
  }
  return train_task_model(observed_dataset(b, "train_ipw"), task, seed, weights, config);
}

void DragonnetConfig::validate() const {
  if (trunk_width < 1) throw Error("DragonnetConfig: trunk width must be >= 1");
  if (head_width < 1) throw Error("DragonnetConfig: head width must be >= 1");
  if (epochs < 1) throw Error("DragonnetConfig: epochs must be >= 1");
  if (learning_rate <= 0.0) throw Error("DragonnetConfig: learning_rate must be > 0");
  if (batch_size < 1) throw Error("DragonnetConfig: batch_size must be >= 1");
}

DragonnetModel::DragonnetModel(nn::Mlp trunk, nn::Mlp propensity_head,
                               std::array<nn::Mlp, 2> outcome_heads, TaskSpec task,
                               FeatureSchema schema, DragonnetConfig config,
                               std::uint64_t seed, std::vector<double> epoch_loss)
    : trunk_(std::move(trunk)),
      propensity_head_(std::move(propensity_head)),
      outcome_heads_(std::move(outcome_heads)),
      task_(task),
      schema_(schema),
      config_(config),
      seed_(seed),
      epoch_loss_(std::move(epoch_loss)) {}

const nn::Mlp& DragonnetModel::outcome_head(int condition) const {
  require(condition == 0 || condition == 1,
          "DragonnetModel: condition must be 0 or 1");
  return outcome_heads_[static_cast<std::size_t>(condition)];
}

Eigen::VectorXd DragonnetModel::propensity(const Eigen::MatrixXd& features) const {
  require(features.cols() == schema_.total(),
          "DragonnetModel: feature width does not match the training schema");
  return propensity_head_.predict(trunk_.predict(features)).col(0);
}

Eigen::VectorXd DragonnetModel::outcome_probability(const Eigen::MatrixXd& features,
                                                    int condition) const {
  require(features.cols() == schema_.total(),
          "DragonnetModel: feature width does not match the training schema");
  return outcome_head(condition).predict(trunk_.predict(features)).col(0);
}

Eigen::VectorXd DragonnetModel::predict_labels(const Eigen::MatrixXd& features,
                                               const std::vector<std::uint8_t>& recs) const {
  require(features.cols() == schema_.total(),
          "DragonnetModel: feature width does not match the training schema");
  require(static_cast<Eigen::Index>(recs.size()) == features.rows(),
          "DragonnetModel: rec count does not match the row count");
  const Eigen::MatrixXd rep = trunk_.predict(features);
  const Eigen::MatrixXd p0 = outcome_heads_[0].predict(rep);
  const Eigen::MatrixXd p1 = outcome_heads_[1].predict(rep);
  Eigen::VectorXd labels(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const std::uint8_t rec = recs[static_cast<std::size_t>(i)];
    require(rec == 0 || rec == 1, "DragonnetModel: recs must be 0 or 1");
    const double p = rec == 0 ? p0(i, 0) : p1(i, 0);
    labels(i) = p >= 0.5 ? 1.0 : 0.0;
  }
  return labels;
}

DragonnetModel train_dragonnet(const BiasedTrainSet& b, const TaskSpec& task,
                               std::uint64_t seed, const DragonnetConfig& config) {
  config.validate();
  require(task.kind == TaskKind::Binary,
          "train_dragonnet: only binary tasks are supported");
  require(task.kind == b.task().kind, "train_dragonnet: task does not match the data");

  std::vector<std::size_t> observed = b.observed_indices();
  require(!observed.empty(), "train_dragonnet: no observed labels to train on");

  const Eigen::MatrixXd features = b.features_of(observed);
  Eigen::MatrixXd labels(static_cast<Eigen::Index>(observed.size()), 1);
  Eigen::MatrixXd recs(static_cast<Eigen::Index>(observed.size()), 1);
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const BiasedRow& br = b.rows()[observed[i]];
    labels(static_cast<Eigen::Index>(i), 0) = br.row.y;
    recs(static_cast<Eigen::Index>(i), 0) = static_cast<double>(br.rec);
  }

  nn::Mlp trunk({b.schema().total(), config.trunk_width, config.trunk_width},
                nn::Head::Tanh, derive_seed(seed, "dragonnet-trunk"),
                /*zero_init_output=*/false);
  nn::Mlp p_head({config.trunk_width, config.head_width, 1}, nn::Head::Sigmoid,
                 derive_seed(seed, "dragonnet-propensity"));
  std::array<nn::Mlp, 2> o_heads{
      nn::Mlp({config.trunk_width, config.head_width, 1}, nn::Head::Sigmoid,
              derive_seed(seed, "dragonnet-outcome-0")),
      nn::Mlp({config.trunk_width, config.head_width, 1}, nn::Head::Sigmoid,
              derive_seed(seed, "dragonnet-outcome-1"))};

  nn::Adam trunk_opt(config.learning_rate);
  nn::Adam p_opt(config.learning_rate);
  std::array<nn::Adam, 2> o_opts{nn::Adam(config.learning_rate),
                                 nn::Adam(config.learning_rate)};
  nn::GradBuffer trunk_grads = trunk.make_grads();
  nn::GradBuffer p_grads = p_head.make_grads();
  std::array<nn::GradBuffer, 2> o_grads{o_heads[0].make_grads(), o_heads[1].make_grads()};

  // Composite loss on a batch: BCE of the propensity head over all rows plus
  // the per-condition outcome BCEs weighted by each condition's share, which
  // together equal the per-row mean of both objectives.
  const auto batch_loss = [&](const std::vector<std::size_t>& rows, bool update) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd f(n, features.cols());
    Eigen::MatrixXd y(n, 1), r(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
      f.row(i) = features.row(src);
      y(i, 0) = labels(src, 0);
      r(i, 0) = recs(src, 0);
    }

    const nn::Mlp::Trace trunk_trace = trunk.forward(f);
    const Eigen::MatrixXd& rep = trunk_trace.out;

    const nn::Mlp::Trace p_trace = p_head.forward(rep);
    const nn::LossGrad p_loss =
        nn::supervised_loss(p_trace.logits, r, nn::Head::Sigmoid);
    double total = p_loss.value;

    Eigen::MatrixXd rep_grad;
    if (update) {
      p_grads.set_zero();
      rep_grad = p_head.backward(p_trace, p_loss.grad_logits, p_grads);
    }

    std::array<std::vector<Eigen::Index>, 2> by_condition;
    for (Eigen::Index i = 0; i < n; ++i) {
      by_condition[r(i, 0) == 0.0 ? 0 : 1].push_back(i);
    }
    for (int c = 0; c < 2; ++c) {
      const auto& members = by_condition[static_cast<std::size_t>(c)];
      if (members.empty()) continue;
      const auto nc = static_cast<Eigen::Index>(members.size());
      Eigen::MatrixXd rep_c(nc, rep.cols());
      Eigen::MatrixXd y_c(nc, 1);
      for (Eigen::Index i = 0; i < nc; ++i) {
        rep_c.row(i) = rep.row(members[static_cast<std::size_t>(i)]);
        y_c(i, 0) = y(members[static_cast<std::size_t>(i)], 0);
      }
      nn::Mlp& head = o_heads[static_cast<std::size_t>(c)];
      const nn::Mlp::Trace o_trace = head.forward(rep_c);
      const nn::LossGrad o_loss =
          nn::supervised_loss(o_trace.logits, y_c, nn::Head::Sigmoid);
      const double share = static_cast<double>(nc) / static_cast<double>(n);
      total += share * o_loss.value;
      if (update) {
        nn::GradBuffer& og = o_grads[static_cast<std::size_t>(c)];
        og.set_zero();
        const Eigen::MatrixXd in_grad =
            head.backward(o_trace, (share * o_loss.grad_logits).eval(), og);
        for (Eigen::Index i = 0; i < nc; ++i) {
          rep_grad.row(members[static_cast<std::size_t>(i)]) += in_grad.row(i);
        }
        o_opts[static_cast<std::size_t>(c)].step(head, og);
      }
    }

    if (update) {
      trunk_grads.set_zero();
      trunk.backward(trunk_trace, nn::head_vjp(rep, rep_grad, nn::Head::Tanh),
                     trunk_grads);
      trunk_opt.step(trunk, trunk_grads);
      p_opt.step(p_head, p_grads);
    }
    return total;
  };

  std::vector<std::size_t> order(observed.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(seed, "dragonnet-shuffle"));
  std::vector<double> epoch_loss;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t count =
          std::min<std::size_t>(config.batch_size, order.size() - start);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(start + count));
      batch_loss(batch, /*update=*/true);
    }
    std::vector<std::size_t> all(observed.size());
    std::iota(all.begin(), all.end(), 0);
    epoch_loss.push_back(batch_loss(all, /*update=*/false));
  }

  return DragonnetModel(std::move(trunk), std::move(p_head), std::move(o_heads), task,
                        b.schema(), config, seed, std::move(epoch_loss));
}

namespace {

void put_net(CheckpointWriter& w, const std::string& prefix, const nn::Mlp& net) {
  std::vector<std::int64_t> dims(net.dims().begin(), net.dims().end());
  w.put_ints(prefix + "_dims", dims);
  w.put_int(prefix + "_head", static_cast<int>(net.head()));
  w.put_doubles(prefix + "_params", net.parameters());
}

nn::Mlp get_net(CheckpointReader& r, const std::string& prefix) {
  const std::vector<std::int64_t> dims64 = r.get_ints(prefix + "_dims");
  std::vector<int> dims(dims64.begin(), dims64.end());
  nn::Mlp net(dims, static_cast<nn::Head>(r.get_int(prefix + "_head")), 0);
  net.set_parameters(r.get_doubles(prefix + "_params"));
  return net;
}

}  // namespace

void save_dragonnet(const DragonnetModel& m, const std::filesystem::path& path) {
  CheckpointWriter w;
  w.put_string("kind", "dragonnet");
  w.put_string("task_kind", to_string(m.task().kind));
  w.put_int("num_classes", m.task().num_classes);
  w.put_int("minority_class", m.task().minority_class);
  w.put_int("d_tab", m.schema().d_tab);
  w.put_int("d_rich", m.schema().d_rich);
  w.put_int("trunk_width", m.config().trunk_width);
  w.put_int("head_width", m.config().head_width);
  w.put_int("epochs", m.config().epochs);
  w.put_double("learning_rate", m.config().learning_rate);
  w.put_int("batch_size", m.config().batch_size);
  w.put_int("seed", static_cast<std::int64_t>(m.seed()));
  w.put_doubles("epoch_loss", m.epoch_loss());
  put_net(w, "trunk", m.trunk());
  put_net(w, "propensity", m.propensity_head());
  put_net(w, "outcome0", m.outcome_head(0));
  put_net(w, "outcome1", m.outcome_head(1));
  w.write(path);
}

DragonnetModel load_dragonnet(const std::filesystem::path& path) {
  CheckpointReader r(path);
  require(r.get_string("kind") == "dragonnet",
          "load_dragonnet: " + path.string() + " is not a dragonnet checkpoint");
  TaskSpec task;
  task.kind = task_kind_from_string(r.get_string("task_kind"));
  task.num_classes = static_cast<int>(r.get_int("num_classes"));
  task.minority_class = static_cast<int>(r.get_int("minority_class"));
  const FeatureSchema schema{static_cast<int>(r.get_int("d_tab")),
                             static_cast<int>(r.get_int("d_rich"))};
  DragonnetConfig config;
  config.trunk_width = static_cast<int>(r.get_int("trunk_width"));
  config.head_width = static_cast<int>(r.get_int("head_width"));
  config.epochs = static_cast<int>(r.get_int("epochs"));
  config.learning_rate = r.get_double("learning_rate");
  config.batch_size = static_cast<int>(r.get_int("batch_size"));

  const Eigen::VectorXd losses = r.get_doubles("epoch_loss");
  return DragonnetModel(get_net(r, "trunk"), get_net(r, "propensity"),
                        {get_net(r, "outcome0"), get_net(r, "outcome1")}, task, schema,
                        config, static_cast<std::uint64_t>(r.get_int("seed")),
                        std::vector<double>(losses.data(), losses.data() + losses.size()));
}

}  // namespace cfaug
