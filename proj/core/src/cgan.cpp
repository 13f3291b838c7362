#include "cfaug/cgan.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "cfaug/checkpoint.hpp"
#include "cfaug/detail/text.hpp"
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

int head_to_int(nn::Head head) { return static_cast<int>(head); }
nn::Head head_from_int(std::int64_t v) {
  require(v >= 0 && v <= 2, "checkpoint: bad head code");
  return static_cast<nn::Head>(v);
}

// One-hot / scalar encoding of a known label, as the discriminator sees it.
Eigen::RowVectorXd label_repr(double y, const TaskSpec& task) {
  Eigen::RowVectorXd repr = Eigen::RowVectorXd::Zero(task.label_width());
  if (task.kind == TaskKind::Multiclass) {
    repr(static_cast<Eigen::Index>(y)) = 1.0;
  } else {
    repr(0) = y;
  }
  return repr;
}

double sample_label(const Eigen::RowVectorXd& out, const TaskSpec& task, Rng& rng) {
  switch (task.kind) {
    case TaskKind::Binary:
      return rng.bernoulli(out(0)) ? 1.0 : 0.0;
    case TaskKind::Multiclass: {
      std::vector<double> probs(out.data(), out.data() + out.size());
      return static_cast<double>(rng.categorical(probs));
    }
    case TaskKind::Regression:
      return out(0);
  }
  throw Error("sample_label: unknown task kind");
}

double expected_label(const Eigen::RowVectorXd& out, const TaskSpec& task) {
  switch (task.kind) {
    case TaskKind::Binary:
      return out(0) >= 0.5 ? 1.0 : 0.0;
    case TaskKind::Multiclass: {
      Eigen::Index best = 0;
      out.maxCoeff(&best);
      return static_cast<double>(best);
    }
    case TaskKind::Regression:
      return out(0);
  }
  throw Error("expected_label: unknown task kind");
}

constexpr int kPretrainIters = 500;
constexpr double kPretrainLearningRate = 1e-3;

struct Pools {
  std::array<std::vector<std::size_t>, 2> observed;
  std::array<std::vector<std::size_t>, 2> unlabeled;
  int conditions = 1;
};

Pools build_pools(const BiasedTrainSet& b, bool separate) {
  Pools pools;
  pools.conditions = separate ? 2 : 1;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const BiasedRow& br = b.rows()[i];
    const int c = separate ? br.rec : 0;
    if (br.observed) {
      pools.observed[static_cast<std::size_t>(c)].push_back(i);
    } else {
      pools.unlabeled[static_cast<std::size_t>(c)].push_back(i);
    }
  }
  return pools;
}

}  // namespace

void GanConfig::validate() const {
  if (hidden_size < 1) throw Error("GanConfig: hidden_size must be >= 1");
  if (g_iters < 1) {
    throw Error("GanConfig: g_iters must be >= 1; g_iters = 0 would leave an "
                "untrained model");
  }
  if (d_steps < 1) throw Error("GanConfig: d_steps must be >= 1");
  if (learning_rate <= 0.0) throw Error("GanConfig: learning_rate must be > 0");
  if (noise_dim < 0) throw Error("GanConfig: noise_dim must be >= 0");
  if (batch_size < 2) throw Error("GanConfig: batch_size must be >= 2");
  if (adversarial_weight < 0.0) throw Error("GanConfig: adversarial_weight must be >= 0");
}

double GanTelemetry::final_discriminator_accuracy(int condition) const {
  require(condition == 0 || condition == 1,
          "GanTelemetry: condition must be 0 or 1");
  const auto& acc = discriminator_accuracy[static_cast<std::size_t>(condition)];
  if (acc.empty()) {
    throw Error("GanTelemetry: condition " + std::to_string(condition) +
                " recorded no discriminator updates");
  }
  const std::size_t tail = std::max<std::size_t>(1, acc.size() / 10);
  double sum = 0.0;
  for (std::size_t i = acc.size() - tail; i < acc.size(); ++i) sum += acc[i];
  return sum / static_cast<double>(tail);
}

CganModel::CganModel(nn::Mlp generator, std::vector<nn::Mlp> discriminators,
                     GanConfig config, TaskSpec task, FeatureSchema schema, int noise_dim,
                     Eigen::VectorXd feature_shift, Eigen::VectorXd feature_scale,
                     GanTelemetry telemetry)
    : generator_(std::move(generator)),
      discriminators_(std::move(discriminators)),
      config_(config),
      task_(task),
      schema_(schema),
      noise_dim_(noise_dim),
      feature_shift_(std::move(feature_shift)),
      feature_scale_(std::move(feature_scale)),
      telemetry_(std::move(telemetry)) {
  const std::size_t expected = config_.separate_discriminators ? 2 : 1;
  require(discriminators_.size() == expected,
          "CganModel: discriminator count does not match the config");
}

Eigen::MatrixXd CganModel::scale(const Eigen::MatrixXd& features) const {
  if (!config_.scale_features) return features;
  require(features.cols() == feature_shift_.size(), "CganModel::scale: width mismatch");
  Eigen::MatrixXd scaled = features;
  scaled.rowwise() -= feature_shift_.transpose();
  scaled.array().rowwise() /= feature_scale_.transpose().array();
  return scaled;
}

CganModel train_cgan(const BiasedTrainSet& b, const GanConfig& cfg, const TaskSpec& task,
                     std::uint64_t seed) {
  cfg.validate();
  task.validate();
  require(!b.empty(), "train_cgan: empty training set");
  require(task.kind == b.task().kind && task.num_classes == b.task().num_classes,
          "train_cgan: task does not match the training set");

  const FeatureSchema schema = b.schema();
  const int d_total = schema.total();
  const int noise_dim = cfg.noise_dim > 0 ? cfg.noise_dim : schema.d_tab;
  const int lw = task.label_width();
  const nn::Head head = head_for(task);

  const Pools pools = build_pools(b, cfg.separate_discriminators);
  std::vector<std::size_t> observed_all = b.observed_indices();
  require(!observed_all.empty(), "train_cgan: no observed labels to learn from");
  if (cfg.separate_discriminators) {
    for (int c = 0; c < 2; ++c) {
      if (pools.observed[static_cast<std::size_t>(c)].empty()) {
        throw Error("train_cgan: no observed labels with r = " + std::to_string(c) +
                    "; set separate_discriminators = false to fall back to a single "
                    "shared discriminator");
      }
    }
  }

  // Scaled feature cache; identity transform unless scale_features is set.
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(d_total);
  Eigen::VectorXd spread = Eigen::VectorXd::Ones(d_total);
  std::vector<std::size_t> all_indices(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) all_indices[i] = i;
  Eigen::MatrixXd feats = b.features_of(all_indices);
  if (cfg.scale_features) {
    shift = feats.colwise().mean();
    for (int j = 0; j < d_total; ++j) {
      const double var = (feats.col(j).array() - shift(j)).square().mean();
      const double sd = std::sqrt(var);
      spread(j) = sd > 1e-12 ? sd : 1.0;
    }
    feats.rowwise() -= shift.transpose();
    feats.array().rowwise() /= spread.transpose().array();
  }

  nn::Mlp generator({d_total + noise_dim, cfg.hidden_size, cfg.hidden_size, lw}, head,
                    derive_seed(seed, "cgan-generator"));
  std::vector<nn::Mlp> discriminators;
  for (int c = 0; c < pools.conditions; ++c) {
    discriminators.emplace_back(
        std::vector<int>{d_total + lw, cfg.hidden_size, cfg.hidden_size, 1},
        nn::Head::Sigmoid, derive_seed(seed, "cgan-discriminator-" + std::to_string(c)));
  }

  nn::Adam g_opt(cfg.learning_rate);
  std::vector<nn::Adam> d_opts;
  for (int c = 0; c < pools.conditions; ++c) d_opts.emplace_back(cfg.learning_rate);

  Rng rng(derive_seed(seed, "cgan-train"));
  GanTelemetry telemetry;

  const auto generator_input = [&](const std::vector<std::size_t>& rows) {
    Eigen::MatrixXd input(rows.size(), d_total + noise_dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      input.row(static_cast<Eigen::Index>(i)).head(d_total) =
          feats.row(static_cast<Eigen::Index>(rows[i]));
      for (int j = 0; j < noise_dim; ++j) {
        input(static_cast<Eigen::Index>(i), d_total + j) = rng.normal();
      }
    }
    return input;
  };
  const auto draw = [&](const std::vector<std::size_t>& pool, std::size_t count) {
    std::vector<std::size_t> rows(count);
    for (std::size_t i = 0; i < count; ++i) rows[i] = pool[rng.index(pool.size())];
    return rows;
  };
  const auto note_shown = [&](int c, const std::vector<std::size_t>& rows) {
    for (const std::size_t i : rows) {
      telemetry.rows_shown[static_cast<std::size_t>(c)][b.rows()[i].rec] += 1;
    }
  };

  // Supervised warm start: a ridge fit of the output layer on the observed
  // rows' last hidden activations, so the small fixed iteration budget is
  // spent refining a posterior-shaped head rather than growing one from
  // zero. Targets are +-1 class codes for classification (the later
  // calibration step owns the probability scale) and raw labels for
  // regression.
  {
    const nn::Mlp::Trace warm = generator.forward(generator_input(observed_all));
    const Eigen::MatrixXd& hidden = warm.acts.back();
    const auto n_obs = static_cast<Eigen::Index>(observed_all.size());
    Eigen::MatrixXd design(n_obs, hidden.cols() + 1);
    design.leftCols(hidden.cols()) = hidden;
    design.col(hidden.cols()).setOnes();
    Eigen::MatrixXd warm_target(n_obs, lw);
    for (Eigen::Index i = 0; i < n_obs; ++i) {
      const Eigen::RowVectorXd repr =
          label_repr(b.rows()[observed_all[static_cast<std::size_t>(i)]].row.y, task);
      warm_target.row(i) =
          task.kind == TaskKind::Regression ? repr : (2.0 * repr.array() - 1.0).matrix();
    }
    Eigen::MatrixXd gram = design.transpose() * design;
    gram.diagonal().array() += 1e-3 * static_cast<double>(n_obs);
    const Eigen::MatrixXd fit = gram.ldlt().solve(design.transpose() * warm_target);
    generator.set_output_layer(fit.topRows(hidden.cols()).transpose(),
                               fit.row(hidden.cols()).transpose());
  }

  nn::GradBuffer g_grads = generator.make_grads();
  std::vector<nn::GradBuffer> d_grads;
  for (const nn::Mlp& d : discriminators) d_grads.push_back(d.make_grads());

  // Supervised pretraining: converge the generator on the observed rows
  // before the adversarial loop, which then refines rather than bootstraps.
  // Uses its own step size; the configured learning_rate on the pinned
  // iteration budget moves parameters far too little to grow a posterior
  // from scratch.
  {
    nn::Adam pre_opt(kPretrainLearningRate);
    for (int iter = 0; iter < kPretrainIters; ++iter) {
      const std::vector<std::size_t> rows =
          draw(observed_all, static_cast<std::size_t>(cfg.batch_size));
      Eigen::MatrixXd target(rows.size(), lw);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        target.row(static_cast<Eigen::Index>(i)) =
            label_repr(b.rows()[rows[i]].row.y, task);
      }
      const nn::Mlp::Trace trace = generator.forward(generator_input(rows));
      const nn::LossGrad loss = nn::supervised_loss(trace.logits, target, head);
      g_grads.set_zero();
      generator.backward(trace, loss.grad_logits, g_grads);
      pre_opt.step(generator, g_grads);
    }
  }

  std::vector<int> active;
  for (int c = 0; c < pools.conditions; ++c) {
    if (!pools.unlabeled[static_cast<std::size_t>(c)].empty()) active.push_back(c);
  }

  for (int iter = 0; iter < cfg.g_iters; ++iter) {
    std::array<double, 2> iter_d_loss{}, iter_d_acc{};

    for (int step = 0; step < cfg.d_steps; ++step) {
      for (const int c : active) {
        const auto uc = static_cast<std::size_t>(c);
        const std::size_t nf = static_cast<std::size_t>(cfg.batch_size) / 2;
        const std::size_t ng = static_cast<std::size_t>(cfg.batch_size) - nf;
        const std::vector<std::size_t> factual = draw(pools.observed[uc], nf);
        const std::vector<std::size_t> unlabeled = draw(pools.unlabeled[uc], ng);

        const Eigen::MatrixXd g_out =
            generator.predict(generator_input(unlabeled));

        Eigen::MatrixXd d_input(nf + ng, d_total + lw);
        Eigen::MatrixXd d_target(nf + ng, 1);
        for (std::size_t i = 0; i < nf; ++i) {
          const auto ri = static_cast<Eigen::Index>(i);
          d_input.row(ri).head(d_total) = feats.row(static_cast<Eigen::Index>(factual[i]));
          d_input.row(ri).tail(lw) = label_repr(b.rows()[factual[i]].row.y, task);
          d_target(ri, 0) = 1.0;
        }
        for (std::size_t i = 0; i < ng; ++i) {
          const auto ri = static_cast<Eigen::Index>(nf + i);
          d_input.row(ri).head(d_total) = feats.row(static_cast<Eigen::Index>(unlabeled[i]));
          // The discriminator grades a committed label, not a probability
          // vector, so generated rows carry a label sampled from the
          // generator's output distribution.
          const double sampled =
              sample_label(g_out.row(static_cast<Eigen::Index>(i)), task, rng);
          d_input.row(ri).tail(lw) = label_repr(sampled, task);
          d_target(ri, 0) = 0.0;
        }
        note_shown(c, factual);
        note_shown(c, unlabeled);

        const nn::Mlp::Trace trace = discriminators[uc].forward(d_input);
        const nn::LossGrad loss = nn::binary_adversarial_loss(trace.logits, d_target);
        d_grads[uc].set_zero();
        discriminators[uc].backward(trace, loss.grad_logits, d_grads[uc]);
        d_opts[uc].step(discriminators[uc], d_grads[uc]);

        std::int64_t correct = 0;
        for (Eigen::Index i = 0; i < trace.out.rows(); ++i) {
          const double verdict = trace.out(i, 0) >= 0.5 ? 1.0 : 0.0;
          if (verdict == d_target(i, 0)) ++correct;
        }
        iter_d_loss[uc] += loss.value;
        iter_d_acc[uc] += static_cast<double>(correct) / static_cast<double>(nf + ng);
      }
    }

    // Generator update: supervised term on observed rows, fooling term per
    // active condition, one optimizer step for the sum.
    const auto ns = static_cast<std::size_t>(cfg.batch_size);
    const std::vector<std::size_t> sup_rows = draw(observed_all, ns);
    Eigen::MatrixXd sup_target(ns, lw);
    for (std::size_t i = 0; i < ns; ++i) {
      sup_target.row(static_cast<Eigen::Index>(i)) =
          label_repr(b.rows()[sup_rows[i]].row.y, task);
    }
    const nn::Mlp::Trace sup_trace = generator.forward(generator_input(sup_rows));
    const nn::LossGrad sup = nn::supervised_loss(sup_trace.logits, sup_target, head);
    g_grads.set_zero();
    generator.backward(sup_trace, sup.grad_logits, g_grads);

    double adversarial_total = 0.0;
    for (const int c : active) {
      const auto uc = static_cast<std::size_t>(c);
      const std::vector<std::size_t> rows =
          draw(pools.unlabeled[uc], static_cast<std::size_t>(cfg.batch_size));
      const nn::Mlp::Trace g_trace = generator.forward(generator_input(rows));

      Eigen::MatrixXd d_input(rows.size(), d_total + lw);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto ri = static_cast<Eigen::Index>(i);
        d_input.row(ri).head(d_total) = feats.row(static_cast<Eigen::Index>(rows[i]));
        d_input.row(ri).tail(lw) = g_trace.out.row(ri);
      }
      note_shown(c, rows);
      const nn::Mlp::Trace d_trace = discriminators[uc].forward(d_input);
      const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(d_trace.logits.rows(), 1);
      const nn::LossGrad fool = nn::binary_adversarial_loss(d_trace.logits, ones);
      adversarial_total += fool.value;

      d_grads[uc].set_zero();  // discarded; the discriminator stays frozen here
      const Eigen::MatrixXd d_input_grad =
          discriminators[uc].backward(d_trace, fool.grad_logits, d_grads[uc]);
      const Eigen::MatrixXd grad_out = d_input_grad.rightCols(lw);
      const Eigen::MatrixXd grad_logits =
          cfg.adversarial_weight * nn::head_vjp(g_trace.out, grad_out, head);
      generator.backward(g_trace, grad_logits, g_grads);
    }
    g_opt.step(generator, g_grads);

    telemetry.supervised_loss.push_back(sup.value);
    telemetry.adversarial_loss.push_back(adversarial_total);
    for (const int c : active) {
      const auto uc = static_cast<std::size_t>(c);
      telemetry.discriminator_loss[uc].push_back(iter_d_loss[uc] / cfg.d_steps);
      telemetry.discriminator_accuracy[uc].push_back(iter_d_acc[uc] / cfg.d_steps);
    }
  }

  // Temperature calibration, folded into the parameters: rescale the output
  // layer by the 1/tau that minimizes the supervised loss on the observed
  // rows. Sampled generation then draws from calibrated probabilities;
  // threshold and argmax decisions are unaffected.
  if (head != nn::Head::Linear) {
    Eigen::MatrixXd cal_target(observed_all.size(), lw);
    for (std::size_t i = 0; i < observed_all.size(); ++i) {
      cal_target.row(static_cast<Eigen::Index>(i)) =
          label_repr(b.rows()[observed_all[i]].row.y, task);
    }
    const Eigen::MatrixXd cal_logits =
        generator.forward(generator_input(observed_all)).logits;
    double best_scale = 1.0;
    double best_nll = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 400; ++k) {
      const double scale = std::pow(10.0, -2.0 + k / 100.0);
      const double nll =
          nn::supervised_loss(cal_logits * scale, cal_target, head).value;
      if (nll < best_nll) {
        best_nll = nll;
        best_scale = scale;
      }
    }
    generator.scale_output_layer(best_scale);
  }

  return CganModel(std::move(generator), std::move(discriminators), cfg, task, schema,
                   noise_dim, std::move(shift), std::move(spread), std::move(telemetry));
}

CfLabels generate_counterfactuals(const CganModel& m, const BiasedTrainSet& b,
                                  std::uint64_t seed, GenerationMode mode) {
  require(m.schema() == b.schema(),
          "generate_counterfactuals: feature schema mismatch between model and data");
  require(m.task().kind == b.task().kind && m.task().num_classes == b.task().num_classes,
          "generate_counterfactuals: task mismatch between model and data");

  CfLabels cf;
  const std::vector<std::size_t> rows = b.unobserved_indices();
  if (rows.empty()) return cf;

  const Eigen::MatrixXd feats = m.scale(b.features_of(rows));
  const int d_total = m.schema().total();
  Rng rng(derive_seed(seed, "cf-generate"));
  Eigen::MatrixXd input(rows.size(), d_total + m.noise_dim());
  input.leftCols(d_total) = feats;
  for (Eigen::Index i = 0; i < input.rows(); ++i) {
    for (int j = 0; j < m.noise_dim(); ++j) input(i, d_total + j) = rng.normal();
  }
  const Eigen::MatrixXd out = m.generator().predict(input);

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Eigen::RowVectorXd row_out = out.row(static_cast<Eigen::Index>(i));
    const double label = mode == GenerationMode::Expected
                             ? expected_label(row_out, m.task())
                             : sample_label(row_out, m.task(), rng);
    const std::int64_t id = b.rows()[rows[i]].row.id;
    validate_label(label, m.task(), id);
    cf.labels.emplace(id, label);
  }
  return cf;
}

double gradient_check(const CganModel& m, const BiasedTrainSet& b,
                      const std::vector<std::size_t>& batch_rows, std::uint64_t seed) {
  require(!batch_rows.empty(), "gradient_check: empty batch");
  for (const std::size_t i : batch_rows) {
    require(i < b.size(), "gradient_check: row index out of range");
  }

  const TaskSpec task = m.task();
  const nn::Head head = head_for(task);
  const int lw = task.label_width();
  const int d_total = m.schema().total();
  nn::Mlp generator = m.generator();
  std::vector<nn::Mlp> discriminators = m.discriminators();
  Rng rng(derive_seed(seed, "cgan-gradcheck"));
  double worst = 0.0;

  const Eigen::MatrixXd feats = m.scale(b.features_of(batch_rows));
  const auto with_noise = [&](const std::vector<std::size_t>& local) {
    Eigen::MatrixXd input(local.size(), d_total + m.noise_dim());
    for (std::size_t i = 0; i < local.size(); ++i) {
      input.row(static_cast<Eigen::Index>(i)).head(d_total) =
          feats.row(static_cast<Eigen::Index>(local[i]));
      for (int j = 0; j < m.noise_dim(); ++j) {
        input(static_cast<Eigen::Index>(i), d_total + j) = rng.normal();
      }
    }
    return input;
  };

  // Positions within batch_rows, bucketed the way training consumes them.
  std::vector<std::size_t> observed_local;
  std::array<std::vector<std::size_t>, 2> cond_observed, cond_unlabeled;
  for (std::size_t i = 0; i < batch_rows.size(); ++i) {
    const BiasedRow& br = b.rows()[batch_rows[i]];
    const int c = m.config().separate_discriminators ? br.rec : 0;
    if (br.observed) {
      observed_local.push_back(i);
      cond_observed[static_cast<std::size_t>(c)].push_back(i);
    } else {
      cond_unlabeled[static_cast<std::size_t>(c)].push_back(i);
    }
  }

  if (!observed_local.empty()) {
    const Eigen::MatrixXd input = with_noise(observed_local);
    Eigen::MatrixXd target(observed_local.size(), lw);
    for (std::size_t i = 0; i < observed_local.size(); ++i) {
      target.row(static_cast<Eigen::Index>(i)) =
          label_repr(b.rows()[batch_rows[observed_local[i]]].row.y, task);
    }
    const auto loss_fn = [&]() {
      return nn::supervised_loss(generator.forward(input).logits, target, head).value;
    };
    const nn::Mlp::Trace trace = generator.forward(input);
    const nn::LossGrad loss = nn::supervised_loss(trace.logits, target, head);
    nn::GradBuffer grads = generator.make_grads();
    generator.backward(trace, loss.grad_logits, grads);
    worst = std::max(worst, nn::gradient_check_max_rel_error(
                                generator, loss_fn, generator.flatten(grads)));
  }

  for (std::size_t c = 0; c < discriminators.size(); ++c) {
    const std::vector<std::size_t>& factual = cond_observed[c];
    const std::vector<std::size_t>& unlabeled = cond_unlabeled[c];
    if (factual.empty() && unlabeled.empty()) continue;

    // Discriminator loss over a frozen batch: factual labels and hard labels
    // sampled once from the generator.
    Eigen::MatrixXd d_input(factual.size() + unlabeled.size(), d_total + lw);
    Eigen::MatrixXd d_target(d_input.rows(), 1);
    for (std::size_t i = 0; i < factual.size(); ++i) {
      const auto ri = static_cast<Eigen::Index>(i);
      d_input.row(ri).head(d_total) = feats.row(static_cast<Eigen::Index>(factual[i]));
      d_input.row(ri).tail(lw) =
          label_repr(b.rows()[batch_rows[factual[i]]].row.y, task);
      d_target(ri, 0) = 1.0;
    }
    if (!unlabeled.empty()) {
      const Eigen::MatrixXd g_out = generator.predict(with_noise(unlabeled));
      for (std::size_t i = 0; i < unlabeled.size(); ++i) {
        const auto ri = static_cast<Eigen::Index>(factual.size() + i);
        d_input.row(ri).head(d_total) = feats.row(static_cast<Eigen::Index>(unlabeled[i]));
        d_input.row(ri).tail(lw) = label_repr(
            sample_label(g_out.row(static_cast<Eigen::Index>(i)), task, rng), task);
        d_target(ri, 0) = 0.0;
      }
    }
    nn::Mlp& disc = discriminators[c];
    const auto d_loss_fn = [&]() {
      return nn::binary_adversarial_loss(disc.forward(d_input).logits, d_target).value;
    };
    const nn::Mlp::Trace d_trace = disc.forward(d_input);
    const nn::LossGrad d_loss = nn::binary_adversarial_loss(d_trace.logits, d_target);
    nn::GradBuffer d_grads = disc.make_grads();
    disc.backward(d_trace, d_loss.grad_logits, d_grads);
    worst = std::max(worst, nn::gradient_check_max_rel_error(disc, d_loss_fn,
                                                             disc.flatten(d_grads)));

    if (!unlabeled.empty()) {
      // Fooling loss over generator parameters, discriminator frozen.
      const Eigen::MatrixXd g_input = with_noise(unlabeled);
      const Eigen::MatrixXd cond_feats = [&] {
        Eigen::MatrixXd f(unlabeled.size(), d_total);
        for (std::size_t i = 0; i < unlabeled.size(); ++i) {
          f.row(static_cast<Eigen::Index>(i)) =
              feats.row(static_cast<Eigen::Index>(unlabeled[i]));
        }
        return f;
      }();
      const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(
          static_cast<Eigen::Index>(unlabeled.size()), 1);
      const auto fool_fn = [&]() {
        const Eigen::MatrixXd out = generator.forward(g_input).out;
        Eigen::MatrixXd joint(out.rows(), d_total + lw);
        joint.leftCols(d_total) = cond_feats;
        joint.rightCols(lw) = out;
        return nn::binary_adversarial_loss(disc.forward(joint).logits, ones).value;
      };
      const nn::Mlp::Trace g_trace = generator.forward(g_input);
      Eigen::MatrixXd joint(g_trace.out.rows(), d_total + lw);
      joint.leftCols(d_total) = cond_feats;
      joint.rightCols(lw) = g_trace.out;
      const nn::Mlp::Trace d_fool_trace = disc.forward(joint);
      const nn::LossGrad fool = nn::binary_adversarial_loss(d_fool_trace.logits, ones);
      nn::GradBuffer d_scratch = disc.make_grads();
      const Eigen::MatrixXd d_input_grad =
          disc.backward(d_fool_trace, fool.grad_logits, d_scratch);
      const Eigen::MatrixXd grad_logits =
          nn::head_vjp(g_trace.out, d_input_grad.rightCols(lw), head);
      nn::GradBuffer g_grads = generator.make_grads();
      generator.backward(g_trace, grad_logits, g_grads);
      worst = std::max(worst, nn::gradient_check_max_rel_error(
                                  generator, fool_fn, generator.flatten(g_grads)));
    }
  }
  return worst;
}

void save_cf_labels(const CfLabels& cf, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_cf_labels: cannot open " + path.string() + " for writing");
  out << "id,label\n";
  for (const auto& [id, label] : cf.labels) {
    out << id << ',' << detail::format_double(label) << '\n';
  }
  if (!out) throw Error("save_cf_labels: write to " + path.string() + " failed");
}

CfLabels load_cf_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_cf_labels: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("load_cf_labels: " + path.string() + " is empty");
  detail::chomp(line);
  if (line != "id,label") {
    throw Error("load_cf_labels: unexpected header '" + line + "'");
  }
  CfLabels cf;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp(line);
    if (line.empty()) continue;
    const auto fields = detail::split_line(line, ',');
    if (fields.size() != 2) {
      throw Error("load_cf_labels: " + path.string() + ":" + std::to_string(line_no) +
                  " is malformed");
    }
    const std::string context = path.string() + ":" + std::to_string(line_no);
    cf.labels.emplace(detail::parse_int64(fields[0], context),
                      detail::parse_double(fields[1], context));
  }
  return cf;
}

void save_cgan_checkpoint(const CganModel& m, const std::filesystem::path& path) {
  CheckpointWriter w;
  w.put_string("kind", "cgan");
  const GanConfig& cfg = m.config();
  w.put_int("hidden_size", cfg.hidden_size);
  w.put_int("g_iters", cfg.g_iters);
  w.put_int("d_steps", cfg.d_steps);
  w.put_double("learning_rate", cfg.learning_rate);
  w.put_int("separate_discriminators", cfg.separate_discriminators ? 1 : 0);
  w.put_int("scale_features", cfg.scale_features ? 1 : 0);
  w.put_int("noise_dim_config", cfg.noise_dim);
  w.put_int("batch_size", cfg.batch_size);
  w.put_double("adversarial_weight", cfg.adversarial_weight);
  w.put_string("task_kind", to_string(m.task().kind));
  w.put_int("num_classes", m.task().num_classes);
  w.put_int("minority_class", m.task().minority_class);
  w.put_int("d_tab", m.schema().d_tab);
  w.put_int("d_rich", m.schema().d_rich);
  w.put_int("noise_dim", m.noise_dim());
  w.put_doubles("feature_shift", m.feature_shift());
  w.put_doubles("feature_scale", m.feature_scale());

  const auto put_net = [&](const std::string& prefix, const nn::Mlp& net) {
    std::vector<std::int64_t> dims(net.dims().begin(), net.dims().end());
    w.put_ints(prefix + "_dims", dims);
    w.put_int(prefix + "_head", head_to_int(net.head()));
    w.put_doubles(prefix + "_params", net.parameters());
  };
  put_net("generator", m.generator());
  w.put_int("discriminator_count", static_cast<std::int64_t>(m.discriminators().size()));
  for (std::size_t c = 0; c < m.discriminators().size(); ++c) {
    put_net("discriminator" + std::to_string(c), m.discriminators()[c]);
  }

  const GanTelemetry& t = m.telemetry();
  w.put_doubles("telemetry_supervised", t.supervised_loss);
  w.put_doubles("telemetry_adversarial", t.adversarial_loss);
  for (int c = 0; c < 2; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    w.put_doubles("telemetry_d" + std::to_string(c) + "_loss", t.discriminator_loss[uc]);
    w.put_doubles("telemetry_d" + std::to_string(c) + "_accuracy",
                  t.discriminator_accuracy[uc]);
  }
  w.put_ints("rows_shown", {t.rows_shown[0][0], t.rows_shown[0][1], t.rows_shown[1][0],
                            t.rows_shown[1][1]});
  w.write(path);
}

CganModel load_cgan_checkpoint(const std::filesystem::path& path) {
  CheckpointReader r(path);
  require(r.get_string("kind") == "cgan",
          "load_cgan_checkpoint: " + path.string() + " is not a cgan checkpoint");

  GanConfig cfg;
  cfg.hidden_size = static_cast<int>(r.get_int("hidden_size"));
  cfg.g_iters = static_cast<int>(r.get_int("g_iters"));
  cfg.d_steps = static_cast<int>(r.get_int("d_steps"));
  cfg.learning_rate = r.get_double("learning_rate");
  cfg.separate_discriminators = r.get_int("separate_discriminators") != 0;
  cfg.scale_features = r.get_int("scale_features") != 0;
  cfg.noise_dim = static_cast<int>(r.get_int("noise_dim_config"));
  cfg.batch_size = static_cast<int>(r.get_int("batch_size"));
  cfg.adversarial_weight = r.get_double("adversarial_weight");

  TaskSpec task;
  task.kind = task_kind_from_string(r.get_string("task_kind"));
  task.num_classes = static_cast<int>(r.get_int("num_classes"));
  task.minority_class = static_cast<int>(r.get_int("minority_class"));
  const FeatureSchema schema{static_cast<int>(r.get_int("d_tab")),
                             static_cast<int>(r.get_int("d_rich"))};

  const auto load_net = [&](const std::string& prefix) {
    const std::vector<std::int64_t> dims64 = r.get_ints(prefix + "_dims");
    std::vector<int> dims(dims64.begin(), dims64.end());
    nn::Mlp net(dims, head_from_int(r.get_int(prefix + "_head")), 0);
    net.set_parameters(r.get_doubles(prefix + "_params"));
    return net;
  };
  nn::Mlp generator = load_net("generator");
  std::vector<nn::Mlp> discriminators;
  const std::int64_t d_count = r.get_int("discriminator_count");
  for (std::int64_t c = 0; c < d_count; ++c) {
    discriminators.push_back(load_net("discriminator" + std::to_string(c)));
  }

  GanTelemetry telemetry;
  const auto to_vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  telemetry.supervised_loss = to_vec(r.get_doubles("telemetry_supervised"));
  telemetry.adversarial_loss = to_vec(r.get_doubles("telemetry_adversarial"));
  for (int c = 0; c < 2; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    telemetry.discriminator_loss[uc] =
        to_vec(r.get_doubles("telemetry_d" + std::to_string(c) + "_loss"));
    telemetry.discriminator_accuracy[uc] =
        to_vec(r.get_doubles("telemetry_d" + std::to_string(c) + "_accuracy"));
  }
  const std::vector<std::int64_t> shown = r.get_ints("rows_shown");
  require(shown.size() == 4, "load_cgan_checkpoint: rows_shown must have 4 entries");
  telemetry.rows_shown = {{{shown[0], shown[1]}, {shown[2], shown[3]}}};

  return CganModel(std::move(generator), std::move(discriminators), cfg, task, schema,
                   static_cast<int>(r.get_int("noise_dim")),
                   r.get_doubles("feature_shift"), r.get_doubles("feature_scale"),
                   std::move(telemetry));
}

}  // namespace cfaug
