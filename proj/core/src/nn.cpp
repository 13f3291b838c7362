#include "cfaug/nn.hpp"

#include <algorithm>
#include <cmath>

#include "cfaug/rng.hpp"

namespace cfaug::nn {

namespace {

double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

void GradBuffer::set_zero() {
  for (auto& m : dw) m.setZero();
  for (auto& v : db) v.setZero();
}

void GradBuffer::axpy(double coeff, const GradBuffer& other) {
  require(dw.size() == other.dw.size(), "GradBuffer::axpy: layer count mismatch");
  for (std::size_t l = 0; l < dw.size(); ++l) {
    dw[l] += coeff * other.dw[l];
    db[l] += coeff * other.db[l];
  }
}

Mlp::Mlp(std::vector<int> dims, Head head, std::uint64_t seed, bool zero_init_output)
    : dims_(std::move(dims)), head_(head) {
  require(dims_.size() >= 2, "Mlp: need at least input and output dims");
  for (const int d : dims_) require(d >= 1, "Mlp: every layer width must be >= 1");

  Rng rng(seed);
  const std::size_t layers = dims_.size() - 1;
  w_.resize(layers);
  b_.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    w_[l].resize(dims_[l + 1], dims_[l]);
    b_[l] = Eigen::VectorXd::Zero(dims_[l + 1]);
    if (l + 1 == layers && zero_init_output) {
      w_[l].setZero();
    } else {
      const double scale = std::sqrt(1.0 / static_cast<double>(dims_[l]));
      for (int i = 0; i < w_[l].rows(); ++i) {
        for (int j = 0; j < w_[l].cols(); ++j) w_[l](i, j) = scale * rng.normal();
      }
    }
  }
}

Mlp::Trace Mlp::forward(const Eigen::MatrixXd& batch) const {
  require(batch.cols() == input_dim(), "Mlp::forward: input width " +
                                           std::to_string(batch.cols()) + " != " +
                                           std::to_string(input_dim()));
  Trace trace;
  trace.acts.reserve(w_.size());
  trace.acts.push_back(batch);
  for (std::size_t l = 0; l + 1 < w_.size(); ++l) {
    Eigen::MatrixXd pre = trace.acts[l] * w_[l].transpose();
    pre.rowwise() += b_[l].transpose();
    trace.acts.push_back(pre.array().tanh().matrix());
  }
  trace.logits = trace.acts.back() * w_.back().transpose();
  trace.logits.rowwise() += b_.back().transpose();
  trace.out = apply_head(trace.logits, head_);
  return trace;
}

Eigen::MatrixXd Mlp::predict(const Eigen::MatrixXd& batch) const {
  return forward(batch).out;
}

Eigen::MatrixXd Mlp::backward(const Trace& trace, const Eigen::MatrixXd& grad_logits,
                              GradBuffer& grads) const {
  require(grads.dw.size() == w_.size(), "Mlp::backward: gradient buffer shape mismatch");
  Eigen::MatrixXd delta = grad_logits;
  for (std::size_t l = w_.size(); l-- > 0;) {
    grads.dw[l] += delta.transpose() * trace.acts[l];
    grads.db[l] += delta.colwise().sum().transpose();
    Eigen::MatrixXd upstream = delta * w_[l];
    if (l == 0) return upstream;
    // tanh'(pre) expressed through the stored activation
    delta = upstream.cwiseProduct(
        (1.0 - trace.acts[l].array().square()).matrix());
  }
  return {};
}

GradBuffer Mlp::make_grads() const {
  GradBuffer g;
  g.dw.reserve(w_.size());
  g.db.reserve(b_.size());
  for (std::size_t l = 0; l < w_.size(); ++l) {
    g.dw.push_back(Eigen::MatrixXd::Zero(w_[l].rows(), w_[l].cols()));
    g.db.push_back(Eigen::VectorXd::Zero(b_[l].size()));
  }
  return g;
}

std::size_t Mlp::parameter_count() const {
  std::size_t count = 0;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    count += static_cast<std::size_t>(w_[l].size()) + static_cast<std::size_t>(b_[l].size());
  }
  return count;
}

Eigen::VectorXd Mlp::parameters() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    flat.segment(at, w_[l].size()) = Eigen::Map<const Eigen::VectorXd>(w_[l].data(), w_[l].size());
    at += w_[l].size();
    flat.segment(at, b_[l].size()) = b_[l];
    at += b_[l].size();
  }
  return flat;
}

void Mlp::set_parameters(const Eigen::VectorXd& flat) {
  require(static_cast<std::size_t>(flat.size()) == parameter_count(),
          "Mlp::set_parameters: length mismatch");
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    Eigen::Map<Eigen::VectorXd>(w_[l].data(), w_[l].size()) = flat.segment(at, w_[l].size());
    at += w_[l].size();
    b_[l] = flat.segment(at, b_[l].size());
    at += b_[l].size();
  }
}

void Mlp::set_output_bias(const Eigen::VectorXd& bias) {
  require(bias.size() == b_.back().size(), "Mlp::set_output_bias: width mismatch");
  require(bias.allFinite(), "Mlp::set_output_bias: bias must be finite");
  b_.back() = bias;
}

void Mlp::scale_output_layer(double factor) {
  require(std::isfinite(factor) && factor > 0.0,
          "Mlp::scale_output_layer: factor must be positive and finite");
  w_.back() *= factor;
  b_.back() *= factor;
}

void Mlp::set_output_layer(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias) {
  require(weights.rows() == w_.back().rows() && weights.cols() == w_.back().cols(),
          "Mlp::set_output_layer: weight shape mismatch");
  require(bias.size() == b_.back().size(), "Mlp::set_output_layer: bias width mismatch");
  require(weights.allFinite() && bias.allFinite(),
          "Mlp::set_output_layer: parameters must be finite");
  w_.back() = weights;
  b_.back() = bias;
}

Eigen::VectorXd Mlp::flatten(const GradBuffer& grads) const {
  require(grads.dw.size() == w_.size(), "Mlp::flatten: gradient buffer shape mismatch");
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    flat.segment(at, grads.dw[l].size()) =
        Eigen::Map<const Eigen::VectorXd>(grads.dw[l].data(), grads.dw[l].size());
    at += grads.dw[l].size();
    flat.segment(at, grads.db[l].size()) = grads.db[l];
    at += grads.db[l].size();
  }
  return flat;
}

Eigen::MatrixXd apply_head(const Eigen::MatrixXd& logits, Head head) {
  switch (head) {
    case Head::Linear:
      return logits;
    case Head::Sigmoid: {
      Eigen::MatrixXd out(logits.rows(), logits.cols());
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        for (Eigen::Index j = 0; j < logits.cols(); ++j) out(i, j) = sigmoid(logits(i, j));
      }
      return out;
    }
    case Head::Softmax: {
      Eigen::MatrixXd out(logits.rows(), logits.cols());
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double zmax = logits.row(i).maxCoeff();
        double denom = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
          out(i, j) = std::exp(logits(i, j) - zmax);
          denom += out(i, j);
        }
        out.row(i) /= denom;
      }
      return out;
    }
    case Head::Tanh:
      return logits.array().tanh().matrix();
  }
  throw Error("apply_head: unknown head");
}

Eigen::MatrixXd head_vjp(const Eigen::MatrixXd& out, const Eigen::MatrixXd& grad_out,
                         Head head) {
  require(out.rows() == grad_out.rows() && out.cols() == grad_out.cols(),
          "head_vjp: shape mismatch");
  switch (head) {
    case Head::Linear:
      return grad_out;
    case Head::Sigmoid:
      return grad_out.cwiseProduct(
          out.cwiseProduct((1.0 - out.array()).matrix()));
    case Head::Softmax: {
      Eigen::MatrixXd grad(out.rows(), out.cols());
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double dot = grad_out.row(i).dot(out.row(i));
        grad.row(i) = out.row(i).cwiseProduct(
            (grad_out.row(i).array() - dot).matrix());
      }
      return grad;
    }
    case Head::Tanh:
      return grad_out.cwiseProduct((1.0 - out.array().square()).matrix());
  }
  throw Error("head_vjp: unknown head");
}

LossGrad supervised_loss(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& target,
                         Head head, const Eigen::VectorXd* row_weights) {
  const Eigen::Index n = logits.rows();
  require(n > 0, "supervised_loss: empty batch");
  require(target.rows() == n, "supervised_loss: target row count mismatch");
  if (row_weights != nullptr) {
    require(row_weights->size() == n, "supervised_loss: weight length mismatch");
  }
  const auto weight = [&](Eigen::Index i) {
    return row_weights != nullptr ? (*row_weights)(i) : 1.0;
  };
  const double inv_n = 1.0 / static_cast<double>(n);

  LossGrad result;
  result.grad_logits.resize(logits.rows(), logits.cols());

  switch (head) {
    case Head::Sigmoid: {
      require(logits.cols() == 1 && target.cols() == 1,
              "supervised_loss: sigmoid head expects one column");
      for (Eigen::Index i = 0; i < n; ++i) {
        const double z = logits(i, 0);
        const double y = target(i, 0);
        const double wi = weight(i);
        result.value += wi * (softplus(z) - y * z);
        result.grad_logits(i, 0) = wi * (sigmoid(z) - y) * inv_n;
      }
      result.value *= inv_n;
      return result;
    }
    case Head::Softmax: {
      require(target.cols() == logits.cols(),
              "supervised_loss: one-hot target width mismatch");
      for (Eigen::Index i = 0; i < n; ++i) {
        const double zmax = logits.row(i).maxCoeff();
        double denom = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
          denom += std::exp(logits(i, j) - zmax);
        }
        const double lse = zmax + std::log(denom);
        const double wi = weight(i);
        double z_true = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
          const double p = std::exp(logits(i, j) - lse);
          result.grad_logits(i, j) = wi * (p - target(i, j)) * inv_n;
          z_true += target(i, j) * logits(i, j);
        }
        result.value += wi * (lse - z_true);
      }
      result.value *= inv_n;
      return result;
    }
    case Head::Linear: {
      require(target.cols() == logits.cols(),
              "supervised_loss: regression target width mismatch");
      for (Eigen::Index i = 0; i < n; ++i) {
        const double wi = weight(i);
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
          const double diff = logits(i, j) - target(i, j);
          result.value += wi * diff * diff;
          result.grad_logits(i, j) = wi * 2.0 * diff * inv_n;
        }
      }
      result.value *= inv_n;
      return result;
    }
    case Head::Tanh:
      break;
  }
  throw Error("supervised_loss: unsupported head");
}

LossGrad binary_adversarial_loss(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& target) {
  require(logits.cols() == 1 && target.cols() == 1,
          "binary_adversarial_loss: expects one column");
  const Eigen::Index n = logits.rows();
  require(n > 0, "binary_adversarial_loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  LossGrad result;
  result.grad_logits.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = logits(i, 0);
    const double y = target(i, 0);
    result.value += softplus(z) - y * z;
    result.grad_logits(i, 0) = (sigmoid(z) - y) * inv_n;
  }
  result.value *= inv_n;
  return result;
}

Eigen::MatrixXd one_hot(const Eigen::VectorXd& labels, int classes) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(labels.size(), classes);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const int k = static_cast<int>(labels(i));
    require(k >= 0 && k < classes && static_cast<double>(k) == labels(i),
            "one_hot: label out of range");
    out(i, k) = 1.0;
  }
  return out;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  require(lr_ > 0.0, "Adam: learning rate must be positive");
}

void Adam::step(Mlp& net, const GradBuffer& grads) {
  if (mw_.empty()) {
    for (const auto& g : grads.dw) mw_.push_back(Eigen::MatrixXd::Zero(g.rows(), g.cols()));
    for (const auto& g : grads.dw) vw_.push_back(Eigen::MatrixXd::Zero(g.rows(), g.cols()));
    for (const auto& g : grads.db) mb_.push_back(Eigen::VectorXd::Zero(g.size()));
    for (const auto& g : grads.db) vb_.push_back(Eigen::VectorXd::Zero(g.size()));
  }
  require(mw_.size() == grads.dw.size(), "Adam::step: gradient shape changed");

  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));

  Eigen::VectorXd params = net.parameters();
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < grads.dw.size(); ++l) {
    mw_[l] = beta1_ * mw_[l] + (1.0 - beta1_) * grads.dw[l];
    vw_[l] = beta2_ * vw_[l] + (1.0 - beta2_) * grads.dw[l].cwiseProduct(grads.dw[l]);
    const Eigen::MatrixXd step_w =
        (mw_[l] / bc1).cwiseQuotient(((vw_[l] / bc2).cwiseSqrt().array() + eps_).matrix());
    params.segment(at, step_w.size()) -=
        lr_ * Eigen::Map<const Eigen::VectorXd>(step_w.data(), step_w.size());
    at += step_w.size();

    mb_[l] = beta1_ * mb_[l] + (1.0 - beta1_) * grads.db[l];
    vb_[l] = beta2_ * vb_[l] + (1.0 - beta2_) * grads.db[l].cwiseProduct(grads.db[l]);
    const Eigen::VectorXd step_b =
        (mb_[l] / bc1).cwiseQuotient(((vb_[l] / bc2).cwiseSqrt().array() + eps_).matrix());
    params.segment(at, step_b.size()) -= lr_ * step_b;
    at += step_b.size();
  }
  net.set_parameters(params);
}

double gradient_check_max_rel_error(Mlp& net, const std::function<double()>& loss_fn,
                                    const Eigen::VectorXd& analytic, double step) {
  const Eigen::VectorXd saved = net.parameters();
  require(analytic.size() == saved.size(),
          "gradient_check_max_rel_error: gradient length mismatch");
  double worst = 0.0;
  Eigen::VectorXd probe = saved;
  for (Eigen::Index i = 0; i < saved.size(); ++i) {
    probe(i) = saved(i) + step;
    net.set_parameters(probe);
    const double up = loss_fn();
    probe(i) = saved(i) - step;
    net.set_parameters(probe);
    const double down = loss_fn();
    probe(i) = saved(i);
    const double fd = (up - down) / (2.0 * step);
    const double denom = std::max({1.0, std::abs(fd), std::abs(analytic(i))});
    worst = std::max(worst, std::abs(fd - analytic(i)) / denom);
  }
  net.set_parameters(saved);
  return worst;
}

}  // namespace cfaug::nn
