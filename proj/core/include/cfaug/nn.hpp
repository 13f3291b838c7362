#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "cfaug/error.hpp"

namespace cfaug::nn {

enum class Head { Sigmoid, Softmax, Linear, Tanh };

// Parameter gradients shaped like an Mlp's weights and biases.
struct GradBuffer {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;

  void set_zero();
  // this += coeff * other
  void axpy(double coeff, const GradBuffer& other);
};

// Dense network with tanh hidden activations and a raw-logit final layer;
// the head is applied separately so losses can work on logits. Hidden
// layers get scaled normal init; the final layer starts at zero, which keeps
// initial outputs at the head's neutral point and leaves gradients defined
// even for degenerate all-zero inputs.
class Mlp {
 public:
  struct Trace {
    std::vector<Eigen::MatrixXd> acts;  // acts[0] = input; acts[l] = input to layer l
    Eigen::MatrixXd logits;
    Eigen::MatrixXd out;  // head(logits)
  };

  Mlp() = default;
  // dims = {input, hidden..., output}; needs at least {input, output}.
  // zero_init_output keeps the final layer at the head's neutral point.
  // Representation trunks feeding other networks turn it off, since a
  // zero-initialized trunk output in front of a zero-initialized consumer
  // leaves both without a gradient path.
  Mlp(std::vector<int> dims, Head head, std::uint64_t seed, bool zero_init_output = true);

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  Head head() const { return head_; }
  const std::vector<int>& dims() const { return dims_; }

  Trace forward(const Eigen::MatrixXd& batch) const;
  Eigen::MatrixXd predict(const Eigen::MatrixXd& batch) const;

  // Backpropagates dLoss/dLogits, accumulating parameter gradients into
  // grads; returns dLoss/dInput so networks can be chained.
  Eigen::MatrixXd backward(const Trace& trace, const Eigen::MatrixXd& grad_logits,
                           GradBuffer& grads) const;

  GradBuffer make_grads() const;

  std::size_t parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);
  Eigen::VectorXd flatten(const GradBuffer& grads) const;

  // Overrides the final-layer bias, e.g. to start a classifier at the
  // training prior instead of the head's neutral point.
  void set_output_bias(const Eigen::VectorXd& bias);

  // Multiplies the final layer's weights and bias by factor. For sigmoid and
  // softmax heads this is temperature scaling folded into the parameters:
  // probabilities sharpen or soften while threshold/argmax decisions keep
  // their outcome.
  void scale_output_layer(double factor);

  // Replaces the final layer, e.g. with a closed-form fit on the last hidden
  // activations.
  void set_output_layer(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias);

 private:
  std::vector<int> dims_;
  Head head_ = Head::Linear;
  std::vector<Eigen::MatrixXd> w_;  // w_[l]: dims_[l+1] x dims_[l]
  std::vector<Eigen::VectorXd> b_;
};

Eigen::MatrixXd apply_head(const Eigen::MatrixXd& logits, Head head);

// dLoss/dLogits given dLoss/dOut, where out = apply_head(logits, head).
Eigen::MatrixXd head_vjp(const Eigen::MatrixXd& out, const Eigen::MatrixXd& grad_out,
                         Head head);

struct LossGrad {
  double value = 0.0;
  Eigen::MatrixXd grad_logits;
};

// Mean per-row loss matched to the head: binary cross-entropy from logits
// (Sigmoid, one target column), softmax cross-entropy (Softmax, one-hot
// target), or squared error (Linear). Optional row_weights multiply each
// row's term while the normalizer stays 1/n, so unit weights reduce exactly
// to the unweighted loss.
LossGrad supervised_loss(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& target,
                         Head head, const Eigen::VectorXd* row_weights = nullptr);

// Binary cross-entropy of sigmoid(logits) against targets in [0,1]; used for
// discriminator real/fake training where targets are probabilities.
LossGrad binary_adversarial_loss(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& target);

Eigen::MatrixXd one_hot(const Eigen::VectorXd& labels, int classes);

class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);
  void step(Mlp& net, const GradBuffer& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  std::vector<Eigen::MatrixXd> mw_, vw_;
  std::vector<Eigen::VectorXd> mb_, vb_;
};

// Central-difference check over every parameter of net. loss_fn evaluates
// the scalar loss at the net's current parameters; analytic is the flattened
// analytic gradient. Returns max_i |fd_i - analytic_i| / max(1, |fd_i|,
// |analytic_i|). The net's parameters are restored afterwards.
double gradient_check_max_rel_error(Mlp& net, const std::function<double()>& loss_fn,
                                    const Eigen::VectorXd& analytic, double step = 1e-5);

}  // namespace cfaug::nn
