#pragma once

// Dense-network numerical core: MLPs with an explicit reverse-mode tape,
// categorical heads, cross-entropy, Adam, and global-norm gradient clipping.
//
// Batched tensors are column-major: one column per sample.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "askac/rng.hpp"

namespace askac::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Tanh, Relu, Identity };

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation hidden_activation = Activation::Tanh;

  std::size_t input_size() const;
  std::size_t output_size() const;
  // {input, hidden..., output}
  std::vector<std::size_t> layer_sizes() const;
  std::size_t parameter_count() const;

  // Throws ConfigError on a broken shape chain, NumericError on non-finite values.
  void validate() const;

  static MlpParams zeros(std::span<const std::size_t> sizes,
                         Activation hidden = Activation::Tanh);
};

// Orthogonal init: hidden layers with gain sqrt(2), last layer with
// `output_gain`; zero biases.
MlpParams init_mlp(std::span<const std::size_t> sizes, double output_gain, Rng& rng,
                   Activation hidden = Activation::Tanh);

// Per-layer inputs recorded by the forward pass; enough for an exact backward pass.
struct MlpTape {
  std::vector<Matrix> activations;  // [0] = input, [L] = output
};

Vector mlp_forward(const MlpParams& params, std::span<const double> input);
Matrix mlp_forward_batch(const MlpParams& params, const Matrix& inputs,
                         MlpTape* tape = nullptr);

struct GradBundle {
  std::vector<DenseLayer> layers;

  static GradBundle zeros_like(const MlpParams& params);
  double global_norm() const;
  bool finite() const;
  void scale(double factor);
  GradBundle& operator+=(const GradBundle& other);
};

// Gradient of sum_j <output_grad_j, output_j> w.r.t. every weight and bias.
GradBundle mlp_backward(const MlpParams& params, const MlpTape& tape,
                        const Matrix& output_grad);

// Probability vector over a finite action set.
struct CategoricalDist {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
};

CategoricalDist softmax(std::span<const double> logits);
Matrix softmax_columns(const Matrix& logits);
Matrix log_softmax_columns(const Matrix& logits);

std::size_t sample_action(const CategoricalDist& dist, Rng& rng);
std::size_t argmax(std::span<const double> values);

// -ln softmax(logits)[target]
double cross_entropy(std::size_t target, std::span<const double> logits);
// softmax(logits) - onehot(target)
Vector cross_entropy_grad(std::size_t target, std::span<const double> logits);

// Rescales in place when the global L2 norm exceeds max_norm. Returns the pre-clip norm.
double clip_grad_norm(GradBundle& grads, double max_norm);

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class OptimizerState {
 public:
  OptimizerState(const MlpParams& params, double base_lr, AdamSettings settings = {});

  // Learning-rate multiplier; must never increase over a run.
  void set_anneal(double fraction);
  double anneal() const { return anneal_; }
  double base_lr() const { return base_lr_; }
  double effective_lr() const { return base_lr_ * anneal_; }
  std::uint64_t steps() const { return steps_; }
  const AdamSettings& settings() const { return settings_; }

 private:
  friend void optimizer_step(MlpParams&, const GradBundle&, OptimizerState&);

  AdamSettings settings_;
  double base_lr_;
  double anneal_ = 1.0;
  std::uint64_t steps_ = 0;
  GradBundle first_moment_;
  GradBundle second_moment_;
};

// Adam with effective learning rate base_lr * anneal. Throws NumericError on a non-finite gradient.
void optimizer_step(MlpParams& params, const GradBundle& grads, OptimizerState& state);

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace askac::nn
