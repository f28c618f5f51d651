#include "askac/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "askac/errors.hpp"

namespace askac::nn {
namespace {

void apply_activation(Matrix& m, Activation act) {
  switch (act) {
    case Activation::Tanh:
      m = m.array().tanh();
      break;
    case Activation::Relu:
      m = m.array().max(0.0);
      break;
    case Activation::Identity:
      break;
  }
}

// Derivative expressed through the activation output h.
Matrix activation_derivative(const Matrix& h, Activation act) {
  switch (act) {
    case Activation::Tanh:
      return (1.0 - h.array().square()).matrix();
    case Activation::Relu:
      return (h.array() > 0.0).cast<double>().matrix();
    case Activation::Identity:
      break;
  }
  return Matrix::Ones(h.rows(), h.cols());
}

Matrix orthogonal(std::size_t rows, std::size_t cols, double gain, Rng& rng) {
  const auto big = std::max(rows, cols);
  const auto small = std::min(rows, cols);
  Matrix gaussian(big, small);
  for (Eigen::Index j = 0; j < gaussian.cols(); ++j)
    for (Eigen::Index i = 0; i < gaussian.rows(); ++i) gaussian(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(gaussian);
  Matrix q = qr.householderQ() * Matrix::Identity(big, small);
  // Sign fix makes the distribution uniform over orthogonal matrices.
  const Matrix r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < small; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  Matrix w = rows >= cols ? q : Matrix(q.transpose());
  return gain * w;
}

}  // namespace

std::size_t MlpParams::input_size() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols());
}

std::size_t MlpParams::output_size() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows());
}

std::vector<std::size_t> MlpParams::layer_sizes() const {
  std::vector<std::size_t> sizes;
  if (layers.empty()) return sizes;
  sizes.push_back(input_size());
  for (const auto& layer : layers) sizes.push_back(static_cast<std::size_t>(layer.weight.rows()));
  return sizes;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ConfigError("MLP has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.weight.rows())
      throw ConfigError("MLP layer " + std::to_string(l) + ": bias length does not match weight rows");
    if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows())
      throw ConfigError("MLP layer " + std::to_string(l) + ": input width does not match previous output");
    if (!layer.weight.allFinite() || !layer.bias.allFinite())
      throw NumericError("MLP layer " + std::to_string(l) + " holds non-finite values");
  }
}

MlpParams MlpParams::zeros(std::span<const std::size_t> sizes, Activation hidden) {
  if (sizes.size() < 2) throw ConfigError("MLP needs at least an input and an output size");
  MlpParams params;
  params.hidden_activation = hidden;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    params.layers.push_back({Matrix::Zero(sizes[l], sizes[l - 1]), Vector::Zero(sizes[l])});
  }
  return params;
}

MlpParams init_mlp(std::span<const std::size_t> sizes, double output_gain, Rng& rng,
                   Activation hidden) {
  MlpParams params = MlpParams::zeros(sizes, hidden);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const bool last = l + 1 == params.layers.size();
    auto& w = params.layers[l].weight;
    w = orthogonal(w.rows(), w.cols(), last ? output_gain : std::sqrt(2.0), rng);
  }
  return params;
}

Vector mlp_forward(const MlpParams& params, std::span<const double> input) {
  if (input.size() != params.input_size())
    throw ConfigError("mlp_forward: input has " + std::to_string(input.size()) +
                      " features, network expects " + std::to_string(params.input_size()));
  Vector h = Eigen::Map<const Vector>(input.data(), static_cast<Eigen::Index>(input.size()));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Vector z = layer.weight * h + layer.bias;
    if (l + 1 < params.layers.size()) {
      Matrix zm = std::move(z);
      apply_activation(zm, params.hidden_activation);
      h = std::move(zm);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Matrix mlp_forward_batch(const MlpParams& params, const Matrix& inputs, MlpTape* tape) {
  if (static_cast<std::size_t>(inputs.rows()) != params.input_size())
    throw ConfigError("mlp_forward_batch: input has " + std::to_string(inputs.rows()) +
                      " features, network expects " + std::to_string(params.input_size()));
  if (tape) {
    tape->activations.clear();
    tape->activations.reserve(params.layers.size() + 1);
    tape->activations.push_back(inputs);
  }
  Matrix h = inputs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Matrix z = layer.weight * h;
    z.colwise() += layer.bias;
    if (l + 1 < params.layers.size()) apply_activation(z, params.hidden_activation);
    h = std::move(z);
    if (tape) tape->activations.push_back(h);
  }
  return h;
}

GradBundle GradBundle::zeros_like(const MlpParams& params) {
  GradBundle g;
  g.layers.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    g.layers.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                        Vector::Zero(layer.bias.size())});
  }
  return g;
}

double GradBundle::global_norm() const {
  double sq = 0.0;
  for (const auto& layer : layers) sq += layer.weight.squaredNorm() + layer.bias.squaredNorm();
  return std::sqrt(sq);
}

bool GradBundle::finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

void GradBundle::scale(double factor) {
  for (auto& layer : layers) {
    layer.weight *= factor;
    layer.bias *= factor;
  }
}

GradBundle& GradBundle::operator+=(const GradBundle& other) {
  if (other.layers.size() != layers.size()) throw ConfigError("GradBundle shape mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight += other.layers[l].weight;
    layers[l].bias += other.layers[l].bias;
  }
  return *this;
}

GradBundle mlp_backward(const MlpParams& params, const MlpTape& tape, const Matrix& output_grad) {
  const std::size_t depth = params.layers.size();
  if (tape.activations.size() != depth + 1)
    throw ConfigError("mlp_backward: tape does not match network depth");
  if (output_grad.rows() != tape.activations.back().rows() ||
      output_grad.cols() != tape.activations.back().cols())
    throw ConfigError("mlp_backward: output gradient shape mismatch");

  GradBundle grads;
  grads.layers.resize(depth);
  Matrix delta = output_grad;
  for (std::size_t l = depth; l-- > 0;) {
    const Matrix& input = tape.activations[l];
    grads.layers[l].weight = delta * input.transpose();
    grads.layers[l].bias = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = params.layers[l].weight.transpose() * delta;
      delta = back.cwiseProduct(activation_derivative(input, params.hidden_activation));
    }
  }
  return grads;
}

CategoricalDist softmax(std::span<const double> logits) {
  CategoricalDist dist;
  dist.probs.resize(logits.size());
  if (logits.empty()) return dist;
  for (double z : logits)
    if (std::isnan(z)) throw NumericError("softmax: NaN logit");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    dist.probs[i] = std::exp(logits[i] - peak);
    total += dist.probs[i];
  }
  for (double& p : dist.probs) p /= total;
  return dist;
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double peak = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - peak).exp();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

Matrix log_softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double peak = logits.col(j).maxCoeff();
    const double lse = peak + std::log((logits.col(j).array() - peak).exp().sum());
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

std::size_t sample_action(const CategoricalDist& dist, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    cumulative += dist[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;  // rounding left u just above the final cumulative sum
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

double cross_entropy(std::size_t target, std::span<const double> logits) {
  if (target >= logits.size())
    throw ContractViolation("cross_entropy: target " + std::to_string(target) +
                            " outside " + std::to_string(logits.size()) + " classes");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  return peak + std::log(total) - logits[target];
}

Vector cross_entropy_grad(std::size_t target, std::span<const double> logits) {
  if (target >= logits.size())
    throw ContractViolation("cross_entropy_grad: target out of range");
  const auto dist = softmax(logits);
  Vector g = Eigen::Map<const Vector>(dist.probs.data(), static_cast<Eigen::Index>(dist.size()));
  g[static_cast<Eigen::Index>(target)] -= 1.0;
  return g;
}

double clip_grad_norm(GradBundle& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractViolation("clip_grad_norm: max_norm must be positive");
  const double norm = grads.global_norm();
  if (norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

OptimizerState::OptimizerState(const MlpParams& params, double base_lr, AdamSettings settings)
    : settings_(settings),
      base_lr_(base_lr),
      first_moment_(GradBundle::zeros_like(params)),
      second_moment_(GradBundle::zeros_like(params)) {}

void OptimizerState::set_anneal(double fraction) {
  if (fraction < 0.0 || fraction > 1.0) throw ContractViolation("anneal fraction outside [0,1]");
  if (fraction > anneal_) throw ContractViolation("anneal fraction may not increase");
  anneal_ = fraction;
}

void optimizer_step(MlpParams& params, const GradBundle& grads, OptimizerState& state) {
  if (grads.layers.size() != params.layers.size())
    throw ConfigError("optimizer_step: gradient/parameter shape mismatch");
  if (!grads.finite()) throw NumericError("optimizer_step: non-finite gradient");

  const auto& s = state.settings_;
  ++state.steps_;
  const double t = static_cast<double>(state.steps_);
  const double correction1 = 1.0 - std::pow(s.beta1, t);
  const double correction2 = 1.0 - std::pow(s.beta2, t);
  const double lr = state.effective_lr();

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = s.beta1 * m + (1.0 - s.beta1) * grad;
    v = s.beta2 * v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
    if (lr == 0.0) return;
    param.array() -= lr * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + s.epsilon);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& p = params.layers[l];
    const auto& g = grads.layers[l];
    if (p.weight.rows() != g.weight.rows() || p.weight.cols() != g.weight.cols() ||
        p.bias.size() != g.bias.size())
      throw ConfigError("optimizer_step: gradient/parameter shape mismatch");
    update(p.weight, g.weight, state.first_moment_.layers[l].weight,
           state.second_moment_.layers[l].weight);
    update(p.bias, g.bias, state.first_moment_.layers[l].bias, state.second_moment_.layers[l].bias);
  }
}

}  // namespace askac::nn
