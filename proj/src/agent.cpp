#include "askac/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "askac/errors.hpp"

namespace askac::agent {

AcConfig AcConfig::cartpole_defaults(Algorithm algorithm) {
  AcConfig c;
  c.algorithm = algorithm;
  c.anneal = true;
  if (algorithm == Algorithm::PPO) {
    c.steps_per_iteration = 2048;
    c.learning_rate = 0.001;
    c.epochs = 10;
    c.minibatch_size = 256;
    c.gae_lambda = 0.95;
  } else {
    c.steps_per_iteration = 40;
    c.learning_rate = 0.0007;
    c.epochs = 1;
    c.minibatch_size = 40;
    c.gae_lambda = 1.0;
  }
  return c;
}

AcConfig AcConfig::doorkey_defaults(Algorithm algorithm) {
  AcConfig c;
  c.algorithm = algorithm;
  c.anneal = false;
  if (algorithm == Algorithm::PPO) {
    c.steps_per_iteration = 1024;
    c.learning_rate = 0.00025;
    c.epochs = 10;
    c.minibatch_size = 64;
    c.gae_lambda = 0.95;
  } else {
    c.steps_per_iteration = 40;
    c.learning_rate = 0.0007;
    c.epochs = 1;
    c.minibatch_size = 40;
    c.gae_lambda = 1.0;
  }
  return c;
}

void AcConfig::validate() const {
  if (policy_hidden.empty() || value_hidden.empty())
    throw ConfigError("hidden layer lists must not be empty");
  for (auto h : policy_hidden)
    if (h == 0) throw ConfigError("policy hidden layer of width 0");
  for (auto h : value_hidden)
    if (h == 0) throw ConfigError("value hidden layer of width 0");
  if (steps_per_iteration == 0) throw ConfigError("timesteps_per_iteration must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (epochs < 1) throw ConfigError("number_of_epochs must be at least 1");
  if (minibatch_size == 0) throw ConfigError("minibatch_size must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("discount_factor must lie in [0,1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("gae_discount must lie in [0,1]");
  if (!(clip > 0.0)) throw ConfigError("ppo_clipping must be positive");
  if (!(max_grad_norm > 0.0)) throw ConfigError("gradient_clipping must be positive");
  if (!(vf_coeff >= 0.0)) throw ConfigError("vf_coeff must be nonnegative");
  if (!(entropy_coeff >= 0.0)) throw ConfigError("entropy_coeff must be nonnegative");
}

// ---------------------------------------------------------------- rollout storage

RolloutBuffer::RolloutBuffer(std::size_t observation_size, std::size_t capacity)
    : observations(static_cast<Eigen::Index>(observation_size), static_cast<Eigen::Index>(capacity)) {
  observations.setZero();
  meta.reserve(capacity);
  actions.reserve(capacity);
  from_policy.reserve(capacity);
  advisor_action.reserve(capacity);
  behavior_logp.reserve(capacity);
  rewards.reserve(capacity);
  terminal.reserve(capacity);
  truncated.reserve(capacity);
  truncation_values.reserve(capacity);
  values.reserve(capacity);
}

void RolloutBuffer::clear() {
  meta.clear();
  actions.clear();
  from_policy.clear();
  advisor_action.clear();
  behavior_logp.clear();
  rewards.clear();
  terminal.clear();
  truncated.clear();
  truncation_values.clear();
  values.clear();
  returns.clear();
  advantages.clear();
  bootstrap_value = 0.0;
}

void RolloutBuffer::push(const Step& step) {
  const auto t = size();
  if (t >= capacity()) throw ContractViolation("rollout buffer is full");
  if (step.observation.size() != static_cast<std::size_t>(observations.rows()))
    throw ContractViolation("rollout buffer: observation length mismatch");
  for (std::size_t i = 0; i < step.observation.size(); ++i)
    observations(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = step.observation[i];
  meta.push_back(step.meta);
  actions.push_back(step.action);
  from_policy.push_back(step.from_policy ? 1 : 0);
  advisor_action.push_back(step.advisor_action);
  behavior_logp.push_back(step.behavior_logp);
  rewards.push_back(step.reward);
  terminal.push_back(step.terminal ? 1 : 0);
  truncated.push_back(step.truncated && !step.terminal ? 1 : 0);
  truncation_values.push_back(step.truncated && !step.terminal ? step.truncation_value : 0.0);
  values.push_back(step.value);
}

std::size_t RolloutBuffer::ask_count() const {
  return static_cast<std::size_t>(std::count(meta.begin(), meta.end(), MetaAction::Ask));
}

// ---------------------------------------------------------------- returns and GAE

namespace {

void check_aligned(std::size_t n, std::size_t m, const char* what) {
  if (n != m) throw ContractViolation(std::string("misaligned rollout arrays: ") + what);
}

}  // namespace

std::vector<double> compute_returns(std::span<const double> rewards,
                                    std::span<const std::uint8_t> terminal,
                                    std::span<const std::uint8_t> truncated,
                                    std::span<const double> truncation_values,
                                    double bootstrap_value, double gamma) {
  const auto n = rewards.size();
  check_aligned(n, terminal.size(), "terminal");
  check_aligned(n, truncated.size(), "truncated");
  check_aligned(n, truncation_values.size(), "truncation values");
  std::vector<double> g(n);
  double next = bootstrap_value;
  for (std::size_t i = n; i-- > 0;) {
    if (terminal[i]) next = 0.0;
    else if (truncated[i]) next = truncation_values[i];
    g[i] = rewards[i] + gamma * next;
    next = g[i];
  }
  return g;
}

std::vector<double> compute_returns(std::span<const double> rewards,
                                    std::span<const std::uint8_t> dones, double bootstrap_value,
                                    double gamma) {
  const std::vector<std::uint8_t> none(rewards.size(), 0);
  const std::vector<double> zeros(rewards.size(), 0.0);
  return compute_returns(rewards, dones, none, zeros, bootstrap_value, gamma);
}

std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                std::span<const std::uint8_t> terminal,
                                std::span<const std::uint8_t> truncated,
                                std::span<const double> truncation_values, double bootstrap_value,
                                double gamma, double lambda) {
  const auto n = rewards.size();
  check_aligned(n, values.size(), "values");
  check_aligned(n, terminal.size(), "terminal");
  check_aligned(n, truncated.size(), "truncated");
  check_aligned(n, truncation_values.size(), "truncation values");
  std::vector<double> adv(n);
  double next_value = bootstrap_value;
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    if (terminal[i]) {
      next_value = 0.0;
      next_adv = 0.0;
    } else if (truncated[i]) {
      next_value = truncation_values[i];
      next_adv = 0.0;
    }
    const double delta = rewards[i] + gamma * next_value - values[i];
    adv[i] = delta + gamma * lambda * next_adv;
    next_value = values[i];
    next_adv = adv[i];
  }
  return adv;
}

std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                std::span<const std::uint8_t> dones, double gamma, double lambda) {
  const auto n = rewards.size();
  check_aligned(n + 1, values.size(), "values (expected one bootstrap entry)");
  const std::vector<std::uint8_t> none(n, 0);
  const std::vector<double> zeros(n, 0.0);
  return compute_gae(rewards, values.first(n), dones, none, zeros, values[n], gamma, lambda);
}

void finalize_rollout(RolloutBuffer& buffer, double gamma, double lambda) {
  buffer.advantages = compute_gae(buffer.rewards, buffer.values, buffer.terminal, buffer.truncated,
                                  buffer.truncation_values, buffer.bootstrap_value, gamma, lambda);
  buffer.returns.resize(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i)
    buffer.returns[i] = buffer.advantages[i] + buffer.values[i];
  for (double a : buffer.advantages)
    if (!std::isfinite(a)) throw NumericError("non-finite advantage in rollout");
}

void normalize_advantages(std::span<double> advantages) {
  if (advantages.empty()) return;
  const double n = static_cast<double>(advantages.size());
  const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : advantages) a = sd > 0.0 ? (a - mean) / sd : 0.0;
}

double anneal_fraction(std::uint64_t global_step, std::uint64_t total_steps) {
  if (total_steps == 0) throw ContractViolation("anneal_fraction: total_steps must be positive");
  if (global_step > total_steps) throw ContractViolation("anneal_fraction: step beyond total");
  return 1.0 - static_cast<double>(global_step) / static_cast<double>(total_steps);
}

// ---------------------------------------------------------------- minibatches

Minibatch gather(const RolloutBuffer& buffer, std::span<const std::size_t> columns) {
  Minibatch b;
  const auto n = columns.size();
  b.observations.resize(buffer.observations.rows(), static_cast<Eigen::Index>(n));
  b.meta.resize(n);
  b.actions.resize(n);
  b.from_policy.resize(n);
  b.behavior_logp.resize(n);
  b.advantages.resize(n);
  b.returns.resize(n);
  b.advisor_label.assign(n, -1);
  b.advisor_weight.assign(n, 0.0);
  b.ask_weight.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const auto i = columns[j];
    if (i >= buffer.size()) throw ContractViolation("gather: column outside the rollout");
    b.observations.col(static_cast<Eigen::Index>(j)) =
        buffer.observations.col(static_cast<Eigen::Index>(i));
    b.meta[j] = buffer.meta[i];
    b.actions[j] = buffer.actions[i];
    b.from_policy[j] = buffer.from_policy[i];
    b.behavior_logp[j] = buffer.behavior_logp[i];
    b.advantages[j] = buffer.advantages.empty() ? 0.0 : buffer.advantages[i];
    b.returns[j] = buffer.returns.empty() ? 0.0 : buffer.returns[i];
  }
  return b;
}

HeadGrads HeadGrads::zeros_like(const HeadOutputs& outputs) {
  HeadGrads g;
  g.actor = nn::Matrix::Zero(outputs.actor_logits.rows(), outputs.actor_logits.cols());
  g.critic = nn::Matrix::Zero(outputs.values.rows(), outputs.values.cols());
  g.requester = nn::Matrix::Zero(outputs.requester_logits.rows(), outputs.requester_logits.cols());
  return g;
}

HeadGrads& HeadGrads::operator+=(const HeadGrads& other) {
  actor += other.actor;
  critic += other.critic;
  requester += other.requester;
  return *this;
}

// ---------------------------------------------------------------- loss terms

namespace {

void check_outputs(const Minibatch& batch, const HeadOutputs& out) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (out.actor_logits.cols() != n || out.values.cols() != n ||
      (out.has_requester() && out.requester_logits.cols() != n))
    throw ContractViolation("head outputs do not match the minibatch");
}

// d/dz log softmax(z)[k] = onehot(k) - softmax(z); accumulated with `scale`.
void add_logp_grad(nn::Matrix& grad, const nn::Matrix& probs, Eigen::Index col, int k, double scale) {
  grad.col(col) -= scale * probs.col(col);
  grad(k, col) += scale;
}

}  // namespace

std::vector<double> joint_log_prob(const Minibatch& batch, const HeadOutputs& out) {
  check_outputs(batch, out);
  const nn::Matrix actor_lp = nn::log_softmax_columns(out.actor_logits);
  nn::Matrix req_lp;
  if (out.has_requester()) req_lp = nn::log_softmax_columns(out.requester_logits);
  std::vector<double> lp(batch.size(), 0.0);
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto c = static_cast<Eigen::Index>(t);
    if (out.has_requester()) lp[t] += req_lp(static_cast<int>(batch.meta[t]), c);
    if (batch.from_policy[t]) lp[t] += actor_lp(batch.actions[t], c);
  }
  return lp;
}

namespace {

// Adds coeff_t * d(joint log-prob_t) into the actor/requester output gradients.
void add_joint_grad(const Minibatch& batch, const HeadOutputs& out, std::span<const double> coeff,
                    HeadGrads& grads) {
  const nn::Matrix actor_p = nn::softmax_columns(out.actor_logits);
  nn::Matrix req_p;
  if (out.has_requester()) req_p = nn::softmax_columns(out.requester_logits);
  for (std::size_t t = 0; t < batch.size(); ++t) {
    if (coeff[t] == 0.0) continue;
    const auto c = static_cast<Eigen::Index>(t);
    if (out.has_requester())
      add_logp_grad(grads.requester, req_p, c, static_cast<int>(batch.meta[t]), coeff[t]);
    if (batch.from_policy[t]) add_logp_grad(grads.actor, actor_p, c, batch.actions[t], coeff[t]);
  }
}

}  // namespace

double policy_gradient_loss(const Minibatch& batch, const HeadOutputs& out, HeadGrads* grads) {
  const auto lp = joint_log_prob(batch, out);
  const double n = static_cast<double>(batch.size());
  double loss = 0.0;
  std::vector<double> coeff(batch.size());
  for (std::size_t t = 0; t < batch.size(); ++t) {
    loss -= lp[t] * batch.advantages[t] / n;
    coeff[t] = -batch.advantages[t] / n;
  }
  if (grads) add_joint_grad(batch, out, coeff, *grads);
  return loss;
}

double clipped_surrogate_loss(const Minibatch& batch, const HeadOutputs& out, double clip,
                              HeadGrads* grads) {
  const auto lp = joint_log_prob(batch, out);
  const double n = static_cast<double>(batch.size());
  double loss = 0.0;
  std::vector<double> coeff(batch.size(), 0.0);
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const double a = batch.advantages[t];
    const double ratio = std::exp(lp[t] - batch.behavior_logp[t]);
    const double unclipped = ratio * a;
    const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * a;
    if (unclipped <= clipped) {
      loss -= unclipped / n;
      coeff[t] = -unclipped / n;  // d(ratio)/d(lp) = ratio
    } else {
      loss -= clipped / n;
    }
  }
  if (grads) add_joint_grad(batch, out, coeff, *grads);
  return loss;
}

double value_loss(const Minibatch& batch, const HeadOutputs& out, double coeff, HeadGrads* grads) {
  check_outputs(batch, out);
  const double n = static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto c = static_cast<Eigen::Index>(t);
    const double err = out.values(0, c) - batch.returns[t];
    loss += coeff * err * err / n;
    if (grads) grads->critic(0, c) += 2.0 * coeff * err / n;
  }
  return loss;
}

double entropy_loss(const Minibatch& batch, const HeadOutputs& out, double coeff, HeadGrads* grads) {
  check_outputs(batch, out);
  if (coeff == 0.0) return 0.0;
  const nn::Matrix p = nn::softmax_columns(out.actor_logits);
  const nn::Matrix lp = nn::log_softmax_columns(out.actor_logits);
  const double n = static_cast<double>(batch.size());
  double loss = 0.0;
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    const double h = -(p.col(c).array() * lp.col(c).array()).sum();
    loss -= coeff * h / n;
    // dH/dz_j = -p_j (log p_j + H)
    if (grads)
      grads->actor.col(c).array() += coeff / n * p.col(c).array() * (lp.col(c).array() + h);
  }
  return loss;
}

OrgLoss a2c_loss(const Minibatch& batch, const HeadOutputs& out, const AcConfig& config,
                 HeadGrads* grads) {
  OrgLoss l;
  l.policy = policy_gradient_loss(batch, out, grads);
  l.value = value_loss(batch, out, config.vf_coeff, grads);
  l.entropy = entropy_loss(batch, out, config.entropy_coeff, grads);
  return l;
}

OrgLoss ppo_loss(const Minibatch& batch, const HeadOutputs& out, const AcConfig& config,
                 double anneal, HeadGrads* grads) {
  OrgLoss l;
  const double clip = config.anneal ? config.clip * anneal : config.clip;
  l.policy = clipped_surrogate_loss(batch, out, clip, grads);
  l.value = value_loss(batch, out, config.vf_coeff, grads);
  l.entropy = entropy_loss(batch, out, config.entropy_coeff, grads);
  return l;
}

}  // namespace askac::agent
