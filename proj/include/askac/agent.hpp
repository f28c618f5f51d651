#pragma once

// Actor-critic backbones (A2C, PPO): rollout storage, discounted returns, GAE,
// and the policy/value loss terms. Loss terms operate on network *outputs* and
// accumulate gradients w.r.t. those outputs; the caller backpropagates them
// through the individual MLPs.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "askac/nn.hpp"

namespace askac {

// The requester's extra action set; logits are ordered (ask, exec).
enum class MetaAction : int { Ask = 0, Exec = 1 };

}  // namespace askac

namespace askac::agent {

enum class Algorithm { A2C, PPO };

struct AcConfig {
  Algorithm algorithm = Algorithm::PPO;
  std::vector<std::size_t> policy_hidden{64, 64};
  std::vector<std::size_t> value_hidden{64, 64};
  std::size_t steps_per_iteration = 2048;
  double learning_rate = 0.001;
  bool anneal = true;  // scale learning rate and PPO clip by 1 - progress
  int epochs = 10;
  std::size_t minibatch_size = 256;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double max_grad_norm = 0.5;
  double vf_coeff = 0.5;
  double entropy_coeff = 0.0;

  // Published settings for the CartPole family (annealed) and the DoorKey family (constant).
  static AcConfig cartpole_defaults(Algorithm algorithm);
  static AcConfig doorkey_defaults(Algorithm algorithm);
  void validate() const;
};

// One iteration's worth of interaction, stored column-per-step.
struct RolloutBuffer {
  nn::Matrix observations;              // obs_size x capacity
  std::vector<MetaAction> meta;         // y_t
  std::vector<int> actions;             // executed a_t
  std::vector<std::uint8_t> from_policy;  // a_t was sampled from the actor
  std::vector<int> advisor_action;      // a* when the advisor answered, else -1
  std::vector<double> behavior_logp;    // log g(y|s) [+ log pi(a|s) when from_policy]
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminal;
  std::vector<std::uint8_t> truncated;
  std::vector<double> truncation_values;  // V(final observation) on truncated steps
  std::vector<double> values;             // V(s_t) at collection time
  double bootstrap_value = 0.0;           // V(s_T) when the last step did not end an episode
  bool has_requester = false;             // meta decisions came from a learned requester

  std::vector<double> returns;     // critic target G_t
  std::vector<double> advantages;

  RolloutBuffer() = default;
  RolloutBuffer(std::size_t observation_size, std::size_t capacity);

  std::size_t size() const { return rewards.size(); }
  std::size_t capacity() const { return static_cast<std::size_t>(observations.cols()); }
  void clear();

  struct Step {
    std::span<const double> observation;
    MetaAction meta = MetaAction::Exec;
    int action = 0;
    bool from_policy = true;
    int advisor_action = -1;
    double behavior_logp = 0.0;
    double reward = 0.0;
    bool terminal = false;
    bool truncated = false;
    double truncation_value = 0.0;
    double value = 0.0;
  };
  void push(const Step& step);

  std::size_t ask_count() const;
};

// G_t = r_t + gamma * G_{t+1}, restarted at terminal steps (0) and truncated
// steps (their truncation value); the final step bootstraps from `bootstrap_value`.
std::vector<double> compute_returns(std::span<const double> rewards,
                                    std::span<const std::uint8_t> terminal,
                                    std::span<const std::uint8_t> truncated,
                                    std::span<const double> truncation_values,
                                    double bootstrap_value, double gamma);
// Terminal-only episode ends.
std::vector<double> compute_returns(std::span<const double> rewards,
                                    std::span<const std::uint8_t> dones, double bootstrap_value,
                                    double gamma);

// values has one entry per step; the value after the last step is `bootstrap_value`.
std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                std::span<const std::uint8_t> terminal,
                                std::span<const std::uint8_t> truncated,
                                std::span<const double> truncation_values, double bootstrap_value,
                                double gamma, double lambda);
// `values` carries T+1 entries, the last one being the bootstrap.
std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                std::span<const std::uint8_t> dones, double gamma, double lambda);

// Fills buffer.advantages (GAE) and buffer.returns (advantage + value).
void finalize_rollout(RolloutBuffer& buffer, double gamma, double lambda);

// Zero mean, unit (population) standard deviation; constant input maps to zeros.
void normalize_advantages(std::span<double> advantages);

// 1 - global_step / total_steps
double anneal_fraction(std::uint64_t global_step, std::uint64_t total_steps);

// ---------------------------------------------------------------- loss terms

// Per-sample data gathered from a rollout for one update batch.
struct Minibatch {
  nn::Matrix observations;
  std::vector<MetaAction> meta;
  std::vector<int> actions;
  std::vector<std::uint8_t> from_policy;
  std::vector<double> behavior_logp;
  std::vector<double> advantages;
  std::vector<double> returns;
  // Supervision from the advisor: label (-1 = none) and the per-sample weight
  // that turns the batch sum into the set-level mean.
  std::vector<int> advisor_label;
  std::vector<double> advisor_weight;
  std::vector<double> ask_weight;  // membership weight in the unstable set

  std::size_t size() const { return actions.size(); }
};

Minibatch gather(const RolloutBuffer& buffer, std::span<const std::size_t> columns);

struct HeadOutputs {
  nn::Matrix actor_logits;      // |A| x B
  nn::Matrix values;            // 1 x B
  nn::Matrix requester_logits;  // 2 x B, or empty without a requester
  bool has_requester() const { return requester_logits.size() > 0; }
};

struct HeadGrads {
  nn::Matrix actor;
  nn::Matrix critic;
  nn::Matrix requester;

  static HeadGrads zeros_like(const HeadOutputs& outputs);
  HeadGrads& operator+=(const HeadGrads& other);
};

// log g(y|s) [requester present] + from_policy * log pi(a|s), per sample.
std::vector<double> joint_log_prob(const Minibatch& batch, const HeadOutputs& outputs);

// -mean_t joint_log_prob_t * A_t  (advantages held constant)
double policy_gradient_loss(const Minibatch& batch, const HeadOutputs& outputs, HeadGrads* grads);

// -mean_t min(rho_t A_t, clip(rho_t, 1-clip, 1+clip) A_t), rho from joint log-probs.
double clipped_surrogate_loss(const Minibatch& batch, const HeadOutputs& outputs, double clip,
                              HeadGrads* grads);

// coeff * mean_t (V(s_t) - G_t)^2
double value_loss(const Minibatch& batch, const HeadOutputs& outputs, double coeff, HeadGrads* grads);

// -coeff * mean_t H(pi(.|s_t))
double entropy_loss(const Minibatch& batch, const HeadOutputs& outputs, double coeff, HeadGrads* grads);

struct OrgLoss {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double total() const { return policy + value + entropy; }
};

// Backbone objective: vanilla policy gradient (A2C) or clipped surrogate (PPO), plus value and entropy.
OrgLoss a2c_loss(const Minibatch& batch, const HeadOutputs& outputs, const AcConfig& config,
                 HeadGrads* grads);
OrgLoss ppo_loss(const Minibatch& batch, const HeadOutputs& outputs, const AcConfig& config,
                 double anneal, HeadGrads* grads);

}  // namespace askac::agent
