#pragma once

// Advisor-in-the-loop training: the action requester g (ask / exec), the
// adaptive state selector that flags value-error spikes, the advisor and ask
// losses, rollout collection with an advisor, and the training loop.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "askac/advisors.hpp"
#include "askac/agent.hpp"
#include "askac/envs.hpp"
#include "askac/nn.hpp"
#include "askac/rng.hpp"

namespace askac::ask {

// ---------------------------------------------------------------- adaptive state selector

struct SelectorState {
  double ewma = 0.0;   // W, starts at 0
  double beta = 0.9;   // decay rate
  double delta = 0.1;  // max unstable rate
  std::uint64_t iteration = 0;

  void validate() const;
};

// E_v(s) = (V(s) - G(s))^2
std::vector<double> value_errors(std::span<const double> values, std::span<const double> returns);
// Mean of E_v. Throws ContractViolation on an empty history.
double value_loss(std::span<const double> errors);
// W <- beta W + (1 - beta) L; returns the new W.
double update_ewma(SelectorState& state, double value_loss);
// (1 - beta) L / W with W the average that already includes L; 0 when W = 0.
double unstable_rate(const SelectorState& state, double value_loss, double ewma);
// ceil(rate * delta * history)
std::size_t unstable_count(double rate, double delta, std::size_t history);
// Indices of the k largest errors, largest first, ties to the earlier index.
std::vector<std::size_t> select_unstable(std::span<const double> errors, std::size_t k);

struct UnstableSelection {
  std::vector<double> errors;
  double value_loss = 0.0;
  double ewma = 0.0;
  double rate = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> states;
};

// One selector step over an iteration's history. Throws NumericError when the
// rate leaves [0, 1].
UnstableSelection run_selector(SelectorState& state, std::span<const double> values,
                               std::span<const double> returns);

// ---------------------------------------------------------------- networks and losses

struct AskLossWeights {
  double advisor = 1.0;
  double ask = 0.5;
};

struct Networks {
  nn::MlpParams actor;
  nn::MlpParams critic;
  std::optional<nn::MlpParams> requester;  // logits (ask, exec)
};

struct NetworkGrads {
  nn::GradBundle actor;
  nn::GradBundle critic;
  std::optional<nn::GradBundle> requester;
};

// Exec and Ask saturate the output bias at +-20 so the requester starts out
// (almost surely) always executing or always asking.
enum class RequesterInit { Uniform, Exec, Ask };

Networks init_networks(std::size_t observation_size, std::size_t action_count,
                       const agent::AcConfig& config, bool with_requester, RequesterInit init,
                       const Rng& root);

agent::HeadOutputs forward_heads(const Networks& nets, const nn::Matrix& observations);

// Advisor loss over the labelled members of `batch`:
//   sum_t w_t [CE(a*_t, pi(s_t)) + CE(exec, g(s_t))]   (requester term only with a requester)
// with w_t = batch.advisor_weight[t]. Returns the unscaled value and adds
// coeff * gradient into `grads`.
double advisor_loss(const agent::Minibatch& batch, const agent::HeadOutputs& outputs, double coeff,
                    agent::HeadGrads* grads);

// Ask loss: sum_t batch.ask_weight[t] * CE(ask, g(s_t)); 0 without a requester.
double ask_loss(const agent::Minibatch& batch, const agent::HeadOutputs& outputs, double coeff,
                agent::HeadGrads* grads);

double total_loss(double org, double advisor, double ask, const AskLossWeights& weights);

struct LossBreakdown {
  agent::OrgLoss org;
  double advisor = 0.0;
  double ask = 0.0;
  double total = 0.0;
};

// Every loss term for one batch, and (optionally) its gradient w.r.t. each network.
LossBreakdown evaluate_batch(const Networks& nets, const agent::Minibatch& batch,
                             const agent::AcConfig& config, double anneal,
                             const AskLossWeights& weights, NetworkGrads* grads);

// Set of (state, advisor action) pairs with a plain mean loss; test and binding entry point.
struct AdvisorExampleSet {
  std::vector<std::vector<double>> observations;
  std::vector<int> actions;

  std::size_t size() const { return actions.size(); }
  bool empty() const { return actions.empty(); }
  void add(std::span<const double> observation, int action);
};

double advisor_loss(const AdvisorExampleSet& examples, const Networks& nets, NetworkGrads* grads);
double ask_loss(std::span<const std::vector<double>> unstable_states, const Networks& nets,
                NetworkGrads* grads);

// ---------------------------------------------------------------- decisions

struct MetaDecision {
  MetaAction meta = MetaAction::Exec;
  double log_prob = 0.0;
};
MetaDecision decide_meta(const nn::MlpParams& requester, std::span<const double> observation,
                         Rng& rng);

// max_a pi(a|s) - min_a pi(a|s)
double heu_importance(const nn::MlpParams& actor, std::span<const double> observation);

// ---------------------------------------------------------------- training loop

enum class Mode {
  Plain,       // A2C / PPO, advisor ignored
  Ask,         // learned requester + selector
  Continuous,  // advisor labels every step, agent acts
  Heuristic,   // ask when the policy is indecisive
};

std::string to_string(Mode mode);

struct TrainerConfig {
  Mode mode = Mode::Ask;
  agent::AcConfig ac;
  double beta = 0.9;
  double delta = 0.1;
  AskLossWeights weights;
  bool requester = true;  // Ask mode only
  RequesterInit requester_init = RequesterInit::Uniform;
  double heu_threshold = 0.6;
  std::uint64_t total_steps = 200000;
  std::uint64_t seed = 0;

  // Whole iterations only.
  std::uint64_t iterations() const;
  void validate() const;
};

struct IterationStats {
  std::uint64_t iteration = 0;    // 1-based
  std::uint64_t global_step = 0;  // after this iteration
  double train_return = 0.0;      // mean of episodes finished here, carried forward otherwise
  std::size_t episodes = 0;
  double roa = 0.0;
  std::size_t ask_count = 0;
  std::size_t advisor_examples = 0;
  std::size_t timeouts = 0;
  double value_loss = 0.0;
  double ewma = 0.0;
  double unstable_rate = 0.0;
  std::size_t unstable_count = 0;
  double anneal = 1.0;
  // Means over every update batch of the iteration.
  double loss_policy = 0.0;
  double loss_value = 0.0;
  double loss_entropy = 0.0;
  double loss_advisor = 0.0;
  double loss_ask = 0.0;
  double loss_total = 0.0;
};

class Trainer {
 public:
  // `advisor` may be null in Plain mode; it is never queried there.
  Trainer(TrainerConfig config, envs::Environment& env, advisors::Advisor* advisor);

  // Fills the rollout buffer with one iteration of interaction.
  const agent::RolloutBuffer& sample_episode();
  // One full iteration: rollout, selector, update.
  IterationStats run_iteration();
  bool finished() const { return iteration_ >= config_.iterations(); }
  std::uint64_t global_step() const { return global_step_; }

  const Networks& networks() const { return nets_; }
  const SelectorState& selector() const { return selector_; }
  const TrainerConfig& config() const { return config_; }
  const agent::RolloutBuffer& buffer() const { return buffer_; }

 private:
  void update(const UnstableSelection& selection, IterationStats& stats);
  int query_advisor(std::span<const double> observation, bool& answered);

  TrainerConfig config_;
  envs::Environment& env_;
  advisors::Advisor* advisor_;
  Networks nets_;
  nn::OptimizerState actor_opt_;
  nn::OptimizerState critic_opt_;
  std::optional<nn::OptimizerState> requester_opt_;
  SelectorState selector_;
  agent::RolloutBuffer buffer_;

  Rng reset_rng_;
  Rng action_rng_;
  Rng meta_rng_;
  Rng minibatch_rng_;

  std::vector<double> observation_;
  double episode_return_ = 0.0;
  std::vector<double> finished_returns_;
  double last_train_return_ = 0.0;
  std::uint64_t global_step_ = 0;
  std::uint64_t iteration_ = 0;
  std::uint64_t next_query_id_ = 1;
  std::size_t timeouts_ = 0;
};

struct TrainResult {
  std::vector<IterationStats> iterations;
  Networks networks;
  std::uint64_t total_asks = 0;
};

// Runs every iteration; `on_iteration` sees each row as it is produced.
TrainResult train(const TrainerConfig& config, envs::Environment& env, advisors::Advisor* advisor,
                  const std::function<void(const IterationStats&)>& on_iteration = {});

}  // namespace askac::ask
