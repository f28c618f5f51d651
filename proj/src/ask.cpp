#include "askac/ask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "askac/errors.hpp"

namespace askac::ask {

// ---------------------------------------------------------------- selector

void SelectorState::validate() const {
  if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("exponential_decay_rate must lie in [0,1)");
  if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("max_unstable_rate must lie in [0,1]");
  if (!(ewma >= 0.0)) throw ConfigError("selector average must be nonnegative");
}

std::vector<double> value_errors(std::span<const double> values, std::span<const double> returns) {
  if (values.size() != returns.size()) throw ContractViolation("value_errors: misaligned inputs");
  std::vector<double> e(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - returns[i];
    e[i] = d * d;
  }
  return e;
}

double value_loss(std::span<const double> errors) {
  if (errors.empty()) throw ContractViolation("value_loss: empty history");
  return std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
}

// The (1 - beta) * L product is spelled identically here and in unstable_rate
// so that the rate is bounded by 1 in floating point and equals 1 when W was 0.
double update_ewma(SelectorState& state, double loss) {
  if (!(loss >= 0.0)) throw ContractViolation("update_ewma: value loss must be nonnegative");
  state.ewma = state.beta * state.ewma + (1.0 - state.beta) * loss;
  return state.ewma;
}

double unstable_rate(const SelectorState& state, double loss, double ewma) {
  if (ewma == 0.0) return 0.0;
  return (1.0 - state.beta) * loss / ewma;
}

std::size_t unstable_count(double rate, double delta, std::size_t history) {
  const double x = rate * delta * static_cast<double>(history);
  if (!(x > 0.0)) return 0;
  // Products landing a few ulps above an integer count as that integer.
  const double k = std::ceil(x - 1e-9 * std::max(1.0, x));
  return std::min(history, static_cast<std::size_t>(k));
}

std::vector<std::size_t> select_unstable(std::span<const double> errors, std::size_t k) {
  if (k > errors.size()) throw ContractViolation("select_unstable: k exceeds the history size");
  std::vector<std::size_t> idx(errors.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto before = [&](std::size_t a, std::size_t b) {
    return errors[a] > errors[b] || (errors[a] == errors[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  idx.resize(k);
  return idx;
}

UnstableSelection run_selector(SelectorState& state, std::span<const double> values,
                               std::span<const double> returns) {
  UnstableSelection s;
  s.errors = value_errors(values, returns);
  s.value_loss = value_loss(s.errors);
  if (!std::isfinite(s.value_loss)) throw NumericError("selector: non-finite value loss");
  s.ewma = update_ewma(state, s.value_loss);
  s.rate = unstable_rate(state, s.value_loss, s.ewma);
  ++state.iteration;
  if (!(s.rate >= 0.0 && s.rate <= 1.0)) {
    std::ostringstream msg;
    msg << "selector: unstable rate " << s.rate << " outside [0,1] at iteration " << state.iteration;
    throw NumericError(msg.str());
  }
  s.count = unstable_count(s.rate, state.delta, s.errors.size());
  s.states = select_unstable(s.errors, s.count);
  return s;
}

// ---------------------------------------------------------------- networks

Networks init_networks(std::size_t observation_size, std::size_t action_count,
                       const agent::AcConfig& config, bool with_requester, RequesterInit init,
                       const Rng& root) {
  auto sizes = [&](const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> s{observation_size};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(out);
    return s;
  };
  Networks nets;
  Rng actor_rng = root.fork(streams::kActorInit);
  Rng critic_rng = root.fork(streams::kCriticInit);
  nets.actor = nn::init_mlp(sizes(config.policy_hidden, action_count), 0.01, actor_rng);
  nets.critic = nn::init_mlp(sizes(config.value_hidden, 1), 1.0, critic_rng);
  if (with_requester) {
    Rng req_rng = root.fork(streams::kRequesterInit);
    nets.requester = nn::init_mlp(sizes(config.policy_hidden, 2), 0.01, req_rng);
    if (init != RequesterInit::Uniform) {
      const double ask = init == RequesterInit::Ask ? 20.0 : -20.0;
      auto& bias = nets.requester->layers.back().bias;
      bias(static_cast<int>(MetaAction::Ask)) = ask;
      bias(static_cast<int>(MetaAction::Exec)) = -ask;
    }
  }
  return nets;
}

agent::HeadOutputs forward_heads(const Networks& nets, const nn::Matrix& observations) {
  agent::HeadOutputs out;
  out.actor_logits = nn::mlp_forward_batch(nets.actor, observations);
  out.values = nn::mlp_forward_batch(nets.critic, observations);
  if (nets.requester) out.requester_logits = nn::mlp_forward_batch(*nets.requester, observations);
  return out;
}

// ---------------------------------------------------------------- advisor and ask losses

namespace {

// Adds scale * d CE(k, z)/dz = scale * (softmax(z) - onehot(k)).
void add_ce_grad(nn::Matrix& grad, const nn::Matrix& probs, Eigen::Index col, int k, double scale) {
  grad.col(col) += scale * probs.col(col);
  grad(k, col) -= scale;
}

}  // namespace

double advisor_loss(const agent::Minibatch& batch, const agent::HeadOutputs& out, double coeff,
                    agent::HeadGrads* grads) {
  const nn::Matrix actor_lp = nn::log_softmax_columns(out.actor_logits);
  const nn::Matrix actor_p = actor_lp.array().exp().matrix();
  nn::Matrix req_lp, req_p;
  if (out.has_requester()) {
    req_lp = nn::log_softmax_columns(out.requester_logits);
    req_p = req_lp.array().exp().matrix();
  }
  const int exec = static_cast<int>(MetaAction::Exec);
  double loss = 0.0;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const int label = batch.advisor_label[t];
    const double w = batch.advisor_weight[t];
    if (label < 0 || w == 0.0) continue;
    const auto c = static_cast<Eigen::Index>(t);
    if (label >= out.actor_logits.rows()) throw ContractViolation("advisor label out of range");
    loss -= w * actor_lp(label, c);
    if (out.has_requester()) loss -= w * req_lp(exec, c);
    if (grads) {
      add_ce_grad(grads->actor, actor_p, c, label, coeff * w);
      if (out.has_requester()) add_ce_grad(grads->requester, req_p, c, exec, coeff * w);
    }
  }
  return loss;
}

double ask_loss(const agent::Minibatch& batch, const agent::HeadOutputs& out, double coeff,
                agent::HeadGrads* grads) {
  if (!out.has_requester()) return 0.0;
  const nn::Matrix req_lp = nn::log_softmax_columns(out.requester_logits);
  const nn::Matrix req_p = req_lp.array().exp().matrix();
  const int ask = static_cast<int>(MetaAction::Ask);
  double loss = 0.0;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const double w = batch.ask_weight[t];
    if (w == 0.0) continue;
    const auto c = static_cast<Eigen::Index>(t);
    loss -= w * req_lp(ask, c);
    if (grads) add_ce_grad(grads->requester, req_p, c, ask, coeff * w);
  }
  return loss;
}

double total_loss(double org, double advisor, double ask, const AskLossWeights& weights) {
  return org + weights.advisor * advisor + weights.ask * ask;
}

LossBreakdown evaluate_batch(const Networks& nets, const agent::Minibatch& batch,
                             const agent::AcConfig& config, double anneal,
                             const AskLossWeights& weights, NetworkGrads* grads) {
  nn::MlpTape actor_tape, critic_tape, req_tape;
  const bool tapes = grads != nullptr;
  agent::HeadOutputs out;
  out.actor_logits = nn::mlp_forward_batch(nets.actor, batch.observations, tapes ? &actor_tape : nullptr);
  out.values = nn::mlp_forward_batch(nets.critic, batch.observations, tapes ? &critic_tape : nullptr);
  if (nets.requester)
    out.requester_logits =
        nn::mlp_forward_batch(*nets.requester, batch.observations, tapes ? &req_tape : nullptr);

  agent::HeadGrads head;
  if (grads) head = agent::HeadGrads::zeros_like(out);
  agent::HeadGrads* hp = grads ? &head : nullptr;

  LossBreakdown l;
  l.org = config.algorithm == agent::Algorithm::PPO ? agent::ppo_loss(batch, out, config, anneal, hp)
                                                    : agent::a2c_loss(batch, out, config, hp);
  l.advisor = advisor_loss(batch, out, weights.advisor, hp);
  l.ask = ask_loss(batch, out, weights.ask, hp);
  l.total = total_loss(l.org.total(), l.advisor, l.ask, weights);

  if (grads) {
    grads->actor = nn::mlp_backward(nets.actor, actor_tape, head.actor);
    grads->critic = nn::mlp_backward(nets.critic, critic_tape, head.critic);
    grads->requester.reset();
    if (nets.requester) grads->requester = nn::mlp_backward(*nets.requester, req_tape, head.requester);
  }
  return l;
}

void AdvisorExampleSet::add(std::span<const double> observation, int action) {
  if (!observations.empty() && observations.front().size() != observation.size())
    throw ContractViolation("advisor example set: observation length mismatch");
  observations.emplace_back(observation.begin(), observation.end());
  actions.push_back(action);
}

namespace {

agent::Minibatch batch_of(std::span<const std::vector<double>> states, std::size_t obs_size) {
  agent::Minibatch b;
  const auto n = states.size();
  b.observations.resize(static_cast<Eigen::Index>(obs_size), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    if (states[j].size() != obs_size) throw ContractViolation("state length mismatch");
    for (std::size_t i = 0; i < obs_size; ++i)
      b.observations(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = states[j][i];
  }
  b.meta.assign(n, MetaAction::Exec);
  b.actions.assign(n, 0);
  b.from_policy.assign(n, 0);
  b.behavior_logp.assign(n, 0.0);
  b.advantages.assign(n, 0.0);
  b.returns.assign(n, 0.0);
  b.advisor_label.assign(n, -1);
  b.advisor_weight.assign(n, 0.0);
  b.ask_weight.assign(n, 0.0);
  return b;
}

void zero_grads(const Networks& nets, NetworkGrads& grads) {
  grads.actor = nn::GradBundle::zeros_like(nets.actor);
  grads.critic = nn::GradBundle::zeros_like(nets.critic);
  grads.requester.reset();
  if (nets.requester) grads.requester = nn::GradBundle::zeros_like(*nets.requester);
}

// Gradients from a pure advisor/ask evaluation; the critic never participates.
double set_loss(const agent::Minibatch& batch, const Networks& nets, bool advisor_term,
                NetworkGrads* grads) {
  if (grads) zero_grads(nets, *grads);
  if (batch.size() == 0) return 0.0;
  nn::MlpTape actor_tape, req_tape;
  agent::HeadOutputs out;
  out.actor_logits = nn::mlp_forward_batch(nets.actor, batch.observations, grads ? &actor_tape : nullptr);
  out.values = nn::Matrix::Zero(1, batch.observations.cols());
  if (nets.requester)
    out.requester_logits =
        nn::mlp_forward_batch(*nets.requester, batch.observations, grads ? &req_tape : nullptr);
  agent::HeadGrads head;
  if (grads) head = agent::HeadGrads::zeros_like(out);
  const double loss = advisor_term ? advisor_loss(batch, out, 1.0, grads ? &head : nullptr)
                                   : ask_loss(batch, out, 1.0, grads ? &head : nullptr);
  if (grads) {
    grads->actor = nn::mlp_backward(nets.actor, actor_tape, head.actor);
    if (nets.requester) grads->requester = nn::mlp_backward(*nets.requester, req_tape, head.requester);
  }
  return loss;
}

}  // namespace

double advisor_loss(const AdvisorExampleSet& examples, const Networks& nets, NetworkGrads* grads) {
  const std::size_t obs = examples.empty() ? nets.actor.input_size() : examples.observations.front().size();
  auto batch = batch_of(examples.observations, obs);
  const double w = examples.empty() ? 0.0 : 1.0 / static_cast<double>(examples.size());
  for (std::size_t j = 0; j < examples.size(); ++j) {
    batch.advisor_label[j] = examples.actions[j];
    batch.advisor_weight[j] = w;
  }
  return set_loss(batch, nets, true, grads);
}

double ask_loss(std::span<const std::vector<double>> unstable_states, const Networks& nets,
                NetworkGrads* grads) {
  auto batch = batch_of(unstable_states, nets.actor.input_size());
  const double w = unstable_states.empty() ? 0.0 : 1.0 / static_cast<double>(unstable_states.size());
  std::fill(batch.ask_weight.begin(), batch.ask_weight.end(), w);
  return set_loss(batch, nets, false, grads);
}

// ---------------------------------------------------------------- decisions

MetaDecision decide_meta(const nn::MlpParams& requester, std::span<const double> observation,
                         Rng& rng) {
  if (requester.output_size() != 2) throw ContractViolation("decide_meta: requester must have 2 outputs");
  const nn::Vector logits = nn::mlp_forward(requester, observation);
  const auto dist = nn::softmax(nn::as_span(logits));
  const auto y = nn::sample_action(dist, rng);
  const nn::Matrix lp = nn::log_softmax_columns(logits);
  return {static_cast<MetaAction>(y), lp(static_cast<Eigen::Index>(y), 0)};
}

double heu_importance(const nn::MlpParams& actor, std::span<const double> observation) {
  const nn::Vector logits = nn::mlp_forward(actor, observation);
  const auto dist = nn::softmax(nn::as_span(logits));
  const auto [lo, hi] = std::minmax_element(dist.probs.begin(), dist.probs.end());
  return *hi - *lo;
}

// ---------------------------------------------------------------- trainer

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::Plain: return "plain";
    case Mode::Ask: return "ask";
    case Mode::Continuous: return "continuous";
    case Mode::Heuristic: return "heuristic";
  }
  return "?";
}

std::uint64_t TrainerConfig::iterations() const {
  return ac.steps_per_iteration == 0 ? 0 : total_steps / ac.steps_per_iteration;
}

void TrainerConfig::validate() const {
  ac.validate();
  SelectorState{0.0, beta, delta, 0}.validate();
  if (!(weights.advisor >= 0.0)) throw ConfigError("advisor_loss_coeff must be nonnegative");
  if (!(weights.ask >= 0.0)) throw ConfigError("ask_loss_coeff must be nonnegative");
  if (!(heu_threshold >= 0.0 && heu_threshold <= 1.0)) throw ConfigError("heu_threshold must lie in [0,1]");
  if (iterations() == 0) throw ConfigError("total_steps is smaller than one iteration");
}

namespace {

bool uses_advisor(Mode m) { return m != Mode::Plain; }

}  // namespace

Trainer::Trainer(TrainerConfig config, envs::Environment& env, advisors::Advisor* advisor)
    : config_(std::move(config)),
      env_(env),
      advisor_(advisor),
      nets_(init_networks(env.observation_size(), env.action_count(), config_.ac,
                          config_.mode == Mode::Ask && config_.requester, config_.requester_init,
                          Rng(config_.seed))),
      actor_opt_(nets_.actor, config_.ac.learning_rate),
      critic_opt_(nets_.critic, config_.ac.learning_rate),
      selector_{0.0, config_.beta, config_.delta, 0},
      buffer_(env.observation_size(), config_.ac.steps_per_iteration),
      reset_rng_(Rng(config_.seed).fork(streams::kEnvReset)),
      action_rng_(Rng(config_.seed).fork(streams::kActionSample)),
      meta_rng_(Rng(config_.seed).fork(streams::kMetaDecision)),
      minibatch_rng_(Rng(config_.seed).fork(streams::kMinibatch)) {
  config_.validate();
  if (uses_advisor(config_.mode) && advisor_ == nullptr)
    throw ConfigError(to_string(config_.mode) + " training needs an advisor");
  if (nets_.requester) requester_opt_.emplace(*nets_.requester, config_.ac.learning_rate);
  buffer_.has_requester = nets_.requester.has_value();
  if (uses_advisor(config_.mode)) advisor_->announce(env_.tag(), env_.action_names());
  observation_ = env_.reset(reset_rng_);
}

int Trainer::query_advisor(std::span<const double> observation, bool& answered) {
  advisors::AdvisorQuery q;
  q.env = env_.tag();
  q.state.assign(observation.begin(), observation.end());
  q.legal.resize(env_.action_count());
  std::iota(q.legal.begin(), q.legal.end(), 0);
  q.id = next_query_id_++;
  if (advisor_->wants_render()) q.render = env_.render();
  const auto reply = advisor_->query(q);
  if (!reply) {
    answered = false;
    ++timeouts_;
    return -1;
  }
  if (reply->id != q.id) throw ContractViolation("advisor replied to the wrong query");
  if (reply->action < 0 || static_cast<std::size_t>(reply->action) >= env_.action_count())
    throw ContractViolation("advisor returned an illegal action");
  answered = true;
  return reply->action;
}

const agent::RolloutBuffer& Trainer::sample_episode() {
  buffer_.clear();
  const auto steps = config_.ac.steps_per_iteration;
  bool ended = false;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::span<const double> obs(observation_);
    const nn::Vector actor_logits = nn::mlp_forward(nets_.actor, obs);
    const auto pi = nn::softmax(nn::as_span(actor_logits));
    const nn::Matrix actor_lp = nn::log_softmax_columns(actor_logits);
    auto sample_policy = [&] {
      return static_cast<int>(nn::sample_action(pi, action_rng_));
    };

    agent::RolloutBuffer::Step step;
    step.observation = obs;
    step.value = nn::mlp_forward(nets_.critic, obs)(0);

    bool ask = false;
    switch (config_.mode) {
      case Mode::Plain: break;
      case Mode::Ask:
        if (nets_.requester) {
          const auto md = decide_meta(*nets_.requester, obs, meta_rng_);
          step.behavior_logp = md.log_prob;
          ask = md.meta == MetaAction::Ask;
        }
        break;
      case Mode::Continuous: ask = true; break;
      case Mode::Heuristic: {
        const auto [lo, hi] = std::minmax_element(pi.probs.begin(), pi.probs.end());
        ask = *hi - *lo < config_.heu_threshold;
        break;
      }
    }
    step.meta = ask ? MetaAction::Ask : MetaAction::Exec;

    bool answered = false;
    const int advised = ask ? query_advisor(obs, answered) : -1;
    step.advisor_action = answered ? advised : -1;
    if (answered && config_.mode != Mode::Continuous) {
      step.action = advised;
      step.from_policy = false;
    } else {
      step.action = sample_policy();
      step.from_policy = true;
      step.behavior_logp += actor_lp(step.action, 0);
    }

    const auto result = env_.step(step.action);
    ++global_step_;
    episode_return_ += result.reward;
    step.reward = result.reward;
    step.terminal = result.terminal;
    step.truncated = result.truncated;
    if (result.truncated && !result.terminal)
      step.truncation_value = nn::mlp_forward(nets_.critic, result.observation)(0);
    buffer_.push(step);

    ended = result.done();
    if (ended) {
      finished_returns_.push_back(episode_return_);
      episode_return_ = 0.0;
      observation_ = env_.reset(reset_rng_);
    } else {
      observation_ = result.observation;
    }
  }
  buffer_.bootstrap_value = ended ? 0.0 : nn::mlp_forward(nets_.critic, observation_)(0);
  return buffer_;
}

IterationStats Trainer::run_iteration() {
  if (finished()) throw ContractViolation("trainer: all iterations already ran");
  const auto& ac = config_.ac;
  const std::uint64_t horizon = config_.iterations() * ac.steps_per_iteration;
  const double eps = ac.anneal ? agent::anneal_fraction(global_step_, horizon) : 1.0;
  actor_opt_.set_anneal(eps);
  critic_opt_.set_anneal(eps);
  if (requester_opt_) requester_opt_->set_anneal(eps);

  const std::size_t timeouts_before = timeouts_;
  sample_episode();
  agent::finalize_rollout(buffer_, ac.gamma, ac.gae_lambda);
  const auto selection = run_selector(selector_, buffer_.values, buffer_.returns);

  IterationStats stats;
  stats.iteration = ++iteration_;
  stats.global_step = global_step_;
  stats.anneal = eps;
  stats.episodes = finished_returns_.size();
  if (!finished_returns_.empty()) {
    last_train_return_ = std::accumulate(finished_returns_.begin(), finished_returns_.end(), 0.0) /
                         static_cast<double>(finished_returns_.size());
    finished_returns_.clear();
  }
  stats.train_return = last_train_return_;
  stats.ask_count = buffer_.ask_count();
  stats.roa = static_cast<double>(stats.ask_count) / static_cast<double>(buffer_.size());
  stats.advisor_examples = static_cast<std::size_t>(
      std::count_if(buffer_.advisor_action.begin(), buffer_.advisor_action.end(),
                    [](int a) { return a >= 0; }));
  stats.timeouts = timeouts_ - timeouts_before;
  stats.value_loss = selection.value_loss;
  stats.ewma = selection.ewma;
  stats.unstable_rate = selection.rate;
  stats.unstable_count = selection.count;

  update(selection, stats);

  if (uses_advisor(config_.mode))
    advisor_->publish_stats(stats.iteration, stats.roa, stats.train_return);
  return stats;
}

void Trainer::update(const UnstableSelection& selection, IterationStats& stats) {
  const auto& ac = config_.ac;
  const std::size_t n = buffer_.size();
  const std::size_t mb = std::min(ac.minibatch_size, n);

  std::vector<double> advantages = buffer_.advantages;
  if (ac.algorithm == agent::Algorithm::PPO) agent::normalize_advantages(advantages);

  std::vector<std::uint8_t> in_unstable(n, 0);
  for (auto i : selection.states) in_unstable[i] = 1;
  const double labelled = static_cast<double>(stats.advisor_examples);
  const double unstable = static_cast<double>(selection.states.size());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double sum_policy = 0, sum_value = 0, sum_entropy = 0, sum_adv = 0, sum_ask = 0, sum_total = 0;
  std::size_t batches = 0;
  for (int epoch = 0; epoch < ac.epochs; ++epoch) {
    if (mb < n)
      for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[minibatch_rng_.index(i + 1)]);
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t stop = std::min(start + mb, n);
      const std::span<const std::size_t> cols(order.data() + start, stop - start);
      auto batch = agent::gather(buffer_, cols);
      // Set-level means are recovered in expectation from per-batch sums.
      const double scale = static_cast<double>(n) / static_cast<double>(cols.size());
      for (std::size_t j = 0; j < cols.size(); ++j) {
        const auto i = cols[j];
        batch.advantages[j] = advantages[i];
        batch.advisor_label[j] = buffer_.advisor_action[i];
        if (buffer_.advisor_action[i] >= 0) batch.advisor_weight[j] = scale / labelled;
        if (in_unstable[i]) batch.ask_weight[j] = scale / unstable;
      }

      NetworkGrads grads;
      const auto l = evaluate_batch(nets_, batch, ac, stats.anneal, config_.weights, &grads);
      if (!std::isfinite(l.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at iteration " << stats.iteration << " (policy " << l.org.policy
            << ", value " << l.org.value << ", advisor " << l.advisor << ", ask " << l.ask << ")";
        throw NumericError(msg.str());
      }
      nn::clip_grad_norm(grads.actor, ac.max_grad_norm);
      nn::clip_grad_norm(grads.critic, ac.max_grad_norm);
      nn::optimizer_step(nets_.actor, grads.actor, actor_opt_);
      nn::optimizer_step(nets_.critic, grads.critic, critic_opt_);
      if (nets_.requester) {
        nn::clip_grad_norm(*grads.requester, ac.max_grad_norm);
        nn::optimizer_step(*nets_.requester, *grads.requester, *requester_opt_);
      }

      sum_policy += l.org.policy;
      sum_value += l.org.value;
      sum_entropy += l.org.entropy;
      sum_adv += l.advisor;
      sum_ask += l.ask;
      sum_total += l.total;
      ++batches;
    }
  }
  const double b = static_cast<double>(batches);
  stats.loss_policy = sum_policy / b;
  stats.loss_value = sum_value / b;
  stats.loss_entropy = sum_entropy / b;
  stats.loss_advisor = sum_adv / b;
  stats.loss_ask = sum_ask / b;
  stats.loss_total = sum_total / b;
}

TrainResult train(const TrainerConfig& config, envs::Environment& env, advisors::Advisor* advisor,
                  const std::function<void(const IterationStats&)>& on_iteration) {
  Trainer trainer(config, env, advisor);
  TrainResult result;
  while (!trainer.finished()) {
    auto stats = trainer.run_iteration();
    result.total_asks += stats.ask_count;
    if (on_iteration) on_iteration(stats);
    result.iterations.push_back(std::move(stats));
  }
  result.networks = trainer.networks();
  return result;
}

}  // namespace askac::ask
