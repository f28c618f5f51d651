#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "askac/agent.hpp"
#include "askac/errors.hpp"
#include "support.hpp"

using namespace askac;
using namespace askac::agent;
using nn::Matrix;

namespace {

// Direct O(T^2) discounted sums; the oracle for both returns and GAE.
std::vector<double> brute_returns(const std::vector<double>& r, const std::vector<std::uint8_t>& term,
                                  const std::vector<std::uint8_t>& trunc,
                                  const std::vector<double>& tv, double boot, double gamma) {
  const std::size_t n = r.size();
  std::vector<double> g(n);
  for (std::size_t t = 0; t < n; ++t) {
    double sum = 0.0, disc = 1.0;
    std::size_t k = t;
    for (; k < n; ++k) {
      sum += disc * r[k];
      disc *= gamma;
      if (term[k]) break;
      if (trunc[k]) {
        sum += disc * tv[k];
        break;
      }
    }
    if (k == n) sum += disc * boot;
    g[t] = sum;
  }
  return g;
}

std::vector<double> brute_gae(const std::vector<double>& r, const std::vector<double>& v,
                              const std::vector<std::uint8_t>& term,
                              const std::vector<std::uint8_t>& trunc,
                              const std::vector<double>& tv, double boot, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t k = 0; k < n; ++k) {
    double next = k + 1 < n ? v[k + 1] : boot;
    if (term[k]) next = 0.0;
    else if (trunc[k]) next = tv[k];
    delta[k] = r[k] + gamma * next - v[k];
  }
  std::vector<double> a(n);
  for (std::size_t t = 0; t < n; ++t) {
    double sum = 0.0;
    for (std::size_t k = t; k < n; ++k) {
      sum += std::pow(gamma * lambda, static_cast<double>(k - t)) * delta[k];
      if (term[k] || trunc[k]) break;
    }
    a[t] = sum;
  }
  return a;
}

struct Episode {
  std::vector<double> rewards, values, truncation_values;
  std::vector<std::uint8_t> terminal, truncated;
  double bootstrap = 0.0;
};

Episode random_episode(Rng& rng, std::size_t n) {
  Episode e;
  for (std::size_t i = 0; i < n; ++i) {
    e.rewards.push_back(rng.normal());
    e.values.push_back(rng.normal());
    const double u = rng.uniform();
    e.terminal.push_back(u < 0.1);
    e.truncated.push_back(u >= 0.1 && u < 0.15);
    e.truncation_values.push_back(e.truncated.back() ? rng.normal() : 0.0);
  }
  e.bootstrap = rng.normal();
  return e;
}

Minibatch random_batch(Rng& rng, std::size_t n, std::size_t actions, bool requester,
                       const HeadOutputs& out, double logp_noise) {
  Minibatch b;
  b.observations = Matrix::Zero(1, static_cast<Eigen::Index>(n));
  for (std::size_t t = 0; t < n; ++t) {
    b.meta.push_back(requester && rng.uniform() < 0.4 ? MetaAction::Ask : MetaAction::Exec);
    b.actions.push_back(static_cast<int>(rng.index(actions)));
    b.from_policy.push_back(b.meta.back() == MetaAction::Exec || rng.uniform() < 0.2);
    b.advantages.push_back(rng.normal());
    b.returns.push_back(rng.normal());
    b.advisor_label.push_back(-1);
    b.advisor_weight.push_back(0.0);
    b.ask_weight.push_back(0.0);
  }
  b.behavior_logp.assign(n, 0.0);
  const auto lp = joint_log_prob(b, out);
  for (std::size_t t = 0; t < n; ++t) b.behavior_logp[t] = lp[t] + logp_noise * rng.normal();
  return b;
}

HeadOutputs random_outputs(Rng& rng, std::size_t n, std::size_t actions, bool requester) {
  HeadOutputs o;
  const auto cols = static_cast<Eigen::Index>(n);
  o.actor_logits = test::random_matrix(static_cast<Eigen::Index>(actions), cols, rng);
  o.values = test::random_matrix(1, cols, rng);
  if (requester) o.requester_logits = test::random_matrix(2, cols, rng);
  return o;
}

using LossFn = std::function<double(const HeadOutputs&, HeadGrads*)>;

// Central differences over every output entry vs the accumulated output gradient.
double output_fd_error(HeadOutputs out, const LossFn& f) {
  auto analytic = HeadGrads::zeros_like(out);
  f(out, &analytic);
  double worst = 0.0;
  auto sweep = [&](Matrix& m, const Matrix& g) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double keep = m.data()[i];
      m.data()[i] = keep + 1e-5;
      const double up = f(out, nullptr);
      m.data()[i] = keep - 1e-5;
      const double down = f(out, nullptr);
      m.data()[i] = keep;
      const double fd = (up - down) / 2e-5;
      const double a = g.data()[i];
      const double scale = std::max(std::abs(a), std::abs(fd));
      if (scale > 1e-7) worst = std::max(worst, std::abs(a - fd) / scale);
    }
  };
  sweep(out.actor_logits, analytic.actor);
  sweep(out.values, analytic.critic);
  if (out.has_requester()) sweep(out.requester_logits, analytic.requester);
  return worst;
}

}  // namespace

TEST_CASE("returns: small examples") {
  const std::vector<double> ones{1, 1, 1};
  const std::vector<std::uint8_t> end{0, 0, 1};
  const auto g = compute_returns(ones, end, 0.0, 1.0);
  CHECK(g == std::vector<double>{3, 2, 1});
  const std::vector<double> r{1, 0, 0};
  CHECK(compute_returns(r, end, 0.0, 0.5) == std::vector<double>{1, 0, 0});
  // a terminal step blocks the bootstrap
  CHECK(compute_returns(ones, end, 100.0, 1.0) == std::vector<double>{3, 2, 1});
}

TEST_CASE("returns match the direct-summation oracle on 1000 random instances") {
  Rng rng(101);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto e = random_episode(rng, 1 + rng.index(40));
    const double gamma = rng.uniform();
    const auto g = compute_returns(e.rewards, e.terminal, e.truncated, e.truncation_values,
                                   e.bootstrap, gamma);
    const auto o = brute_returns(e.rewards, e.terminal, e.truncated, e.truncation_values,
                                 e.bootstrap, gamma);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g[i] - o[i]) < 1e-10);
  }
}

TEST_CASE("gae: lambda = 1 telescopes to G - V; lambda = 0 is the one-step TD error") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto e = random_episode(rng, 20);
    const double gamma = 0.99;
    const auto g = compute_returns(e.rewards, e.terminal, e.truncated, e.truncation_values,
                                   e.bootstrap, gamma);
    const auto a1 = compute_gae(e.rewards, e.values, e.terminal, e.truncated, e.truncation_values,
                                e.bootstrap, gamma, 1.0);
    for (std::size_t t = 0; t < 20; ++t) CHECK(std::abs(a1[t] - (g[t] - e.values[t])) < 1e-10);
    const auto a0 = compute_gae(e.rewards, e.values, e.terminal, e.truncated, e.truncation_values,
                                e.bootstrap, gamma, 0.0);
    for (std::size_t t = 0; t < 20; ++t) {
      double next = t + 1 < 20 ? e.values[t + 1] : e.bootstrap;
      if (e.terminal[t]) next = 0.0;
      else if (e.truncated[t]) next = e.truncation_values[t];
      CHECK(std::abs(a0[t] - (e.rewards[t] + gamma * next - e.values[t])) < 1e-12);
    }
  }
}

TEST_CASE("gae matches the double-loop oracle on 1000 random instances") {
  Rng rng(202);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto e = random_episode(rng, 1 + rng.index(40));
    const double gamma = rng.uniform(), lambda = rng.uniform();
    const auto a = compute_gae(e.rewards, e.values, e.terminal, e.truncated, e.truncation_values,
                               e.bootstrap, gamma, lambda);
    const auto o = brute_gae(e.rewards, e.values, e.terminal, e.truncated, e.truncation_values,
                             e.bootstrap, gamma, lambda);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - o[i]) < 1e-10);
  }
}

TEST_CASE("gae: values with a trailing bootstrap entry") {
  const std::vector<double> r{1, 1};
  const std::vector<double> v{0.5, 0.25, 2.0};
  const std::vector<std::uint8_t> d{0, 0};
  const auto a = compute_gae(r, v, d, 0.9, 0.8);
  const double d1 = 1 + 0.9 * 2.0 - 0.25;
  const double d0 = 1 + 0.9 * 0.25 - 0.5;
  CHECK(std::abs(a[1] - d1) < 1e-15);
  CHECK(std::abs(a[0] - (d0 + 0.72 * d1)) < 1e-15);
  const std::vector<double> short_v{0.5, 0.25};
  CHECK_THROWS_AS(compute_gae(r, short_v, d, 0.9, 0.8), ContractViolation);
}

TEST_CASE("finalize_rollout sets returns = advantages + values") {
  Rng rng(3);
  RolloutBuffer buf(2, 16);
  std::vector<double> obs{0.0, 0.0};
  for (int t = 0; t < 16; ++t) {
    RolloutBuffer::Step s;
    s.observation = obs;
    s.reward = rng.normal();
    s.value = rng.normal();
    s.terminal = t == 7;
    buf.push(s);
  }
  buf.bootstrap_value = 0.3;
  finalize_rollout(buf, 0.99, 0.95);
  for (std::size_t t = 0; t < 16; ++t)
    CHECK(std::abs(buf.returns[t] - (buf.advantages[t] + buf.values[t])) < 1e-15);
  CHECK(buf.size() == 16);
  CHECK_THROWS_AS(buf.push(RolloutBuffer::Step{obs}), ContractViolation);
}

TEST_CASE("normalize_advantages: zero mean, unit population std, affine invariant") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(2 + rng.index(50));
    for (auto& x : a) x = rng.normal();
    auto n1 = a;
    normalize_advantages(n1);
    const double mean = std::accumulate(n1.begin(), n1.end(), 0.0) / static_cast<double>(n1.size());
    double var = 0;
    for (double x : n1) var += (x - mean) * (x - mean);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(var / static_cast<double>(n1.size()) - 1.0) < 1e-12);
    const double scale = 0.01 + 100.0 * rng.uniform(), shift = 10.0 * rng.normal();
    auto n2 = a;
    for (auto& x : n2) x = scale * x + shift;
    normalize_advantages(n2);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(n1[i] - n2[i]) < 1e-9);
  }
  std::vector<double> c(5, 3.0);
  normalize_advantages(c);
  for (double x : c) CHECK(x == 0.0);
}

TEST_CASE("anneal_fraction examples") {
  CHECK(anneal_fraction(0, 1000) == 1.0);
  CHECK(anneal_fraction(1000, 1000) == 0.0);
  CHECK(anneal_fraction(500, 1000) == 0.5);
  CHECK_THROWS_AS(anneal_fraction(1001, 1000), ContractViolation);
  CHECK_THROWS_AS(anneal_fraction(0, 0), ContractViolation);
}

TEST_CASE("clipped surrogate: ratio 2, advantage 1, clip 0.2 contributes 1.2") {
  HeadOutputs out;
  out.actor_logits = Matrix::Zero(2, 1);  // pi(a) = 0.5
  out.values = Matrix::Zero(1, 1);
  Minibatch b;
  b.observations = Matrix::Zero(1, 1);
  b.meta = {MetaAction::Exec};
  b.actions = {0};
  b.from_policy = {1};
  b.behavior_logp = {std::log(0.25)};  // rho = 0.5 / 0.25 = 2
  b.advantages = {1.0};
  b.returns = {0.0};
  b.advisor_label = {-1};
  b.advisor_weight = {0.0};
  b.ask_weight = {0.0};
  auto g = HeadGrads::zeros_like(out);
  CHECK(clipped_surrogate_loss(b, out, 0.2, &g) == doctest::Approx(-1.2).epsilon(1e-14));
  CHECK(g.actor.cwiseAbs().maxCoeff() == 0.0);  // clipped side carries no gradient
  // negative advantage: min(2 * -1, 1.2 * -1) = -2, unclipped branch
  b.advantages = {-1.0};
  CHECK(clipped_surrogate_loss(b, out, 0.2, nullptr) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("ppo: identical old and new policy gives rho = 1 and surrogate -mean A") {
  Rng rng(9);
  const auto out = random_outputs(rng, 32, 3, true);
  auto b = random_batch(rng, 32, 3, true, out, 0.0);
  normalize_advantages(b.advantages);
  const double l = clipped_surrogate_loss(b, out, 0.2, nullptr);
  CHECK(std::abs(l) < 1e-12);
  AcConfig cfg;
  cfg.clip = 0.2;
  const auto lp = joint_log_prob(b, out);
  for (std::size_t t = 0; t < 32; ++t) CHECK(std::exp(lp[t] - b.behavior_logp[t]) == 1.0);
  CHECK(std::abs(ppo_loss(b, out, cfg, 0.5, nullptr).policy) < 1e-12);
}

TEST_CASE("a2c: zero advantages and exact values give zero policy and value terms") {
  Rng rng(10);
  auto out = random_outputs(rng, 8, 2, false);
  auto b = random_batch(rng, 8, 2, false, out, 0.0);
  std::fill(b.advantages.begin(), b.advantages.end(), 0.0);
  for (std::size_t t = 0; t < 8; ++t) b.returns[t] = out.values(0, static_cast<Eigen::Index>(t));
  AcConfig cfg = AcConfig::cartpole_defaults(Algorithm::A2C);
  const auto l = a2c_loss(b, out, cfg, nullptr);
  CHECK(l.policy == 0.0);
  CHECK(l.value == 0.0);
}

TEST_CASE("joint log-prob: requester term always, actor term only for policy actions") {
  Rng rng(12);
  const auto out = random_outputs(rng, 16, 3, true);
  const auto b = random_batch(rng, 16, 3, true, out, 0.0);
  const Matrix la = nn::log_softmax_columns(out.actor_logits);
  const Matrix lg = nn::log_softmax_columns(out.requester_logits);
  const auto lp = joint_log_prob(b, out);
  for (std::size_t t = 0; t < 16; ++t) {
    const auto c = static_cast<Eigen::Index>(t);
    double expected = lg(static_cast<int>(b.meta[t]), c);
    if (b.from_policy[t]) expected += la(b.actions[t], c);
    CHECK(std::abs(lp[t] - expected) < 1e-15);
  }
}

TEST_CASE("a2c loss gradient matches central differences on a 5-step batch") {
  for (bool requester : {false, true}) {
    Rng rng(requester ? 31 : 30);
    const auto out = random_outputs(rng, 5, 3, requester);
    const auto b = random_batch(rng, 5, 3, requester, out, 0.3);
    AcConfig cfg = AcConfig::cartpole_defaults(Algorithm::A2C);
    cfg.entropy_coeff = 0.01;
    const double err = output_fd_error(out, [&](const HeadOutputs& o, HeadGrads* g) {
      return a2c_loss(b, o, cfg, g).total();
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("ppo loss gradient matches central differences away from the clip kinks") {
  for (bool requester : {false, true}) {
    Rng rng(requester ? 41 : 40);
    const auto out = random_outputs(rng, 24, 2, requester);
    auto b = random_batch(rng, 24, 2, requester, out, 0.4);
    const double clip = 0.2 * 0.7;
    // Keep every ratio at least 1e-3 from the clip boundaries.
    const auto lp = joint_log_prob(b, out);
    for (std::size_t t = 0; t < b.size(); ++t) {
      const double rho = std::exp(lp[t] - b.behavior_logp[t]);
      if (std::abs(rho - (1 - clip)) < 1e-3 || std::abs(rho - (1 + clip)) < 1e-3)
        b.behavior_logp[t] += 0.01;
    }
    AcConfig cfg;
    cfg.entropy_coeff = 0.01;
    const double err = output_fd_error(out, [&](const HeadOutputs& o, HeadGrads* g) {
      return ppo_loss(b, o, cfg, 0.7, g).total();
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("ppo clip is annealed only when annealing is on") {
  Rng rng(50);
  const auto out = random_outputs(rng, 64, 2, false);
  const auto b = random_batch(rng, 64, 2, false, out, 0.5);
  AcConfig on;
  on.clip = 0.2;
  AcConfig off = on;
  off.anneal = false;
  CHECK(ppo_loss(b, out, on, 0.5, nullptr).policy == clipped_surrogate_loss(b, out, 0.1, nullptr));
  CHECK(ppo_loss(b, out, off, 0.5, nullptr).policy == clipped_surrogate_loss(b, out, 0.2, nullptr));
}

TEST_CASE("hyperparameter tables") {
  const auto cp = AcConfig::cartpole_defaults(Algorithm::PPO);
  CHECK(cp.steps_per_iteration == 2048);
  CHECK(cp.learning_rate == 1e-3);
  CHECK(cp.epochs == 10);
  CHECK(cp.minibatch_size == 256);
  CHECK(cp.gae_lambda == 0.95);
  CHECK(cp.clip == 0.2);
  CHECK(cp.anneal);
  const auto ca = AcConfig::cartpole_defaults(Algorithm::A2C);
  CHECK(ca.steps_per_iteration == 40);
  CHECK(ca.learning_rate == 7e-4);
  CHECK(ca.gae_lambda == 1.0);
  const auto dp = AcConfig::doorkey_defaults(Algorithm::PPO);
  CHECK(dp.steps_per_iteration == 1024);
  CHECK(dp.learning_rate == 2.5e-4);
  CHECK(dp.minibatch_size == 64);
  CHECK_FALSE(dp.anneal);
  for (const auto& c : {cp, ca, dp}) {
    CHECK(c.gamma == 0.99);
    CHECK(c.max_grad_norm == 0.5);
    CHECK(c.vf_coeff == 0.5);
    CHECK(c.entropy_coeff == 0.0);
    CHECK(c.policy_hidden == std::vector<std::size_t>{64, 64});
    CHECK_NOTHROW(c.validate());
  }
  AcConfig bad = cp;
  bad.gamma = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
