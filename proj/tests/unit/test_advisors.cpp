#include <doctest.h>

#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <vector>

#include "askac/advisors.hpp"
#include "askac/envs.hpp"
#include "askac/errors.hpp"

using namespace askac;
using namespace askac::advisors;

namespace {

// Breadth-first search over full simulator states; independent of the planner.
int bfs_plan_length(const envs::DoorKeyState& start, int max_steps) {
  std::set<std::vector<double>> seen;
  std::deque<std::pair<envs::DoorKeyState, int>> frontier{{start, 0}};
  seen.insert(envs::encode_doorkey(start, start.size));
  while (!frontier.empty()) {
    auto [s, d] = frontier.front();
    frontier.pop_front();
    for (int a = 0; a < envs::kDoorKeyActionCount; ++a) {
      auto tr = envs::doorkey_dynamics(s, a, max_steps);
      if (tr.terminal) return d + 1;
      tr.next.steps = 0;
      if (seen.insert(envs::encode_doorkey(tr.next, tr.next.size)).second)
        frontier.emplace_back(tr.next, d + 1);
    }
  }
  return -1;
}

AdvisorQuery cartpole_query(std::uint64_t id, std::vector<double> state) {
  AdvisorQuery q;
  q.env = "cartpole";
  q.state = std::move(state);
  q.legal = {0, 1};
  q.id = id;
  return q;
}

}  // namespace

TEST_CASE("cartpole expert: pushes toward the fall and is deterministic") {
  CHECK(cartpole_expert(std::vector<double>{0, 0, 0.05, 0.1}) == envs::kPushRight);
  CHECK(cartpole_expert(std::vector<double>{0, 0, -0.05, -0.1}) == envs::kPushLeft);
  const std::vector<double> s{0.3, -0.2, 0.01, -0.04};
  for (int i = 0; i < 10; ++i) CHECK(cartpole_expert(s) == cartpole_expert(s));
  CHECK_THROWS_AS(cartpole_expert(std::vector<double>{0, 0}), ContractViolation);
}

TEST_CASE("cartpole expert: advisor-only return >= 490 over 100 episodes for L in {0.5, 1, 2}") {
  for (double L : {0.5, 1.0, 2.0}) {
    envs::CartPoleParams p;
    p.pole_half_length = L;
    envs::CartPoleEnv env(p);
    Rng rng(17);
    double total = 0;
    for (int ep = 0; ep < 100; ++ep) {
      env.reset(rng);
      envs::StepResult r;
      do {
        r = env.step(cartpole_expert(env.observation()));
        total += r.reward;
      } while (!r.done());
    }
    CAPTURE(L);
    CHECK(total / 100.0 >= 490.0);
  }
}

TEST_CASE("doorkey expert: facing the goal next door means forward") {
  Rng rng(0);
  auto s = envs::generate_doorkey(5, rng);
  s.agent = {3, 2};
  s.heading = 1;
  s.carrying_key = true;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x)
      if (s.at({x, y}) == envs::Cell::DoorLocked) s.at({x, y}) = envs::Cell::DoorOpen;
  CHECK(doorkey_expert(envs::encode_doorkey(s, 5)) == envs::kForward);
}

TEST_CASE("doorkey plan length equals the BFS shortest path on 300 layouts and three sizes") {
  for (int size : {5, 6, 8}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed);
      const auto s = envs::generate_doorkey(size, rng);
      const auto plan = doorkey_plan(s);
      REQUIRE(plan.has_value());
      CHECK(static_cast<int>(plan->size()) == bfs_plan_length(s, 10 * size * size));
    }
  }
}

TEST_CASE("doorkey expert: closed-loop episode is BFS-optimal and scores at least 0.9 on 5x5") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    envs::DoorKeyEnv env(envs::GridWorldConfig{5, 0});
    Rng rng(seed);
    env.reset(rng);
    const int optimal = bfs_plan_length(env.state(), 250);
    int steps = 0;
    envs::StepResult r;
    do {
      r = env.step(doorkey_expert(env.observation()));
      ++steps;
    } while (!r.done());
    CHECK(r.terminal);
    CHECK(steps == optimal);
    CHECK(r.reward >= 0.9);
    CHECK(std::abs(r.reward - (1.0 - 0.9 * steps / 250.0)) < 1e-15);
  }
}

TEST_CASE("doorkey expert works on a padded canvas") {
  envs::DoorKeyEnv env(envs::GridWorldConfig{6, 8});
  Rng rng(3);
  env.reset(rng);
  envs::StepResult r;
  do r = env.step(doorkey_expert(env.observation()));
  while (!r.done());
  CHECK(r.terminal);
}

TEST_CASE("scripted advisor dispatches on the environment tag") {
  ScriptedAdvisor adv;
  const auto r = adv.query(cartpole_query(9, {0, 0, 0.1, 0}));
  REQUIRE(r.has_value());
  CHECK(r->id == 9);
  CHECK(r->action == envs::kPushRight);
  AdvisorQuery bad;
  bad.env = "lunarlander";
  bad.legal = {0};
  CHECK_THROWS_AS(adv.query(bad), ConfigError);
}

TEST_CASE("noisy advisor: accuracy 1 is the inner advisor on 1e4 queries") {
  NoisyAdvisor noisy(std::make_unique<ScriptedAdvisor>(), 1.0, Rng(1));
  Rng states(2);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    std::vector<double> s{states.normal(), states.normal(), 0.1 * states.normal(), states.normal()};
    CHECK(noisy.query(cartpole_query(i, s))->action == cartpole_expert(s));
  }
}

TEST_CASE("noisy advisor: accuracy 0 is uniform over legal actions (chi-square, 1e5 draws)") {
  NoisyAdvisor noisy(std::make_unique<ScriptedAdvisor>(), 0.0, Rng(3));
  AdvisorQuery q;
  q.env = "doorkey";
  q.legal = {0, 1, 2, 3, 4};
  std::map<int, int> counts;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    q.id = i;
    ++counts[noisy.query(q)->action];
  }
  double chi2 = 0.0;
  for (int a = 0; a < 5; ++a) {
    const double e = 20000.0;
    chi2 += (counts[a] - e) * (counts[a] - e) / e;
  }
  CHECK(counts.size() == 5);
  CHECK(chi2 < 18.467);  // chi-square 4 dof, upper 0.001 quantile
}

TEST_CASE("noisy advisor: accuracy 0.5 agrees with the expert about 75% of the time") {
  NoisyAdvisor noisy(std::make_unique<ScriptedAdvisor>(), 0.5, Rng(4));
  Rng states(5);
  int agree = 0;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    std::vector<double> s{states.normal(), states.normal(), 0.1 * states.normal(), states.normal()};
    agree += noisy.query(cartpole_query(i, s))->action == cartpole_expert(s);
  }
  CHECK(agree / 1e4 >= 0.70);
  CHECK(agree / 1e4 <= 0.80);
}

TEST_CASE("protocol: message shapes") {
  const auto hello = nlohmann::json::parse(protocol::hello("cartpole", {"left", "right"}));
  CHECK(hello["type"] == "hello");
  CHECK(hello["env"] == "cartpole");
  CHECK(hello["actions"] == nlohmann::json{"left", "right"});

  auto q = cartpole_query(12, {0.5, 0, 0, 0});
  q.render = {{"x", 0.5}};
  const auto ask = nlohmann::json::parse(protocol::ask(q));
  CHECK(ask["type"] == "ask");
  CHECK(ask["id"] == 12);
  CHECK(ask["state"][0] == 0.5);
  CHECK(ask["legal"] == nlohmann::json{0, 1});
  CHECK(ask["render"]["x"] == 0.5);

  CHECK(protocol::feedback(7, 2) == R"({"action":2,"id":7,"type":"feedback"})");
  const auto st = nlohmann::json::parse(protocol::stats(3, 0.25, 480.0));
  CHECK(st["type"] == "stats");
  CHECK(st["iter"] == 3);
  CHECK(st["roa"] == 0.25);
  CHECK(st["return"] == 480.0);
}

TEST_CASE("protocol: feedback parsing and rejection") {
  const auto r = protocol::parse_feedback(protocol::parse(R"({"type":"feedback","id":4,"action":1})"));
  CHECK(r.id == 4);
  CHECK(r.action == 1);
  CHECK_THROWS_AS(protocol::parse("not json"), ProtocolError);
  CHECK_THROWS_AS(protocol::parse("[1,2]"), ProtocolError);
  CHECK_THROWS_AS(protocol::parse(R"({"id":1})"), ProtocolError);
  CHECK_THROWS_AS(protocol::parse_feedback(protocol::parse(R"({"type":"feedback","action":1})")), ProtocolError);
  CHECK_THROWS_AS(protocol::parse_feedback(protocol::parse(R"({"type":"feedback","id":1,"action":"x"})")), ProtocolError);
  CHECK_THROWS_AS(protocol::parse_feedback(protocol::parse(R"({"type":"feedback","id":-1,"action":0})")), ProtocolError);
  CHECK_THROWS_AS(protocol::parse_feedback(protocol::parse(R"({"type":"stats","iter":1})")), ProtocolError);
}
