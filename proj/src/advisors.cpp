#include "askac/advisors.hpp"

#include <algorithm>
#include <deque>
#include <string>

#include "askac/errors.hpp"

namespace askac::advisors {

int cartpole_expert(std::span<const double> obs) {
  if (obs.size() != 4) throw ContractViolation("cartpole_expert: expected a 4-dimensional observation");
  const double push = 0.01 * obs[0] + 0.05 * obs[1] + obs[2] + 0.2 * obs[3];
  return push > 0.0 ? envs::kPushRight : envs::kPushLeft;
}

namespace {

struct PlanNode {
  int x, y, heading;
  bool key, door;
};

}  // namespace

std::optional<std::vector<int>> doorkey_plan(const envs::DoorKeyState& s) {
  using envs::Cell;
  std::optional<envs::GridPos> key_at;
  std::optional<envs::GridPos> door_at;
  bool door_open = false;
  for (int y = 0; y < s.size; ++y) {
    for (int x = 0; x < s.size; ++x) {
      const Cell c = s.at({x, y});
      if (c == Cell::Key) key_at = envs::GridPos{x, y};
      if (c == Cell::DoorLocked || c == Cell::DoorOpen) {
        door_at = envs::GridPos{x, y};
        door_open = c == Cell::DoorOpen;
      }
    }
  }

  const int n = s.size;
  auto encode = [n](const PlanNode& v) {
    return (((v.y * n + v.x) * 4 + v.heading) * 2 + v.key) * 2 + v.door;
  };
  const auto states = static_cast<std::size_t>(n * n * 16);
  std::vector<int> parent(states, -2);
  std::vector<int> via(states, -1);

  // Cell type as seen under the node's key/door flags.
  auto cell = [&](const PlanNode& v, envs::GridPos p) {
    if (p.x < 0 || p.y < 0 || p.x >= n || p.y >= n) return Cell::Wall;
    if (key_at && p == *key_at) return v.key ? Cell::Empty : Cell::Key;
    if (door_at && p == *door_at) return v.door ? Cell::DoorOpen : Cell::DoorLocked;
    return s.at(p);
  };

  const PlanNode start{s.agent.x, s.agent.y, s.heading, s.carrying_key, door_open};
  std::deque<PlanNode> frontier{start};
  parent[static_cast<std::size_t>(encode(start))] = -1;
  while (!frontier.empty()) {
    const PlanNode v = frontier.front();
    frontier.pop_front();
    const auto d = envs::heading_offset(v.heading);
    const envs::GridPos ahead{v.x + d.x, v.y + d.y};
    const Cell front = cell(v, ahead);

    for (int action = 0; action < envs::kDoorKeyActionCount; ++action) {
      PlanNode w = v;
      switch (action) {
        case envs::kTurnLeft: w.heading = (v.heading + 3) % 4; break;
        case envs::kTurnRight: w.heading = (v.heading + 1) % 4; break;
        case envs::kForward:
          if (front == Cell::Goal) {
            std::vector<int> plan{action};
            for (int at = encode(v); parent[static_cast<std::size_t>(at)] != -1;
                 at = parent[static_cast<std::size_t>(at)])
              plan.push_back(via[static_cast<std::size_t>(at)]);
            std::reverse(plan.begin(), plan.end());
            return plan;
          }
          if (front != Cell::Empty && front != Cell::DoorOpen) continue;
          w.x = ahead.x;
          w.y = ahead.y;
          break;
        case envs::kPickup:
          if (front != Cell::Key || v.key) continue;
          w.key = true;
          break;
        case envs::kToggle:
          if (front != Cell::DoorLocked || !v.key) continue;
          w.door = true;
          break;
      }
      const auto id = static_cast<std::size_t>(encode(w));
      if (parent[id] != -2) continue;
      parent[id] = encode(v);
      via[id] = action;
      frontier.push_back(w);
    }
  }
  return std::nullopt;
}

int doorkey_expert(std::span<const double> observation) {
  const auto state = envs::decode_doorkey(observation);
  const auto plan = doorkey_plan(state);
  if (!plan || plan->empty()) throw ContractViolation("doorkey_expert: no plan reaches the goal");
  return plan->front();
}

std::optional<AdvisorReply> ScriptedAdvisor::query(const AdvisorQuery& q) {
  ++queries_;
  int action = 0;
  if (q.env == "cartpole") {
    action = cartpole_expert(q.state);
  } else if (q.env == "doorkey") {
    action = doorkey_expert(q.state);
  } else {
    throw ConfigError("scripted advisor: no expert for environment '" + q.env + "'");
  }
  return AdvisorReply{q.id, action};
}

NoisyAdvisor::NoisyAdvisor(std::unique_ptr<Advisor> inner, double accuracy, Rng rng)
    : inner_(std::move(inner)), accuracy_(accuracy), rng_(rng) {
  if (!inner_) throw ConfigError("noisy advisor needs an inner advisor");
  if (accuracy < 0.0 || accuracy > 1.0) throw ConfigError("advisor accuracy must lie in [0,1]");
}

std::optional<AdvisorReply> NoisyAdvisor::query(const AdvisorQuery& q) {
  if (q.legal.empty()) throw ContractViolation("noisy advisor: query without legal actions");
  const double u = rng_.uniform();
  if (u < accuracy_) return inner_->query(q);
  return AdvisorReply{q.id, q.legal[rng_.index(q.legal.size())]};
}

void NoisyAdvisor::announce(const std::string& env, const std::vector<std::string>& actions) {
  inner_->announce(env, actions);
}

void NoisyAdvisor::publish_stats(std::uint64_t iteration, double roa, double mean_return) {
  inner_->publish_stats(iteration, roa, mean_return);
}

namespace protocol {

std::string hello(const std::string& env, const std::vector<std::string>& actions) {
  return nlohmann::json{{"type", "hello"}, {"env", env}, {"actions", actions}}.dump();
}

std::string ask(const AdvisorQuery& q) {
  return nlohmann::json{{"type", "ask"},
                        {"id", q.id},
                        {"state", q.state},
                        {"render", q.render.is_null() ? nlohmann::json::object() : q.render},
                        {"legal", q.legal}}
      .dump();
}

std::string feedback(std::uint64_t id, int action) {
  return nlohmann::json{{"type", "feedback"}, {"id", id}, {"action", action}}.dump();
}

std::string stats(std::uint64_t iteration, double roa, double mean_return) {
  return nlohmann::json{{"type", "stats"}, {"iter", iteration}, {"roa", roa}, {"return", mean_return}}
      .dump();
}

Message parse(std::string_view text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ProtocolError("advisor protocol: message is not JSON");
  if (!j.is_object()) throw ProtocolError("advisor protocol: message is not an object");
  const auto type = j.find("type");
  if (type == j.end() || !type->is_string()) throw ProtocolError("advisor protocol: missing type");
  return {type->get<std::string>(), std::move(j)};
}

AdvisorReply parse_feedback(const Message& m) {
  if (m.type != "feedback") throw ProtocolError("advisor protocol: expected feedback, got " + m.type);
  const auto id = m.body.find("id");
  const auto action = m.body.find("action");
  if (id == m.body.end() || !id->is_number_integer() || id->get<std::int64_t>() < 0)
    throw ProtocolError("advisor protocol: feedback without a valid id");
  if (action == m.body.end() || !action->is_number_integer())
    throw ProtocolError("advisor protocol: feedback without an integer action");
  return {id->get<std::uint64_t>(), action->get<int>()};
}

}  // namespace protocol

}  // namespace askac::advisors
