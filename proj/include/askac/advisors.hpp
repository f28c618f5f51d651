#pragma once

// Advisors answer "which action would you take here?" for a single state and
// nothing else: no action distributions, no values.

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "askac/envs.hpp"
#include "askac/rng.hpp"

namespace askac::advisors {

struct AdvisorQuery {
  std::string env;             // environment tag
  std::vector<double> state;   // encoded observation
  std::vector<int> legal;      // legal action indices
  std::uint64_t id = 0;        // strictly increasing within a run
  nlohmann::json render;       // environment drawing data
};

struct AdvisorReply {
  std::uint64_t id = 0;
  int action = 0;
};

class Advisor {
 public:
  virtual ~Advisor() = default;

  // std::nullopt means the advisor did not answer in time; the caller falls back.
  virtual std::optional<AdvisorReply> query(const AdvisorQuery& query) = 0;

  virtual void announce(const std::string& /*env*/, const std::vector<std::string>& /*actions*/) {}
  virtual void publish_stats(std::uint64_t /*iteration*/, double /*roa*/, double /*mean_return*/) {}
  // Whether queries should carry the environment's render payload.
  virtual bool wants_render() const { return false; }
};

// Full-state linear balancing controller; pushes right iff
// 0.01 x + 0.05 x_dot + theta + 0.2 theta_dot > 0.
int cartpole_expert(std::span<const double> observation);

// Shortest-plan policy over (position, heading, has-key, door-open).
// Throws ContractViolation when the decoded state has no plan to the goal.
int doorkey_expert(std::span<const double> observation);
std::optional<std::vector<int>> doorkey_plan(const envs::DoorKeyState& state);

// Dispatches on the query's environment tag to the scripted experts.
class ScriptedAdvisor final : public Advisor {
 public:
  std::optional<AdvisorReply> query(const AdvisorQuery& query) override;
  std::uint64_t queries() const { return queries_; }

 private:
  std::uint64_t queries_ = 0;
};

// With probability `accuracy` forwards to the inner advisor, otherwise answers
// with a uniformly random legal action.
class NoisyAdvisor final : public Advisor {
 public:
  NoisyAdvisor(std::unique_ptr<Advisor> inner, double accuracy, Rng rng);

  std::optional<AdvisorReply> query(const AdvisorQuery& query) override;
  void announce(const std::string& env, const std::vector<std::string>& actions) override;
  void publish_stats(std::uint64_t iteration, double roa, double mean_return) override;
  bool wants_render() const override { return inner_->wants_render(); }

  double accuracy() const { return accuracy_; }

 private:
  std::unique_ptr<Advisor> inner_;
  double accuracy_;
  Rng rng_;
};

// ---------------------------------------------------------------- wire protocol

namespace protocol {

std::string hello(const std::string& env, const std::vector<std::string>& actions);
std::string ask(const AdvisorQuery& query);
std::string feedback(std::uint64_t id, int action);
std::string stats(std::uint64_t iteration, double roa, double mean_return);

struct Message {
  std::string type;
  nlohmann::json body;
};
// Throws ProtocolError on non-JSON text or a non-object / untyped message.
Message parse(std::string_view text);

// Extracts a feedback reply. Throws ProtocolError on missing or mistyped fields.
AdvisorReply parse_feedback(const Message& message);

}  // namespace protocol

// Websocket server the human console connects to. One client at a time; a
// new connection replaces the old one. Queries block the calling thread until
// a matching feedback arrives or the timeout expires.
class RemoteAdvisor final : public Advisor {
 public:
  struct Options {
    std::string address = "127.0.0.1";
    unsigned short port = 0;  // 0 picks a free port
    std::chrono::milliseconds timeout{30000};
  };

  explicit RemoteAdvisor(Options options);
  ~RemoteAdvisor() override;
  RemoteAdvisor(const RemoteAdvisor&) = delete;
  RemoteAdvisor& operator=(const RemoteAdvisor&) = delete;

  unsigned short port() const;
  bool connected() const;
  bool wait_for_client(std::chrono::milliseconds timeout);

  std::optional<AdvisorReply> query(const AdvisorQuery& query) override;
  void announce(const std::string& env, const std::vector<std::string>& actions) override;
  void publish_stats(std::uint64_t iteration, double roa, double mean_return) override;
  bool wants_render() const override { return true; }

  std::uint64_t protocol_errors() const;
  std::uint64_t timeouts() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace askac::advisors
