#pragma once

// CartPole physics, DoorKey gridworld, and the changepoint schedule that turns
// either of them into a sequence of MDPs sharing one state/action space.

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "askac/rng.hpp"

namespace askac::envs {

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;

  bool done() const { return terminal || truncated; }
};

// ---------------------------------------------------------------- CartPole

struct CartPoleParams {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_half_length = 0.5;
  double force_magnitude = 10.0;
  double tau = 0.02;
  double position_bound = 2.4;
  double angle_bound_degrees = 12.0;
  int max_steps = 500;

  double angle_bound_radians() const;
  void validate() const;
};

struct CartPoleState {
  double x = 0.0;
  double x_dot = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;

  std::vector<double> observation() const { return {x, x_dot, theta, theta_dot}; }
};

enum CartPoleAction : int { kPushLeft = 0, kPushRight = 1 };

// One explicit-Euler step of the cart-pole ODE. Sets `terminal` when the cart
// or pole leaves its bounds; time limits are the environment's business.
struct CartPoleTransition {
  CartPoleState next;
  double reward = 1.0;
  bool terminal = false;
};
CartPoleTransition cartpole_dynamics(const CartPoleState& state, int action,
                                     const CartPoleParams& params);

// ---------------------------------------------------------------- DoorKey

enum class Cell : std::uint8_t { Empty, Wall, Key, DoorLocked, DoorOpen, Goal };

enum DoorKeyAction : int { kTurnLeft = 0, kTurnRight = 1, kForward = 2, kPickup = 3, kToggle = 4 };
inline constexpr int kDoorKeyActionCount = 5;
// One-hot categories per grid cell in the observation.
inline constexpr int kCellCategories = 7;  // empty wall key door-locked door-open goal agent

struct GridPos {
  int x = 0;
  int y = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

// Heading 0=east(+x) 1=south(+y) 2=west 3=north.
GridPos heading_offset(int heading);

struct GridWorldConfig {
  int size = 5;    // side length including the outer wall
  int canvas = 0;  // observation side length; 0 means `size`

  int max_steps() const { return 10 * size * size; }
  int canvas_size() const { return canvas == 0 ? size : canvas; }
  void validate() const;
};

struct DoorKeyState {
  int size = 0;
  std::vector<Cell> grid;  // row-major, size*size
  GridPos agent;
  int heading = 0;
  bool carrying_key = false;
  int steps = 0;

  Cell at(GridPos p) const { return grid[static_cast<std::size_t>(p.y * size + p.x)]; }
  Cell& at(GridPos p) { return grid[static_cast<std::size_t>(p.y * size + p.x)]; }
  GridPos front() const;
  friend bool operator==(const DoorKeyState&, const DoorKeyState&) = default;
};

// Two rooms split by a vertical wall with a locked door; agent and key in the
// left room, goal in the bottom-right corner.
DoorKeyState generate_doorkey(int size, Rng& rng);

struct DoorKeyTransition {
  DoorKeyState next;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
};
// Pure grid semantics. Throws ContractViolation on an unknown action id.
DoorKeyTransition doorkey_dynamics(const DoorKeyState& state, int action, int max_steps);

std::vector<double> encode_doorkey(const DoorKeyState& state, int canvas);
std::size_t doorkey_observation_size(int canvas);

// Inverse of encode_doorkey up to the canvas; cells outside the world read as walls.
// Throws ContractViolation when the vector is not a valid encoding.
DoorKeyState decode_doorkey(std::span<const double> observation);

// ---------------------------------------------------------------- common interface

enum class EnvKind { CartPole, DoorKey };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(const std::string& name);

// Everything that defines one MDP of the sequence.
struct EnvParams {
  EnvKind kind = EnvKind::CartPole;
  CartPoleParams cartpole;
  GridWorldConfig grid;

  nlohmann::json to_json() const;
  static EnvParams from_json(const nlohmann::json& j);
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::vector<double> reset(Rng& rng) = 0;
  // Throws ContractViolation when called after the episode ended.
  virtual StepResult step(int action) = 0;
  virtual std::vector<double> observation() const = 0;

  virtual std::size_t observation_size() const = 0;
  virtual std::size_t action_count() const = 0;
  virtual std::vector<std::string> action_names() const = 0;
  virtual std::string tag() const = 0;

  // Drawing data for a human advisor, plus the parameters a scripted advisor may know.
  virtual nlohmann::json render() const = 0;

  // Swap MDP parameters. CartPole applies immediately; DoorKey on the next reset.
  virtual void apply_params(const EnvParams& params) = 0;
  virtual EnvParams params() const = 0;
};

class CartPoleEnv final : public Environment {
 public:
  explicit CartPoleEnv(CartPoleParams params = {});

  std::vector<double> reset(Rng& rng) override;
  StepResult step(int action) override;
  std::vector<double> observation() const override { return state_.observation(); }
  std::size_t observation_size() const override { return 4; }
  std::size_t action_count() const override { return 2; }
  std::vector<std::string> action_names() const override { return {"left", "right"}; }
  std::string tag() const override { return "cartpole"; }
  nlohmann::json render() const override;
  void apply_params(const EnvParams& params) override;
  EnvParams params() const override;

  const CartPoleState& state() const { return state_; }
  void set_state(const CartPoleState& state);
  int elapsed() const { return steps_; }

 private:
  CartPoleParams params_;
  CartPoleState state_;
  int steps_ = 0;
  bool done_ = true;
};

class DoorKeyEnv final : public Environment {
 public:
  explicit DoorKeyEnv(GridWorldConfig config = {});

  std::vector<double> reset(Rng& rng) override;
  StepResult step(int action) override;
  std::vector<double> observation() const override;
  std::size_t observation_size() const override;
  std::size_t action_count() const override { return kDoorKeyActionCount; }
  std::vector<std::string> action_names() const override;
  std::string tag() const override { return "doorkey"; }
  nlohmann::json render() const override;
  void apply_params(const EnvParams& params) override;
  EnvParams params() const override;

  const DoorKeyState& state() const { return state_; }
  void set_state(const DoorKeyState& state);
  const GridWorldConfig& config() const { return config_; }

 private:
  GridWorldConfig config_;
  std::optional<GridWorldConfig> pending_;
  DoorKeyState state_;
  bool done_ = true;
};

std::unique_ptr<Environment> make_environment(const EnvParams& params);

// ---------------------------------------------------------------- non-stationarity

struct Changepoint {
  std::uint64_t step = 0;  // global timestep T_k
  EnvParams params;        // parameters of the next MDP
};

class ChangepointSchedule {
 public:
  ChangepointSchedule() = default;
  // Throws ConfigError unless timesteps strictly increase.
  explicit ChangepointSchedule(std::vector<Changepoint> points);

  // Parameters to switch to once `global_step` has reached the next T_k, if any.
  // `global_step` must not decrease between calls.
  std::optional<EnvParams> advance(std::uint64_t global_step);

  const std::vector<Changepoint>& points() const { return points_; }
  bool empty() const { return points_.empty(); }
  std::size_t crossed() const { return next_; }

 private:
  std::vector<Changepoint> points_;
  std::size_t next_ = 0;
  std::uint64_t last_step_ = 0;
};

// Environment whose MDP switches silently at the schedule's changepoints.
// The wrapped agent sees only observations; parameters never leak into them.
class ScheduledEnv final : public Environment {
 public:
  ScheduledEnv(std::unique_ptr<Environment> inner, ChangepointSchedule schedule,
               std::uint64_t start_step = 0);

  std::vector<double> reset(Rng& rng) override;
  StepResult step(int action) override;
  std::vector<double> observation() const override { return inner_->observation(); }
  std::size_t observation_size() const override { return inner_->observation_size(); }
  std::size_t action_count() const override { return inner_->action_count(); }
  std::vector<std::string> action_names() const override { return inner_->action_names(); }
  std::string tag() const override { return inner_->tag(); }
  nlohmann::json render() const override { return inner_->render(); }
  void apply_params(const EnvParams& params) override { inner_->apply_params(params); }
  EnvParams params() const override { return inner_->params(); }

  std::uint64_t global_step() const { return global_step_; }
  const ChangepointSchedule& schedule() const { return schedule_; }
  Environment& inner() { return *inner_; }

 private:
  void sync();

  std::unique_ptr<Environment> inner_;
  ChangepointSchedule schedule_;
  std::uint64_t global_step_;
};

}  // namespace askac::envs
