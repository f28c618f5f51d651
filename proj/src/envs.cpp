#include "askac/envs.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "askac/errors.hpp"

namespace askac::envs {

// ---------------------------------------------------------------- CartPole

double CartPoleParams::angle_bound_radians() const {
  return angle_bound_degrees * 2.0 * std::numbers::pi / 360.0;
}

void CartPoleParams::validate() const {
  if (!(gravity > 0 && cart_mass > 0 && pole_mass > 0 && pole_half_length > 0 &&
        force_magnitude > 0 && tau > 0 && position_bound > 0 && angle_bound_degrees > 0 &&
        max_steps > 0))
    throw ConfigError("CartPole parameters must all be positive");
}

CartPoleTransition cartpole_dynamics(const CartPoleState& s, int action,
                                     const CartPoleParams& p) {
  if (action != kPushLeft && action != kPushRight)
    throw ContractViolation("cartpole: action must be 0 (left) or 1 (right), got " +
                            std::to_string(action));
  const double force = action == kPushRight ? p.force_magnitude : -p.force_magnitude;
  const double total_mass = p.cart_mass + p.pole_mass;
  const double polemass_length = p.pole_mass * p.pole_half_length;
  const double cos_theta = std::cos(s.theta);
  const double sin_theta = std::sin(s.theta);

  const double temp = (force + polemass_length * s.theta_dot * s.theta_dot * sin_theta) / total_mass;
  const double theta_acc =
      (p.gravity * sin_theta - cos_theta * temp) /
      (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos_theta * cos_theta / total_mass));
  const double x_acc = temp - polemass_length * theta_acc * cos_theta / total_mass;

  CartPoleTransition out;
  out.next.x = s.x + p.tau * s.x_dot;
  out.next.x_dot = s.x_dot + p.tau * x_acc;
  out.next.theta = s.theta + p.tau * s.theta_dot;
  out.next.theta_dot = s.theta_dot + p.tau * theta_acc;
  const double bound = p.angle_bound_radians();
  out.terminal = out.next.x < -p.position_bound || out.next.x > p.position_bound ||
                 out.next.theta < -bound || out.next.theta > bound;
  out.reward = 1.0;
  return out;
}

CartPoleEnv::CartPoleEnv(CartPoleParams params) : params_(params) { params_.validate(); }

std::vector<double> CartPoleEnv::reset(Rng& rng) {
  state_.x = rng.uniform(-0.05, 0.05);
  state_.x_dot = rng.uniform(-0.05, 0.05);
  state_.theta = rng.uniform(-0.05, 0.05);
  state_.theta_dot = rng.uniform(-0.05, 0.05);
  steps_ = 0;
  done_ = false;
  return state_.observation();
}

StepResult CartPoleEnv::step(int action) {
  if (done_) throw ContractViolation("cartpole: step called on a finished episode; reset first");
  const auto tr = cartpole_dynamics(state_, action, params_);
  state_ = tr.next;
  ++steps_;
  StepResult result;
  result.observation = state_.observation();
  result.reward = tr.reward;
  result.terminal = tr.terminal;
  result.truncated = !tr.terminal && steps_ >= params_.max_steps;
  done_ = result.done();
  return result;
}

void CartPoleEnv::set_state(const CartPoleState& state) {
  state_ = state;
  steps_ = 0;
  done_ = false;
}

nlohmann::json CartPoleEnv::render() const {
  return {{"x", state_.x},
          {"x_dot", state_.x_dot},
          {"theta", state_.theta},
          {"theta_dot", state_.theta_dot},
          {"pole_half_length", params_.pole_half_length},
          {"position_bound", params_.position_bound},
          {"angle_bound", params_.angle_bound_radians()},
          {"steps", steps_}};
}

void CartPoleEnv::apply_params(const EnvParams& params) {
  if (params.kind != EnvKind::CartPole) throw ConfigError("cartpole: cannot switch environment kind");
  params.cartpole.validate();
  params_ = params.cartpole;
}

EnvParams CartPoleEnv::params() const {
  EnvParams p;
  p.kind = EnvKind::CartPole;
  p.cartpole = params_;
  return p;
}

// ---------------------------------------------------------------- DoorKey

GridPos heading_offset(int heading) {
  switch (heading & 3) {
    case 0: return {1, 0};
    case 1: return {0, 1};
    case 2: return {-1, 0};
    default: return {0, -1};
  }
}

GridPos DoorKeyState::front() const {
  const auto d = heading_offset(heading);
  return {agent.x + d.x, agent.y + d.y};
}

void GridWorldConfig::validate() const {
  if (size < 5) throw ConfigError("doorkey: grid size must be at least 5");
  if (canvas != 0 && canvas < size)
    throw ConfigError("doorkey: observation canvas smaller than the grid");
}

DoorKeyState generate_doorkey(int size, Rng& rng) {
  DoorKeyState s;
  s.size = size;
  s.grid.assign(static_cast<std::size_t>(size * size), Cell::Empty);
  for (int i = 0; i < size; ++i) {
    s.at({i, 0}) = Cell::Wall;
    s.at({i, size - 1}) = Cell::Wall;
    s.at({0, i}) = Cell::Wall;
    s.at({size - 1, i}) = Cell::Wall;
  }
  s.at({size - 2, size - 2}) = Cell::Goal;

  const int split = 2 + static_cast<int>(rng.index(static_cast<std::size_t>(size - 4)));
  for (int y = 0; y < size; ++y) s.at({split, y}) = Cell::Wall;

  // Left room interior: x in [1, split), y in [1, size-1).
  const auto room_cells = static_cast<std::size_t>((split - 1) * (size - 2));
  auto room_cell = [&](std::size_t k) {
    return GridPos{1 + static_cast<int>(k) % (split - 1), 1 + static_cast<int>(k) / (split - 1)};
  };
  const std::size_t agent_k = rng.index(room_cells);
  s.agent = room_cell(agent_k);
  s.heading = static_cast<int>(rng.index(4));

  const int door_y = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(size - 3)));
  s.at({split, door_y}) = Cell::DoorLocked;

  std::size_t key_k = rng.index(room_cells - 1);
  if (key_k >= agent_k) ++key_k;
  s.at(room_cell(key_k)) = Cell::Key;
  return s;
}

DoorKeyTransition doorkey_dynamics(const DoorKeyState& state, int action, int max_steps) {
  if (action < 0 || action >= kDoorKeyActionCount)
    throw ContractViolation("doorkey: invalid action id " + std::to_string(action));
  DoorKeyTransition out;
  out.next = state;
  auto& s = out.next;
  ++s.steps;
  const GridPos ahead = s.front();
  const bool in_bounds = ahead.x >= 0 && ahead.y >= 0 && ahead.x < s.size && ahead.y < s.size;
  switch (action) {
    case kTurnLeft:
      s.heading = (s.heading + 3) % 4;
      break;
    case kTurnRight:
      s.heading = (s.heading + 1) % 4;
      break;
    case kForward:
      if (in_bounds) {
        const Cell c = s.at(ahead);
        if (c == Cell::Empty || c == Cell::DoorOpen || c == Cell::Goal) s.agent = ahead;
        if (c == Cell::Goal) {
          out.terminal = true;
          out.reward = 1.0 - 0.9 * (static_cast<double>(s.steps) / max_steps);
        }
      }
      break;
    case kPickup:
      if (in_bounds && !s.carrying_key && s.at(ahead) == Cell::Key) {
        s.carrying_key = true;
        s.at(ahead) = Cell::Empty;
      }
      break;
    case kToggle:
      if (in_bounds && s.carrying_key && s.at(ahead) == Cell::DoorLocked) s.at(ahead) = Cell::DoorOpen;
      break;
  }
  out.truncated = !out.terminal && s.steps >= max_steps;
  return out;
}

std::size_t doorkey_observation_size(int canvas) {
  return static_cast<std::size_t>(canvas * canvas * kCellCategories + 4);
}

std::vector<double> encode_doorkey(const DoorKeyState& state, int canvas) {
  if (canvas < state.size) throw ConfigError("doorkey: canvas smaller than grid");
  std::vector<double> obs(doorkey_observation_size(canvas), 0.0);
  for (int y = 0; y < canvas; ++y) {
    for (int x = 0; x < canvas; ++x) {
      int category = static_cast<int>(Cell::Wall);
      if (x < state.size && y < state.size) {
        category = (GridPos{x, y} == state.agent) ? 6 : static_cast<int>(state.at({x, y}));
      }
      obs[static_cast<std::size_t>((y * canvas + x) * kCellCategories + category)] = 1.0;
    }
  }
  obs[static_cast<std::size_t>(canvas * canvas * kCellCategories + (state.heading & 3))] = 1.0;
  return obs;
}

DoorKeyState decode_doorkey(std::span<const double> obs) {
  if (obs.size() < 4 || (obs.size() - 4) % kCellCategories != 0)
    throw ContractViolation("doorkey: observation length is not a grid encoding");
  const auto cells = (obs.size() - 4) / kCellCategories;
  const int canvas = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cells))));
  if (static_cast<std::size_t>(canvas * canvas) != cells)
    throw ContractViolation("doorkey: observation does not describe a square grid");

  DoorKeyState s;
  s.size = canvas;
  s.grid.assign(cells, Cell::Empty);
  bool seen_agent = false;
  bool seen_key = false;
  bool seen_door = false;
  for (int y = 0; y < canvas; ++y) {
    for (int x = 0; x < canvas; ++x) {
      const auto base = static_cast<std::size_t>((y * canvas + x) * kCellCategories);
      int category = -1;
      for (int c = 0; c < kCellCategories; ++c) {
        if (obs[base + static_cast<std::size_t>(c)] > 0.5) {
          if (category != -1) throw ContractViolation("doorkey: cell with two categories");
          category = c;
        }
      }
      if (category == -1) throw ContractViolation("doorkey: cell without a category");
      if (category == 6) {
        s.agent = {x, y};
        seen_agent = true;
        s.at({x, y}) = Cell::Empty;
      } else {
        s.at({x, y}) = static_cast<Cell>(category);
        seen_key |= category == static_cast<int>(Cell::Key);
        seen_door |= category == static_cast<int>(Cell::DoorLocked) ||
                     category == static_cast<int>(Cell::DoorOpen);
      }
    }
  }
  if (!seen_agent) throw ContractViolation("doorkey: observation without an agent");
  // Standing in the doorway hides the door cell; it must be open then.
  if (!seen_door) s.at(s.agent) = Cell::DoorOpen;
  s.carrying_key = !seen_key;
  s.heading = -1;
  for (int h = 0; h < 4; ++h)
    if (obs[cells * kCellCategories + static_cast<std::size_t>(h)] > 0.5) s.heading = h;
  if (s.heading < 0) throw ContractViolation("doorkey: observation without a heading");
  return s;
}

DoorKeyEnv::DoorKeyEnv(GridWorldConfig config) : config_(config) { config_.validate(); }

std::vector<double> DoorKeyEnv::reset(Rng& rng) {
  if (pending_) {
    config_ = *pending_;
    pending_.reset();
  }
  state_ = generate_doorkey(config_.size, rng);
  done_ = false;
  return observation();
}

StepResult DoorKeyEnv::step(int action) {
  if (done_) throw ContractViolation("doorkey: step called on a finished episode; reset first");
  auto tr = doorkey_dynamics(state_, action, config_.max_steps());
  state_ = std::move(tr.next);
  StepResult result;
  result.observation = observation();
  result.reward = tr.reward;
  result.terminal = tr.terminal;
  result.truncated = tr.truncated;
  done_ = result.done();
  return result;
}

std::vector<double> DoorKeyEnv::observation() const {
  return encode_doorkey(state_, config_.canvas_size());
}

std::size_t DoorKeyEnv::observation_size() const {
  return doorkey_observation_size(config_.canvas_size());
}

std::vector<std::string> DoorKeyEnv::action_names() const {
  return {"left", "right", "forward", "pickup", "toggle"};
}

void DoorKeyEnv::set_state(const DoorKeyState& state) {
  if (state.size != config_.size) throw ConfigError("doorkey: state size does not match config");
  state_ = state;
  done_ = false;
}

nlohmann::json DoorKeyEnv::render() const {
  static const char* names[] = {"empty", "wall", "key", "door_locked", "door_open", "goal"};
  nlohmann::json rows = nlohmann::json::array();
  for (int y = 0; y < state_.size; ++y) {
    nlohmann::json row = nlohmann::json::array();
    for (int x = 0; x < state_.size; ++x) row.push_back(names[static_cast<int>(state_.at({x, y}))]);
    rows.push_back(std::move(row));
  }
  return {{"size", state_.size},
          {"grid", std::move(rows)},
          {"agent", {state_.agent.x, state_.agent.y}},
          {"heading", state_.heading},
          {"carrying_key", state_.carrying_key},
          {"steps", state_.steps},
          {"max_steps", config_.max_steps()}};
}

void DoorKeyEnv::apply_params(const EnvParams& params) {
  if (params.kind != EnvKind::DoorKey) throw ConfigError("doorkey: cannot switch environment kind");
  params.grid.validate();
  if (params.grid.canvas_size() != config_.canvas_size())
    throw ConfigError("doorkey: a changepoint may not change the observation canvas");
  pending_ = params.grid;
}

EnvParams DoorKeyEnv::params() const {
  EnvParams p;
  p.kind = EnvKind::DoorKey;
  p.grid = pending_ ? *pending_ : config_;
  return p;
}

// ---------------------------------------------------------------- common

std::string to_string(EnvKind kind) { return kind == EnvKind::CartPole ? "cartpole" : "doorkey"; }

EnvKind env_kind_from_string(const std::string& name) {
  if (name == "cartpole") return EnvKind::CartPole;
  if (name == "doorkey") return EnvKind::DoorKey;
  throw ConfigError("unknown environment '" + name + "' (expected cartpole or doorkey)");
}

nlohmann::json EnvParams::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind);
  if (kind == EnvKind::CartPole) {
    const auto& c = cartpole;
    j["cartpole"] = {{"gravity", c.gravity},
                     {"cart_mass", c.cart_mass},
                     {"pole_mass", c.pole_mass},
                     {"pole_half_length", c.pole_half_length},
                     {"force_magnitude", c.force_magnitude},
                     {"tau", c.tau},
                     {"position_bound", c.position_bound},
                     {"angle_bound_degrees", c.angle_bound_degrees},
                     {"max_steps", c.max_steps}};
  } else {
    j["grid"] = {{"size", grid.size}, {"canvas", grid.canvas_size()}};
  }
  return j;
}

EnvParams EnvParams::from_json(const nlohmann::json& j) {
  EnvParams p;
  p.kind = env_kind_from_string(j.at("kind").get<std::string>());
  if (p.kind == EnvKind::CartPole) {
    const auto& c = j.at("cartpole");
    p.cartpole.gravity = c.at("gravity");
    p.cartpole.cart_mass = c.at("cart_mass");
    p.cartpole.pole_mass = c.at("pole_mass");
    p.cartpole.pole_half_length = c.at("pole_half_length");
    p.cartpole.force_magnitude = c.at("force_magnitude");
    p.cartpole.tau = c.at("tau");
    p.cartpole.position_bound = c.at("position_bound");
    p.cartpole.angle_bound_degrees = c.at("angle_bound_degrees");
    p.cartpole.max_steps = c.at("max_steps");
    p.cartpole.validate();
  } else {
    p.grid.size = j.at("grid").at("size");
    p.grid.canvas = j.at("grid").at("canvas");
    p.grid.validate();
  }
  return p;
}

std::unique_ptr<Environment> make_environment(const EnvParams& params) {
  if (params.kind == EnvKind::CartPole) return std::make_unique<CartPoleEnv>(params.cartpole);
  return std::make_unique<DoorKeyEnv>(params.grid);
}

// ---------------------------------------------------------------- schedule

ChangepointSchedule::ChangepointSchedule(std::vector<Changepoint> points)
    : points_(std::move(points)) {
  for (std::size_t i = 1; i < points_.size(); ++i)
    if (points_[i].step <= points_[i - 1].step)
      throw ConfigError("changepoint timesteps must strictly increase");
}

std::optional<EnvParams> ChangepointSchedule::advance(std::uint64_t global_step) {
  if (global_step < last_step_) throw ContractViolation("changepoint schedule: global step went backwards");
  last_step_ = global_step;
  std::optional<EnvParams> out;
  while (next_ < points_.size() && global_step >= points_[next_].step) {
    out = points_[next_].params;
    ++next_;
  }
  return out;
}

ScheduledEnv::ScheduledEnv(std::unique_ptr<Environment> inner, ChangepointSchedule schedule,
                           std::uint64_t start_step)
    : inner_(std::move(inner)), schedule_(std::move(schedule)), global_step_(start_step) {
  for (const auto& cp : schedule_.points()) {
    if (cp.params.kind != inner_->params().kind)
      throw ConfigError("changepoint switches environment kind");
  }
  sync();
}

void ScheduledEnv::sync() {
  if (auto next = schedule_.advance(global_step_)) inner_->apply_params(*next);
}

std::vector<double> ScheduledEnv::reset(Rng& rng) {
  sync();
  return inner_->reset(rng);
}

StepResult ScheduledEnv::step(int action) {
  sync();
  auto result = inner_->step(action);
  ++global_step_;
  return result;
}

}  // namespace askac::envs
