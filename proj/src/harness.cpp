#include "askac/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "askac/errors.hpp"

namespace askac::harness {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) parts.push_back(trim(cur));
  return parts;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out))
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  // Accept 2e5-style integers as well as plain digits.
  const double d = to_double(key, v);
  if (d < 0.0 || d != std::floor(d) || d > 9.0e18)
    throw ConfigError("config key '" + key + "': expected a nonnegative integer, got '" + v + "'");
  return static_cast<std::uint64_t>(d);
}

int to_int(const std::string& key, const std::string& v) {
  const auto u = to_u64(key, v);
  if (u > 1000000000ULL) throw ConfigError("config key '" + key + "': value too large");
  return static_cast<int>(u);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::size_t> to_layers(const std::string& key, const std::string& v) {
  std::string s = v;
  std::erase(s, '[');
  std::erase(s, ']');
  std::vector<std::size_t> out;
  for (const auto& p : split(s, ','))
    if (!p.empty()) out.push_back(static_cast<std::size_t>(to_u64(key, p)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty layer list");
  return out;
}

bool is_ppo_family(const std::string& algo) {
  return algo == "ppo" || algo == "askppo" || algo == "cm" || algo == "heu";
}

const std::vector<std::string> kAlgorithms{"a2c", "ppo", "aska2c", "askppo", "cm", "heu"};

}  // namespace

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k{
      "algo", "env", "pole_half_length", "grid_size", "obs_canvas", "changepoints",
      "advisor", "advisor_accuracy", "serve_address", "serve_port", "advisor_timeout_ms",
      "total_steps", "seed", "eval_episodes",
      "policy_network_hidden_layers", "value_network_hidden_layers", "timesteps_per_iteration",
      "learning_rate", "anneal", "number_of_epochs", "minibatch_size", "discount_factor",
      "gae_discount", "ppo_clipping", "gradient_clipping", "vf_coeff", "entropy_coeff",
      "exponential_decay_rate", "max_unstable_rate", "advisor_loss_coeff", "ask_loss_coeff",
      "heu_threshold", "requester", "requester_init", "out", "wall_time"};
  return k;
}

ExperimentConfig::Pairs ExperimentConfig::parse_text(const std::string& text) {
  Pairs pairs;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    auto key = trim(std::string_view(body).substr(0, eq));
    auto value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    pairs.emplace_back(std::move(key), std::move(value));
  }
  return pairs;
}

ExperimentConfig::Pairs ExperimentConfig::read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

ExperimentConfig ExperimentConfig::from_pairs(const Pairs& pairs) {
  ExperimentConfig c;
  for (const auto& [k, v] : pairs) {
    if (k == "algo") c.set(k, v);
    if (k == "env") c.set(k, v);
  }
  c.apply_table_defaults();
  for (const auto& [k, v] : pairs) c.set(k, v);
  c.validate();
  return c;
}

void ExperimentConfig::apply_table_defaults() {
  const auto algorithm = is_ppo_family(algo) ? agent::Algorithm::PPO : agent::Algorithm::A2C;
  ac = env == envs::EnvKind::CartPole ? agent::AcConfig::cartpole_defaults(algorithm)
                                      : agent::AcConfig::doorkey_defaults(algorithm);
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const std::string& v = value;
  if (key == "algo") {
    if (std::find(kAlgorithms.begin(), kAlgorithms.end(), v) == kAlgorithms.end())
      throw ConfigError("unknown algo '" + v + "' (a2c, ppo, aska2c, askppo, cm, heu)");
    algo = v;
  } else if (key == "env") {
    env = envs::env_kind_from_string(v);
  } else if (key == "pole_half_length") {
    pole_half_length = to_double(key, v);
  } else if (key == "grid_size") {
    grid_size = to_int(key, v);
  } else if (key == "obs_canvas") {
    obs_canvas = to_int(key, v);
  } else if (key == "changepoints") {
    changepoints.clear();
    for (const auto& item : split(v, ',')) {
      if (item.empty()) continue;
      const auto colon = item.find(':');
      if (colon == std::string::npos)
        throw ConfigError("changepoints: expected step:value items, got '" + item + "'");
      changepoints.emplace_back(to_u64(key, trim(item.substr(0, colon))),
                                to_double(key, trim(item.substr(colon + 1))));
    }
  } else if (key == "advisor") {
    if (v == "none") advisor = AdvisorKind::None;
    else if (v == "scripted") advisor = AdvisorKind::Scripted;
    else if (v == "noisy") advisor = AdvisorKind::Noisy;
    else if (v == "remote") advisor = AdvisorKind::Remote;
    else throw ConfigError("unknown advisor '" + v + "' (none, scripted, noisy, remote)");
  } else if (key == "advisor_accuracy") {
    advisor_accuracy = to_double(key, v);
  } else if (key == "serve_address") {
    serve_address = v;
  } else if (key == "serve_port") {
    const auto p = to_u64(key, v);
    if (p > 65535) throw ConfigError("serve_port out of range");
    serve_port = static_cast<unsigned short>(p);
  } else if (key == "advisor_timeout_ms") {
    advisor_timeout_ms = to_int(key, v);
  } else if (key == "total_steps") {
    total_steps = to_u64(key, v);
  } else if (key == "seed") {
    seed = to_u64(key, v);
  } else if (key == "eval_episodes") {
    eval_episodes = to_int(key, v);
  } else if (key == "policy_network_hidden_layers") {
    ac.policy_hidden = to_layers(key, v);
  } else if (key == "value_network_hidden_layers") {
    ac.value_hidden = to_layers(key, v);
  } else if (key == "timesteps_per_iteration") {
    ac.steps_per_iteration = static_cast<std::size_t>(to_u64(key, v));
  } else if (key == "learning_rate") {
    ac.learning_rate = to_double(key, v);
  } else if (key == "anneal") {
    ac.anneal = to_bool(key, v);
  } else if (key == "number_of_epochs") {
    ac.epochs = to_int(key, v);
  } else if (key == "minibatch_size") {
    ac.minibatch_size = static_cast<std::size_t>(to_u64(key, v));
  } else if (key == "discount_factor") {
    ac.gamma = to_double(key, v);
  } else if (key == "gae_discount") {
    ac.gae_lambda = to_double(key, v);
  } else if (key == "ppo_clipping") {
    ac.clip = to_double(key, v);
  } else if (key == "gradient_clipping") {
    ac.max_grad_norm = to_double(key, v);
  } else if (key == "vf_coeff") {
    ac.vf_coeff = to_double(key, v);
  } else if (key == "entropy_coeff") {
    ac.entropy_coeff = to_double(key, v);
  } else if (key == "exponential_decay_rate") {
    exponential_decay_rate = to_double(key, v);
  } else if (key == "max_unstable_rate") {
    max_unstable_rate = to_double(key, v);
  } else if (key == "advisor_loss_coeff") {
    advisor_loss_coeff = to_double(key, v);
  } else if (key == "ask_loss_coeff") {
    ask_loss_coeff = to_double(key, v);
  } else if (key == "heu_threshold") {
    heu_threshold = to_double(key, v);
  } else if (key == "requester") {
    requester = to_bool(key, v);
  } else if (key == "requester_init") {
    if (v == "uniform") requester_init = ask::RequesterInit::Uniform;
    else if (v == "exec") requester_init = ask::RequesterInit::Exec;
    else if (v == "ask") requester_init = ask::RequesterInit::Ask;
    else throw ConfigError("requester_init must be 'uniform', 'exec' or 'ask'");
  } else if (key == "out") {
    out = v;
  } else if (key == "wall_time") {
    wall_time = to_bool(key, v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void ExperimentConfig::validate() const {
  trainer_config().validate();
  initial_env_params();  // validates the environment parameters
  schedule();
  if (!(advisor_accuracy >= 0.0 && advisor_accuracy <= 1.0))
    throw ConfigError("advisor_accuracy must lie in [0,1]");
  if (advisor_timeout_ms <= 0) throw ConfigError("advisor_timeout_ms must be positive");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be at least 1");
  if (mode() != ask::Mode::Plain && advisor == AdvisorKind::None)
    throw ConfigError("algo '" + algo + "' needs an advisor");
}

ask::Mode ExperimentConfig::mode() const {
  if (algo == "aska2c" || algo == "askppo") return ask::Mode::Ask;
  if (algo == "cm") return ask::Mode::Continuous;
  if (algo == "heu") return ask::Mode::Heuristic;
  return ask::Mode::Plain;
}

ask::TrainerConfig ExperimentConfig::trainer_config() const {
  ask::TrainerConfig t;
  t.mode = mode();
  t.ac = ac;
  t.ac.algorithm = is_ppo_family(algo) ? agent::Algorithm::PPO : agent::Algorithm::A2C;
  t.beta = exponential_decay_rate;
  t.delta = max_unstable_rate;
  t.weights = {advisor_loss_coeff, ask_loss_coeff};
  t.requester = requester;
  t.requester_init = requester_init;
  t.heu_threshold = heu_threshold;
  t.total_steps = total_steps;
  t.seed = seed;
  return t;
}

envs::EnvParams ExperimentConfig::initial_env_params() const {
  envs::EnvParams p;
  p.kind = env;
  if (env == envs::EnvKind::CartPole) {
    p.cartpole.pole_half_length = pole_half_length;
    p.cartpole.validate();
  } else {
    p.grid.size = grid_size;
    int canvas = obs_canvas;
    if (canvas == 0) {
      canvas = grid_size;
      for (const auto& cp : changepoints) canvas = std::max(canvas, static_cast<int>(cp.second));
    }
    p.grid.canvas = canvas;
    p.grid.validate();
  }
  return p;
}

envs::ChangepointSchedule ExperimentConfig::schedule() const {
  std::vector<envs::Changepoint> points;
  auto base = initial_env_params();
  for (const auto& [step, value] : changepoints) {
    envs::EnvParams p = base;
    if (env == envs::EnvKind::CartPole) {
      p.cartpole.pole_half_length = value;
      p.cartpole.validate();
    } else {
      if (value != std::floor(value)) throw ConfigError("doorkey changepoint sizes must be integers");
      p.grid.size = static_cast<int>(value);
      p.grid.validate();
    }
    points.push_back({step, p});
  }
  return envs::ChangepointSchedule(std::move(points));
}

std::unique_ptr<envs::Environment> ExperimentConfig::make_env() const {
  auto inner = envs::make_environment(initial_env_params());
  if (changepoints.empty()) return inner;
  return std::make_unique<envs::ScheduledEnv>(std::move(inner), schedule());
}

std::unique_ptr<advisors::Advisor> ExperimentConfig::make_advisor() const {
  switch (advisor) {
    case AdvisorKind::None: return nullptr;
    case AdvisorKind::Scripted: return std::make_unique<advisors::ScriptedAdvisor>();
    case AdvisorKind::Noisy:
      return std::make_unique<advisors::NoisyAdvisor>(std::make_unique<advisors::ScriptedAdvisor>(),
                                                      advisor_accuracy,
                                                      Rng(seed).fork(streams::kAdvisorNoise));
    case AdvisorKind::Remote: {
      advisors::RemoteAdvisor::Options o;
      o.address = serve_address;
      o.port = serve_port;
      o.timeout = std::chrono::milliseconds(advisor_timeout_ms);
      return std::make_unique<advisors::RemoteAdvisor>(o);
    }
  }
  return nullptr;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json cps = nlohmann::json::array();
  for (const auto& [s, v] : changepoints) cps.push_back({{"step", s}, {"value", v}});
  const char* advisor_names[] = {"none", "scripted", "noisy", "remote"};
  return {
      {"algo", algo},
      {"env", envs::to_string(env)},
      {"env_params", initial_env_params().to_json()},
      {"changepoints", cps},
      {"advisor", advisor_names[static_cast<int>(advisor)]},
      {"advisor_accuracy", advisor_accuracy},
      {"serve_address", serve_address},
      {"serve_port", serve_port},
      {"advisor_timeout_ms", advisor_timeout_ms},
      {"total_steps", total_steps},
      {"seed", seed},
      {"eval_episodes", eval_episodes},
      {"policy_network_hidden_layers", ac.policy_hidden},
      {"value_network_hidden_layers", ac.value_hidden},
      {"timesteps_per_iteration", ac.steps_per_iteration},
      {"learning_rate", ac.learning_rate},
      {"anneal", ac.anneal},
      {"number_of_epochs", ac.epochs},
      {"minibatch_size", ac.minibatch_size},
      {"discount_factor", ac.gamma},
      {"gae_discount", ac.gae_lambda},
      {"ppo_clipping", ac.clip},
      {"gradient_clipping", ac.max_grad_norm},
      {"vf_coeff", ac.vf_coeff},
      {"entropy_coeff", ac.entropy_coeff},
      {"exponential_decay_rate", exponential_decay_rate},
      {"max_unstable_rate", max_unstable_rate},
      {"advisor_loss_coeff", advisor_loss_coeff},
      {"ask_loss_coeff", ask_loss_coeff},
      {"heu_threshold", heu_threshold},
      {"requester", requester},
      {"requester_init", requester_init == ask::RequesterInit::Exec  ? "exec"
                         : requester_init == ask::RequesterInit::Ask ? "ask"
                                                                     : "uniform"},
      {"wall_time", wall_time},
  };
}

// ---------------------------------------------------------------- metrics

MetricsRow MetricsRow::from_stats(const ask::IterationStats& s, double wall_time) {
  MetricsRow r;
  r.iteration = s.iteration;
  r.global_step = s.global_step;
  r.train_return = s.train_return;
  r.roa = s.roa;
  r.ask_count = s.ask_count;
  r.value_loss = s.value_loss;
  r.ewma = s.ewma;
  r.unstable_rate = s.unstable_rate;
  r.unstable_count = s.unstable_count;
  r.wall_time = wall_time;
  return r;
}

void write_metrics_row(std::ostream& os, const MetricsRow& r) {
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::setprecision(17);
  os << r.iteration << ',' << r.global_step << ',' << r.train_return << ',' << r.roa << ','
     << r.ask_count << ',' << r.value_loss << ',' << r.ewma << ',' << r.unstable_rate << ','
     << r.unstable_count << ',' << r.wall_time << '\n';
  os.flags(flags);
  os.precision(precision);
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw ConfigError("cannot read metrics file " + csv.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != kMetricsHeader)
    throw ConfigError("metrics file " + csv.string() + " lacks the expected header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 10) throw ConfigError("metrics file " + csv.string() + ": malformed row");
    MetricsRow r;
    r.iteration = to_u64("iteration", f[0]);
    r.global_step = to_u64("global_step", f[1]);
    r.train_return = to_double("train_return", f[2]);
    r.roa = to_double("roa", f[3]);
    r.ask_count = to_u64("ask_count", f[4]);
    r.value_loss = to_double("value_loss", f[5]);
    r.ewma = to_double("ewma", f[6]);
    r.unstable_rate = to_double("unstable_rate", f[7]);
    r.unstable_count = to_u64("unstable_count", f[8]);
    r.wall_time = to_double("wall_time", f[9]);
    rows.push_back(r);
  }
  return rows;
}

EvalResult evaluate(const nn::MlpParams& actor, const envs::EnvParams& params, int episodes,
                    std::uint64_t seed) {
  if (episodes < 1) throw ContractViolation("evaluate: need at least one episode");
  auto env = envs::make_environment(params);
  if (env->observation_size() != actor.input_size() || env->action_count() != actor.output_size())
    throw ConfigError("evaluate: policy does not fit the environment");
  Rng rng = Rng(seed).fork(streams::kEvaluation);
  EvalResult r;
  for (int e = 0; e < episodes; ++e) {
    auto obs = env->reset(rng);
    double ret = 0.0;
    while (true) {
      const nn::Vector logits = nn::mlp_forward(actor, obs);
      const auto step = env->step(static_cast<int>(nn::argmax(nn::as_span(logits))));
      ret += step.reward;
      if (step.done()) break;
      obs = step.observation;
    }
    r.returns.push_back(ret);
  }
  const double n = static_cast<double>(episodes);
  r.mean = std::accumulate(r.returns.begin(), r.returns.end(), 0.0) / n;
  double var = 0.0;
  for (double x : r.returns) var += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(var / n);
  return r;
}

std::optional<Crossing> first_crossing(const std::vector<MetricsRow>& rows, double target) {
  std::uint64_t asks = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    asks += rows[i].ask_count;
    if (i + 1 < kSmoothingWindow) continue;
    double sum = 0.0;
    for (std::size_t j = i + 1 - kSmoothingWindow; j <= i; ++j) sum += rows[j].train_return;
    if (sum / static_cast<double>(kSmoothingWindow) >= target)
      return Crossing{i + 1, rows[i].global_step, asks};
  }
  return std::nullopt;
}

std::optional<double> compute_ser(const std::vector<MetricsRow>& run,
                                  const std::vector<MetricsRow>& reference, double target) {
  const auto a = first_crossing(run, target);
  const auto b = first_crossing(reference, target);
  if (!a || !b || b->step == 0) return std::nullopt;
  return static_cast<double>(a->step) / static_cast<double>(b->step);
}

std::optional<double> compute_anr(const std::vector<MetricsRow>& run,
                                  const std::vector<MetricsRow>& cm, double target) {
  const auto a = first_crossing(run, target);
  const auto b = first_crossing(cm, target);
  if (!a || !b || b->asks == 0) return std::nullopt;
  return static_cast<double>(a->asks) / static_cast<double>(b->asks);
}

nlohmann::json RunSummary::to_json() const {
  return {{"algo", algo},
          {"seed", seed},
          {"test_mean", test.mean},
          {"test_std", test.std},
          {"test_returns", test.returns},
          {"total_steps", total_steps},
          {"total_asks", total_asks},
          {"timeouts", timeouts},
          {"final_env", final_env.to_json()}};
}

// ---------------------------------------------------------------- parameters

nlohmann::json mlp_to_json(const nn::MlpParams& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : params.layers) {
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(l.weight.cols()));
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) row[static_cast<std::size_t>(c)] = l.weight(r, c);
      w.push_back(row);
    }
    layers.push_back({{"weight", w},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  const char* act = params.hidden_activation == nn::Activation::Tanh   ? "tanh"
                    : params.hidden_activation == nn::Activation::Relu ? "relu"
                                                                       : "identity";
  return {{"activation", act}, {"layers", layers}};
}

nn::MlpParams mlp_from_json(const nlohmann::json& j) {
  nn::MlpParams p;
  const auto act = j.at("activation").get<std::string>();
  if (act == "tanh") p.hidden_activation = nn::Activation::Tanh;
  else if (act == "relu") p.hidden_activation = nn::Activation::Relu;
  else if (act == "identity") p.hidden_activation = nn::Activation::Identity;
  else throw ConfigError("unknown activation '" + act + "'");
  for (const auto& lj : j.at("layers")) {
    const auto rows = lj.at("weight").get<std::vector<std::vector<double>>>();
    const auto bias = lj.at("bias").get<std::vector<double>>();
    nn::DenseLayer l;
    const auto cols = rows.empty() ? 0 : rows.front().size();
    l.weight.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != cols) throw ConfigError("ragged weight matrix in parameter file");
      for (std::size_t c = 0; c < cols; ++c)
        l.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    l.bias = Eigen::Map<const nn::Vector>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    p.layers.push_back(std::move(l));
  }
  p.validate();
  return p;
}

void save_params(const std::filesystem::path& path, const envs::EnvParams& env,
                 const ask::Networks& nets) {
  nlohmann::json j{{"env", env.to_json()},
                   {"actor", mlp_to_json(nets.actor)},
                   {"critic", mlp_to_json(nets.critic)}};
  if (nets.requester) j["requester"] = mlp_to_json(*nets.requester);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump() << '\n';
}

SavedPolicy load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read parameter file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("parameter file " + path.string() + ": " + e.what());
  }
  SavedPolicy s;
  s.env = envs::EnvParams::from_json(j.at("env"));
  s.networks.actor = mlp_from_json(j.at("actor"));
  s.networks.critic = mlp_from_json(j.at("critic"));
  if (j.contains("requester")) s.networks.requester = mlp_from_json(j.at("requester"));
  return s;
}

// ---------------------------------------------------------------- runner

RunOutput run_experiment(const ExperimentConfig& config, advisors::Advisor* advisor) {
  config.validate();
  const auto tc = config.trainer_config();
  auto env = config.make_env();

  std::unique_ptr<advisors::Advisor> owned;
  if (advisor == nullptr && tc.mode != ask::Mode::Plain) {
    owned = config.make_advisor();
    advisor = owned.get();
    if (auto* remote = dynamic_cast<advisors::RemoteAdvisor*>(advisor))
      std::cerr << "[askac] advisor console endpoint ws://" << config.serve_address << ':'
                << remote->port() << "\n";
  }

  std::ofstream csv;
  std::filesystem::path dir;
  if (!config.out.empty()) {
    dir = config.out;
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "config.json") << config.to_json().dump(2) << '\n';
    csv.open(dir / "metrics.csv", std::ios::trunc);
    if (!csv) throw ConfigError("cannot write " + (dir / "metrics.csv").string());
    csv << kMetricsHeader << '\n';
  }

  RunOutput out;
  const auto started = std::chrono::steady_clock::now();
  std::uint64_t timeouts = 0;
  auto on_row = [&](const ask::IterationStats& s) {
    const double wall =
        config.wall_time
            ? std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()
            : 0.0;
    const auto row = MetricsRow::from_stats(s, wall);
    timeouts += s.timeouts;
    if (csv.is_open()) {
      write_metrics_row(csv, row);
      csv.flush();
    }
    out.rows.push_back(row);
  };

  ask::TrainResult result;
  try {
    result = ask::train(tc, *env, advisor, on_row);
  } catch (const NumericError& e) {
    std::ostringstream msg;
    msg << e.what() << " [algo " << config.algo << ", env " << envs::to_string(config.env)
        << ", seed " << config.seed << "]";
    throw NumericError(msg.str());
  }

  out.stats = std::move(result.iterations);
  out.networks = std::move(result.networks);
  out.summary.algo = config.algo;
  out.summary.seed = config.seed;
  out.summary.total_steps = out.rows.empty() ? 0 : out.rows.back().global_step;
  out.summary.total_asks = result.total_asks;
  out.summary.timeouts = timeouts;
  out.summary.final_env = env->params();
  out.summary.test =
      evaluate(out.networks.actor, out.summary.final_env, config.eval_episodes, config.seed);

  if (!dir.empty()) {
    save_params(dir / "params.json", out.summary.final_env, out.networks);
    std::ofstream(dir / "summary.json") << out.summary.to_json().dump(2) << '\n';
  }
  return out;
}

}  // namespace askac::harness
