#pragma once

// Experiment runner: configuration, algorithm dispatch, evaluation, metrics
// persistence, and the SER / ANR summaries.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "askac/advisors.hpp"
#include "askac/ask.hpp"
#include "askac/envs.hpp"

namespace askac::harness {

enum class AdvisorKind { None, Scripted, Noisy, Remote };

struct ExperimentConfig {
  std::string algo = "askppo";  // a2c ppo aska2c askppo cm heu
  envs::EnvKind env = envs::EnvKind::CartPole;
  double pole_half_length = 0.5;
  int grid_size = 5;
  int obs_canvas = 0;  // 0: largest grid in the schedule
  std::vector<std::pair<std::uint64_t, double>> changepoints;  // (step, L or S)

  AdvisorKind advisor = AdvisorKind::Scripted;
  double advisor_accuracy = 1.0;
  std::string serve_address = "127.0.0.1";
  unsigned short serve_port = 0;
  int advisor_timeout_ms = 30000;

  std::uint64_t total_steps = 200000;
  std::uint64_t seed = 0;
  int eval_episodes = 10;

  agent::AcConfig ac;
  double exponential_decay_rate = 0.9;
  double max_unstable_rate = 0.1;
  double advisor_loss_coeff = 1.0;
  double ask_loss_coeff = 0.5;
  double heu_threshold = 0.6;
  bool requester = true;
  ask::RequesterInit requester_init = ask::RequesterInit::Uniform;

  std::string out;  // empty: nothing written
  bool wall_time = true;

  using Pairs = std::vector<std::pair<std::string, std::string>>;

  // Table defaults for (env, algo), then every pair in order. Unknown keys and
  // malformed values throw ConfigError.
  static ExperimentConfig from_pairs(const Pairs& pairs);
  // Flat `key = value` lines; `#` starts a comment.
  static Pairs parse_text(const std::string& text);
  static Pairs read_file(const std::filesystem::path& path);
  static const std::vector<std::string>& keys();

  void set(const std::string& key, const std::string& value);
  void apply_table_defaults();
  void validate() const;

  ask::Mode mode() const;
  ask::TrainerConfig trainer_config() const;
  envs::EnvParams initial_env_params() const;
  envs::ChangepointSchedule schedule() const;
  std::unique_ptr<envs::Environment> make_env() const;  // scheduled when changepoints exist
  std::unique_ptr<advisors::Advisor> make_advisor() const;

  nlohmann::json to_json() const;
};

// One row per iteration, in CSV column order.
struct MetricsRow {
  std::uint64_t iteration = 0;
  std::uint64_t global_step = 0;
  double train_return = 0.0;
  double roa = 0.0;
  std::uint64_t ask_count = 0;
  double value_loss = 0.0;
  double ewma = 0.0;
  double unstable_rate = 0.0;
  std::uint64_t unstable_count = 0;
  double wall_time = 0.0;

  static MetricsRow from_stats(const ask::IterationStats& stats, double wall_time);
};

inline constexpr const char* kMetricsHeader =
    "iteration,global_step,train_return,roa,ask_count,value_loss,ewma,unstable_rate,unstable_count,"
    "wall_time";

void write_metrics_row(std::ostream& os, const MetricsRow& row);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& csv);

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  // population
  std::vector<double> returns;
};

// Greedy rollouts of the actor alone: no requester, no advisor.
EvalResult evaluate(const nn::MlpParams& actor, const envs::EnvParams& params, int episodes,
                    std::uint64_t seed);

// First point where the trailing 10-iteration mean of training return reaches
// `target`; the window must be full.
struct Crossing {
  std::size_t iteration = 0;  // 1-based
  std::uint64_t step = 0;
  std::uint64_t asks = 0;  // cumulative advisor queries through that iteration
};
inline constexpr std::size_t kSmoothingWindow = 10;
std::optional<Crossing> first_crossing(const std::vector<MetricsRow>& rows, double target);

// T_inter / T_org; nullopt when either run never reaches the target.
std::optional<double> compute_ser(const std::vector<MetricsRow>& run,
                                  const std::vector<MetricsRow>& reference, double target);
// T_ask / T_cm on cumulative advisor queries.
std::optional<double> compute_anr(const std::vector<MetricsRow>& run,
                                  const std::vector<MetricsRow>& cm, double target);

struct RunSummary {
  std::string algo;
  std::uint64_t seed = 0;
  EvalResult test;
  std::uint64_t total_steps = 0;
  std::uint64_t total_asks = 0;
  std::uint64_t timeouts = 0;
  envs::EnvParams final_env;

  nlohmann::json to_json() const;
};

struct RunOutput {
  RunSummary summary;
  std::vector<MetricsRow> rows;
  std::vector<ask::IterationStats> stats;
  ask::Networks networks;
};

// Dispatches on the configured algorithm. `advisor` overrides the configured
// advisor when non-null. Writes metrics.csv incrementally plus config.json,
// params.json and summary.json when `config.out` is set.
RunOutput run_experiment(const ExperimentConfig& config, advisors::Advisor* advisor = nullptr);

// ---------------------------------------------------------------- parameters

nlohmann::json mlp_to_json(const nn::MlpParams& params);
nn::MlpParams mlp_from_json(const nlohmann::json& j);

struct SavedPolicy {
  envs::EnvParams env;
  ask::Networks networks;
};
void save_params(const std::filesystem::path& path, const envs::EnvParams& env,
                 const ask::Networks& networks);
SavedPolicy load_params(const std::filesystem::path& path);

}  // namespace askac::harness
