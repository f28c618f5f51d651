#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "askac/errors.hpp"
#include "askac/harness.hpp"

namespace fs = std::filesystem;
using askac::harness::ExperimentConfig;

namespace {

struct TrainFlags {
  std::string config_path;
  std::string algo, env, advisor, out;
  std::vector<std::string> env_params;
  std::vector<std::string> settings;
  double accuracy = -1.0;
  long long seed = -1;
  double total_steps = -1.0;
  int serve = -1;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config_path, "flat key = value config file");
  cmd->add_option("--algo", f.algo, "a2c | ppo | aska2c | askppo | cm | heu");
  cmd->add_option("--env", f.env, "cartpole | doorkey");
  cmd->add_option("--env-param", f.env_params,
                  "pole_half_length=L, grid_size=S, obs_canvas=C, changepoints=T1:v1,T2:v2");
  cmd->add_option("--advisor", f.advisor, "scripted | noisy | remote | none");
  cmd->add_option("--advisor-accuracy", f.accuracy, "noisy advisor accuracy p");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--total-steps", f.total_steps, "environment steps to train for");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--serve", f.serve, "serve the advisor console protocol on PORT");
  cmd->add_option("--set", f.settings, "any config key=value");
}

std::pair<std::string, std::string> split_kv(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw askac::ConfigError("expected key=value, got '" + kv + "'");
  return {kv.substr(0, eq), kv.substr(eq + 1)};
}

ExperimentConfig::Pairs collect_pairs(const TrainFlags& f) {
  ExperimentConfig::Pairs pairs;
  if (!f.config_path.empty()) pairs = ExperimentConfig::read_file(f.config_path);
  auto put = [&](const std::string& k, const std::string& v) { pairs.emplace_back(k, v); };
  if (!f.algo.empty()) put("algo", f.algo);
  if (!f.env.empty()) put("env", f.env);
  static const std::vector<std::string> env_keys{"pole_half_length", "grid_size", "obs_canvas",
                                                 "changepoints"};
  for (const auto& kv : f.env_params) {
    auto [k, v] = split_kv(kv);
    if (std::find(env_keys.begin(), env_keys.end(), k) == env_keys.end())
      throw askac::ConfigError("--env-param: '" + k + "' is not an environment parameter");
    put(k, v);
  }
  if (!f.advisor.empty()) put("advisor", f.advisor);
  if (f.accuracy >= 0.0) put("advisor_accuracy", std::to_string(f.accuracy));
  if (f.seed >= 0) put("seed", std::to_string(f.seed));
  if (f.total_steps >= 0.0) put("total_steps", std::to_string(static_cast<long long>(f.total_steps)));
  if (!f.out.empty()) put("out", f.out);
  if (f.serve >= 0) {
    put("advisor", "remote");
    put("serve_port", std::to_string(f.serve));
  }
  for (const auto& kv : f.settings) {
    auto [k, v] = split_kv(kv);
    put(k, v);
  }
  return pairs;
}

std::vector<askac::harness::MetricsRow> rows_of(const std::string& path) {
  fs::path p(path);
  if (fs::is_directory(p)) p /= "metrics.csv";
  return askac::harness::read_metrics(p);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"askac: advisor-in-the-loop actor-critic training"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "train one run");
  add_train_flags(train, train_flags);

  std::string params_path;
  int episodes = 10;
  long long eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "greedy evaluation of saved parameters");
  eval->add_option("--params", params_path, "params.json from a run")->required();
  eval->add_option("--episodes", episodes, "episode count");
  eval->add_option("--seed", eval_seed, "evaluation seed");

  std::string compute, run_path, ref_path;
  double target = 0.0;
  auto* metrics = app.add_subcommand("metrics", "SER / ANR between two runs");
  metrics->add_option("--compute", compute, "ser | anr")->required()->check(CLI::IsMember({"ser", "anr"}));
  metrics->add_option("--run", run_path, "run directory or metrics.csv")->required();
  metrics->add_option("--ref", ref_path, "reference (original or cm) run")->required();
  metrics->add_option("--target", target, "target training return")->required();

  TrainFlags sweep_flags;
  int seeds = 5;
  std::vector<double> thresholds;
  auto* sweep = app.add_subcommand("sweep", "train several seeds (and Heu thresholds)");
  add_train_flags(sweep, sweep_flags);
  sweep->add_option("--seeds", seeds, "number of consecutive seeds");
  sweep->add_option("--heu-thresholds", thresholds, "sigma values to sweep for heu")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto config = ExperimentConfig::from_pairs(collect_pairs(train_flags));
      const auto out = askac::harness::run_experiment(config);
      std::cout << out.summary.to_json().dump(2) << '\n';
    } else if (*eval) {
      const auto saved = askac::harness::load_params(params_path);
      const auto r = askac::harness::evaluate(saved.networks.actor, saved.env, episodes,
                                              static_cast<std::uint64_t>(eval_seed));
      std::cout << nlohmann::json{{"mean", r.mean}, {"std", r.std}, {"returns", r.returns}}.dump(2)
                << '\n';
    } else if (*metrics) {
      const auto a = rows_of(run_path);
      const auto b = rows_of(ref_path);
      const auto v = compute == "ser" ? askac::harness::compute_ser(a, b, target)
                                      : askac::harness::compute_anr(a, b, target);
      if (v) std::cout << compute << " " << *v << '\n';
      else std::cout << compute << " undefined (target " << target << " not reached)\n";
      return v ? 0 : 3;
    } else if (*sweep) {
      auto pairs = collect_pairs(sweep_flags);
      const auto base = ExperimentConfig::from_pairs(pairs);
      if (thresholds.empty()) thresholds.push_back(base.heu_threshold);
      if (base.algo != "heu") thresholds.resize(1);
      nlohmann::json report = nlohmann::json::array();
      for (double sigma : thresholds) {
        for (int k = 0; k < seeds; ++k) {
          auto p = pairs;
          const auto seed = base.seed + static_cast<std::uint64_t>(k);
          p.emplace_back("seed", std::to_string(seed));
          if (base.algo == "heu") p.emplace_back("heu_threshold", std::to_string(sigma));
          if (!base.out.empty()) {
            fs::path dir = fs::path(base.out);
            if (base.algo == "heu") dir /= "sigma_" + std::to_string(sigma);
            p.emplace_back("out", (dir / ("seed_" + std::to_string(seed))).string());
          }
          const auto out = askac::harness::run_experiment(ExperimentConfig::from_pairs(p));
          auto j = out.summary.to_json();
          if (base.algo == "heu") j["heu_threshold"] = sigma;
          std::cout << j.dump() << '\n' << std::flush;
          report.push_back(j);
        }
      }
      if (!base.out.empty()) std::ofstream(fs::path(base.out) / "sweep.json") << report.dump(2) << '\n';
    }
  } catch (const askac::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
