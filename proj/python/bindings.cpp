#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "askac/advisors.hpp"
#include "askac/agent.hpp"
#include "askac/ask.hpp"
#include "askac/envs.hpp"
#include "askac/errors.hpp"
#include "askac/harness.hpp"
#include "askac/nn.hpp"

namespace py = pybind11;
using namespace askac;

namespace {

py::dict row_dict(const harness::MetricsRow& r) {
  py::dict d;
  d["iteration"] = r.iteration;
  d["global_step"] = r.global_step;
  d["train_return"] = r.train_return;
  d["roa"] = r.roa;
  d["ask_count"] = r.ask_count;
  d["value_loss"] = r.value_loss;
  d["ewma"] = r.ewma;
  d["unstable_rate"] = r.unstable_rate;
  d["unstable_count"] = r.unstable_count;
  d["wall_time"] = r.wall_time;
  return d;
}

harness::MetricsRow row_from(const py::dict& d) {
  harness::MetricsRow r;
  r.iteration = d["iteration"].cast<std::uint64_t>();
  r.global_step = d["global_step"].cast<std::uint64_t>();
  r.train_return = d["train_return"].cast<double>();
  r.ask_count = d.contains("ask_count") ? d["ask_count"].cast<std::uint64_t>() : 0;
  return r;
}

std::vector<harness::MetricsRow> rows_from(const py::list& rows) {
  std::vector<harness::MetricsRow> out;
  for (const auto& r : rows) out.push_back(row_from(r.cast<py::dict>()));
  return out;
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_askac, m) {
  m.doc() = "Advisor-in-the-loop actor-critic core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_ValueError);

  m.def("softmax", [](const std::vector<double>& z) { return nn::softmax(z).probs; });
  m.def("cross_entropy", [](std::size_t target, const std::vector<double>& z) {
    return nn::cross_entropy(target, z);
  });

  m.def("compute_returns",
        [](const std::vector<double>& rewards, const std::vector<bool>& dones, double bootstrap,
           double gamma) {
          std::vector<std::uint8_t> d(dones.begin(), dones.end());
          return agent::compute_returns(rewards, d, bootstrap, gamma);
        },
        py::arg("rewards"), py::arg("dones"), py::arg("bootstrap_value"), py::arg("gamma"));
  m.def("compute_gae",
        [](const std::vector<double>& rewards, const std::vector<double>& values,
           const std::vector<bool>& dones, double gamma, double lam) {
          std::vector<std::uint8_t> d(dones.begin(), dones.end());
          return agent::compute_gae(rewards, values, d, gamma, lam);
        },
        py::arg("rewards"), py::arg("values"), py::arg("dones"), py::arg("gamma"), py::arg("lam"));
  m.def("anneal_fraction", &agent::anneal_fraction);

  m.def("value_errors", [](const std::vector<double>& v, const std::vector<double>& g) {
    return ask::value_errors(v, g);
  });
  m.def("value_loss", [](const std::vector<double>& e) { return ask::value_loss(e); });
  m.def("update_ewma", [](double previous, double loss, double beta) {
    ask::SelectorState s{previous, beta, 0.1, 0};
    return ask::update_ewma(s, loss);
  });
  m.def("unstable_rate", [](double loss, double ewma, double beta) {
    return ask::unstable_rate(ask::SelectorState{0.0, beta, 0.1, 0}, loss, ewma);
  });
  m.def("unstable_count", &ask::unstable_count);
  m.def("select_unstable", [](const std::vector<double>& e, std::size_t k) {
    return ask::select_unstable(e, k);
  });
  m.def("total_loss", [](double org, double adv, double ask_l, double w_adv, double w_ask) {
    return ask::total_loss(org, adv, ask_l, {w_adv, w_ask});
  }, py::arg("org"), py::arg("advisor"), py::arg("ask"), py::arg("advisor_coeff") = 1.0,
     py::arg("ask_coeff") = 0.5);

  py::class_<envs::StepResult>(m, "StepResult")
      .def_readonly("observation", &envs::StepResult::observation)
      .def_readonly("reward", &envs::StepResult::reward)
      .def_readonly("terminal", &envs::StepResult::terminal)
      .def_readonly("truncated", &envs::StepResult::truncated);

  py::class_<envs::CartPoleEnv>(m, "CartPole")
      .def(py::init([](double half_length) {
             envs::CartPoleParams p;
             p.pole_half_length = half_length;
             return envs::CartPoleEnv(p);
           }),
           py::arg("pole_half_length") = 0.5)
      .def("reset", [](envs::CartPoleEnv& e, std::uint64_t seed) {
        Rng rng(seed);
        return e.reset(rng);
      })
      .def("step", &envs::CartPoleEnv::step)
      .def("observation", &envs::CartPoleEnv::observation);

  py::class_<envs::DoorKeyEnv>(m, "DoorKey")
      .def(py::init([](int size) {
             envs::GridWorldConfig c;
             c.size = size;
             return envs::DoorKeyEnv(c);
           }),
           py::arg("size") = 5)
      .def("reset", [](envs::DoorKeyEnv& e, std::uint64_t seed) {
        Rng rng(seed);
        return e.reset(rng);
      })
      .def("step", &envs::DoorKeyEnv::step)
      .def("observation", &envs::DoorKeyEnv::observation)
      .def("render", [](const envs::DoorKeyEnv& e) { return json_to_py(e.render()); });

  m.def("cartpole_expert", [](const std::vector<double>& o) { return advisors::cartpole_expert(o); });
  m.def("doorkey_expert", [](const std::vector<double>& o) { return advisors::doorkey_expert(o); });

  m.def("protocol_ask", [](std::uint64_t id, const std::vector<double>& state, const std::vector<int>& legal) {
    advisors::AdvisorQuery q;
    q.env = "cartpole";
    q.id = id;
    q.state = state;
    q.legal = legal;
    return advisors::protocol::ask(q);
  });
  m.def("protocol_feedback", &advisors::protocol::feedback);

  m.def("run_experiment",
        [](const std::map<std::string, std::string>& settings) {
          harness::ExperimentConfig::Pairs pairs(settings.begin(), settings.end());
          harness::RunOutput out;
          {
            py::gil_scoped_release release;
            out = harness::run_experiment(harness::ExperimentConfig::from_pairs(pairs));
          }
          py::dict result;
          result["summary"] = json_to_py(out.summary.to_json());
          py::list rows;
          for (const auto& r : out.rows) rows.append(row_dict(r));
          result["rows"] = rows;
          return result;
        },
        py::arg("settings"), "Train one run from flat config key/value strings.");

  m.def("evaluate_params",
        [](const std::string& path, int episodes, std::uint64_t seed) {
          const auto saved = harness::load_params(path);
          const auto r = harness::evaluate(saved.networks.actor, saved.env, episodes, seed);
          return py::make_tuple(r.mean, r.std, r.returns);
        },
        py::arg("path"), py::arg("episodes") = 10, py::arg("seed") = 0);

  m.def("compute_ser", [](const py::list& run, const py::list& ref, double target) {
    return harness::compute_ser(rows_from(run), rows_from(ref), target);
  });
  m.def("compute_anr", [](const py::list& run, const py::list& cm, double target) {
    return harness::compute_anr(rows_from(run), rows_from(cm), target);
  });
}
