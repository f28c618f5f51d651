#pragma once

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "askac/nn.hpp"
#include "askac/rng.hpp"

namespace test {

// Central differences over every weight and bias of `params`.
inline askac::nn::GradBundle numeric_grad(askac::nn::MlpParams params,
                                          const std::function<double(const askac::nn::MlpParams&)>& f,
                                          double h = 1e-5) {
  auto g = askac::nn::GradBundle::zeros_like(params);
  auto probe = [&](double& slot, double& out) {
    const double keep = slot;
    slot = keep + h;
    const double up = f(params);
    slot = keep - h;
    const double down = f(params);
    slot = keep;
    out = (up - down) / (2.0 * h);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& w = params.layers[l].weight;
    for (Eigen::Index i = 0; i < w.size(); ++i) probe(w.data()[i], g.layers[l].weight.data()[i]);
    auto& b = params.layers[l].bias;
    for (Eigen::Index i = 0; i < b.size(); ++i) probe(b.data()[i], g.layers[l].bias.data()[i]);
  }
  return g;
}

inline std::vector<double> flatten(const askac::nn::GradBundle& g) {
  std::vector<double> v;
  for (const auto& l : g.layers) {
    v.insert(v.end(), l.weight.data(), l.weight.data() + l.weight.size());
    v.insert(v.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return v;
}

// Largest componentwise |a - n| / max(|a|, |n|), with components below `floor` in both
// treated as agreeing (FD noise dominates there).
inline double max_relative_error(const askac::nn::GradBundle& analytic,
                                 const askac::nn::GradBundle& numeric, double floor = 1e-7) {
  const auto a = flatten(analytic);
  const auto n = flatten(numeric);
  REQUIRE(a.size() == n.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max(std::abs(a[i]), std::abs(n[i]));
    if (scale < floor) continue;
    worst = std::max(worst, std::abs(a[i] - n[i]) / scale);
  }
  return worst;
}

inline double max_abs_diff(const askac::nn::GradBundle& x, const askac::nn::GradBundle& y) {
  const auto a = flatten(x);
  const auto b = flatten(y);
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline askac::nn::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, askac::Rng& rng,
                                       double scale = 1.0) {
  askac::nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

}  // namespace test
