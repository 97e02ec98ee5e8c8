#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "flowprune/io.hpp"
#include "flowprune/zoo.hpp"

namespace flowprune::testing {

inline Tensor gaussian(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (double& v : t.data) v = normal(rng);
  return t;
}

/// Kaiming weights plus small random biases, so bias terms are exercised.
inline ParamSet random_params(const NetworkSpec& spec, std::uint64_t seed, double bias_scale = 0.1) {
  ParamSet p = build_network(spec, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, bias_scale);
  for (auto& layer : p.layers) {
    for (double& v : layer.bias.data) v = normal(rng);
    for (double& v : layer.beta.data) v = normal(rng);
    for (double& v : layer.gamma.data) v = 1.0 + normal(rng);
  }
  return p;
}

/// Dense layer from explicit weights, stored as {out, in}.
inline ParamSet weights_only(const NetworkSpec& spec, const std::vector<std::vector<double>>& weights) {
  ParamSet p = build_network(spec, 0);
  std::size_t k = 0;
  for (std::size_t l : spec.prunable_layers()) p.layers[l].weight.data = weights.at(k++);
  return p;
}

inline double rel_err(double a, double b, double floor = 1e-30) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Largest coordinate-wise relative error between analytic gradients of `loss`
/// and central differences with step `h`. Only trainable slots are checked.
template <class LossFn>
double max_fd_error(const ParamSet& params, const GradientSet& analytic, LossFn loss, double h = 1e-5,
                    double floor = 1e-4) {
  ParamSet p = params;
  double worst = 0.0;
  for_each_trainable(p, analytic, [&](std::size_t, Tensor& t, const Tensor& g) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + h;
      const double up = loss(p);
      t[i] = saved - h;
      const double down = loss(p);
      t[i] = saved;
      worst = std::max(worst, rel_err((up - down) / (2 * h), g[i], floor));
    }
  });
  return worst;
}

}  // namespace flowprune::testing
