#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "nn/tensor.hpp"

namespace nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over every parameter, then clears the gradients.
/// A parameter that received no gradient is treated as having a zero one.
template <class S>
void adam_step(std::vector<Parameter<S>*>& params, const AdamConfig& cfg) {
  if (checked_mode()) {
    for (auto* p : params) {
      const auto& g = p->tensor.grad();
      if (g.size() && !g.allFinite()) {
        throw NonFiniteError("non-finite gradient in parameter " + p->name);
      }
    }
  }
  for (auto* p : params) {
    Array<S>& g = p->tensor.grad();
    ++p->step;
    const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
    p->m = b1 * p->m + (S(1) - b1) * g;
    p->v = b2 * p->v + (S(1) - b2) * g.square();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step));
    const S step = static_cast<S>(cfg.lr / c1);
    const S root_c2 = static_cast<S>(std::sqrt(c2));
    p->value() -= step * p->m / (p->v.sqrt() / root_c2 + static_cast<S>(cfg.eps));
    g.setZero();
  }
}

/// U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)) scaled by `gain`.
template <class S>
Array<S> kaiming_uniform(Eigen::Index n, int fan_in, std::mt19937_64& rng, double gain = 1.0) {
  const double bound = gain * std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  Array<S> a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = static_cast<S>(u(rng));
  return a;
}

template <class S>
Array<S> normal(Eigen::Index n, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  Array<S> a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = static_cast<S>(d(rng));
  return a;
}

}  // namespace nn
