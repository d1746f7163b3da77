#pragma once

#include <array>
#include <random>

#include "spdc/optics.hpp"

namespace fixtures {

// Rows of the reconstructed-distribution parameter table.
inline spdc::PhysicalParams reference_row(int k) {
  static const std::array<spdc::PhysicalParams, 6> rows{{
      {0.021, 32.929, 3196.603, 142.043, 2, 4},
      {0.364, 32.985, 3494.908, 138.649, 4, 4},
      {1.501, 32.925, 890.232, 667.724, 0, 1},
      {5.364, 32.951, 997.411, 358.182, 2, 3},
      {0.510, 32.923, 2596.429, 134.738, 2, 3},
      {0.130, 32.990, 2316.258, 299.028, -2, 0},
  }};
  return rows.at(static_cast<std::size_t>(k));
}

inline Eigen::ArrayXXd random_distribution(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::ArrayXXd a(rows, cols);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = u(rng);
  return a / a.sum();
}

}  // namespace fixtures
