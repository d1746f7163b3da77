#pragma once

#include <optional>
#include <span>
#include <string>

#include "oamnet/model.hpp"

namespace oamnet {

struct Timing {
  double mean_s = 0;    ///< per-sample wall time averaged over repetitions
  double stddev_s = 0;  ///< spread of the per-repetition means
  int repetitions = 0;
};

struct BenchReport {
  int n_samples = 0;
  int n_radial = 0;
  Timing simulator;
  std::optional<Timing> model;  ///< absent without a checkpoint
  std::optional<double> ratio;  ///< simulator / model

  std::string to_text() const;
};

/// Times the simulator and, when given, single-sample model inference on the
/// same parameter list.
BenchReport run_bench(std::span<const PhysicalParams> params, const spdc::SimConfig& sim,
                      Model<float>* model, int repetitions = 5);

}  // namespace oamnet
